"""Independent value-iteration oracle for tests/fixtures/tiny_events.csv.

Counts order-1 transitions (including the first pick out of the empty
state), boosts by alpha, and runs plain value iteration to 1e-13.
Writes tests/fixtures/tiny_oracle.json.
"""
import csv
import json
import sys
from collections import defaultdict

ALPHA, GAMMA = 1.5, 0.95
fix = sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures"

events = defaultdict(list)
for i, r in enumerate(csv.DictReader(open(f"{fix}/tiny_events.csv"))):
    events[r["user"]].append((int(r["ts"]), i, r["item"]))
seqs = [[it for _, _, it in sorted(ev)] for ev in events.values()]
rewards = {r["item"]: float(r["reward"]) for r in csv.DictReader(open(f"{fix}/tiny_profits.csv"))}
items = sorted({x for s in seqs for x in s})

counts = defaultdict(lambda: defaultdict(float))
for s in seqs:
    prev = None
    for x in s:
        counts[prev][x] += 1
        prev = x
rows = {s: {x: c / sum(r.values()) for x, c in r.items()} for s, r in counts.items()}


def boosted(row, a):
    q = row.get(a, 0.0)
    rec = min(ALPHA * q, 1.0)
    beta = (1 - rec) / (1 - q) if q < 1 else 0.0
    return {x: (rec if x == a else p * beta) for x, p in row.items()}


def q_value(s, a, v):
    total = 0.0
    for x, p in boosted(rows[s], a).items():
        nxt = v[x] if x in rows else rewards[x]
        total += p * (rewards[x] + GAMMA * nxt)
    return total


v = {s: 0.0 for s in rows}
while True:
    nv = {s: max(q_value(s, a, v) for a in items) for s in rows}
    diff = max(abs(nv[s] - v[s]) for s in rows)
    v = nv
    if diff < 1e-13:
        break
policy = {}
for s in rows:
    qs = [q_value(s, a, v) for a in items]
    best = max(qs)
    policy[s] = next(a for a, qv in zip(items, qs) if qv >= best - 1e-12)

out = {"alpha": ALPHA, "gamma": GAMMA,
       "states": [{"state": [s], "value": v[s], "action": policy[s]} for s in sorted(rows, key=lambda s: (s is not None, s))]}
json.dump(out, open(f"{fix}/tiny_oracle.json", "w"), indent=1)
