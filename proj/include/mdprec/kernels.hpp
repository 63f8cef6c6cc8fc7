#pragma once

// Dense row kernels used by the model builders and the MDP solver.
//
// Every kernel has a scalar reference implementation. Wider variants
// (currently AVX2+FMA) are selected once at startup from CPU features, or
// forced with MDPREC_KERNELS=scalar|avx2. Variants agree with the reference
// up to floating-point reassociation.

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mdprec/kernel_table.hpp"

namespace mdprec::kernels {

const KernelTable& active();

// Names of the variants usable on this machine, reference first.
std::vector<std::string_view> available();

// Switches the active variant. Returns false if `name` is unknown or not
// supported by the CPU. "auto" restores the default choice.
bool select(std::string_view name);

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

inline void scale(std::span<double> x, double a) { active().scale(x.data(), x.size(), a); }

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(a, x.data(), y.data(), x.size());
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return active().dot(x.data(), y.data(), x.size());
}

// sum_i w[i] * table[idx[i]]
inline double gather_dot(std::span<const double> w, std::span<const std::uint32_t> idx,
                         std::span<const double> table) {
  assert(w.size() == idx.size());
  return active().gather_dot(w.data(), idx.data(), table.data(), w.size());
}

// out = r + g * v
inline void affine(std::span<const double> r, double g, std::span<const double> v, std::span<double> out) {
  assert(r.size() == v.size() && r.size() == out.size());
  active().affine(r.data(), g, v.data(), out.data(), r.size());
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().max_abs_diff(a.data(), b.data(), a.size());
}

// y[idx[i]] += a * x[i]. Scalar on every target: AVX2 has no scatter.
inline void scatter_axpy(double a, std::span<const double> x, std::span<const std::uint32_t> idx,
                         std::span<double> y) {
  assert(x.size() == idx.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[idx[i]] += a * x[i];
}

}  // namespace mdprec::kernels
