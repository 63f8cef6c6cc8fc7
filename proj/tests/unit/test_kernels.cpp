#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mdprec/kernels.hpp"
#include "mdprec/rng.hpp"

using namespace mdprec;
using kernels::KernelTable;

namespace {

std::vector<double> randvec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// Reassociated sums differ from the sequential one by a few ulps of the
// absolute-value sum.
double reassoc_tol(const std::vector<double>& terms) {
  double mag = 0.0;
  for (double t : terms) mag += std::fabs(t);
  return 1e-14 * (1.0 + mag);
}

void check_against_scalar(const KernelTable& wide) {
  const KernelTable& ref = kernels::scalar_table();
  Rng rng(99);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 100u, 1001u}) {
    CAPTURE(n);
    const auto x = randvec(rng, n), y = randvec(rng, n);

    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i) prod[i] = x[i] * y[i];
    CHECK(std::fabs(ref.sum(x.data(), n) - wide.sum(x.data(), n)) <= reassoc_tol(x));
    CHECK(std::fabs(ref.dot(x.data(), y.data(), n) - wide.dot(x.data(), y.data(), n)) <= reassoc_tol(prod));

    std::vector<std::uint32_t> idx(n);
    const auto table = randvec(rng, 50);
    for (auto& i : idx) i = static_cast<std::uint32_t>(rng.below(50));
    std::vector<double> gprod(n);
    for (std::size_t i = 0; i < n; ++i) gprod[i] = x[i] * table[idx[i]];
    CHECK(std::fabs(ref.gather_dot(x.data(), idx.data(), table.data(), n) -
                    wide.gather_dot(x.data(), idx.data(), table.data(), n)) <= reassoc_tol(gprod));

    auto s1 = x, s2 = x;
    ref.scale(s1.data(), n, 0.3);
    wide.scale(s2.data(), n, 0.3);
    CHECK(s1 == s2);

    auto a1 = y, a2 = y;
    ref.axpy(0.7, x.data(), a1.data(), n);
    wide.axpy(0.7, x.data(), a2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(a1[i] - a2[i]) <= 1e-15 * (1.0 + std::fabs(a1[i])));

    // affine feeds the solver's backups and must match bit for bit.
    std::vector<double> o1(n), o2(n);
    ref.affine(x.data(), 0.95, y.data(), o1.data(), n);
    wide.affine(x.data(), 0.95, y.data(), o2.data(), n);
    CHECK(o1 == o2);

    CHECK(ref.max_abs_diff(x.data(), y.data(), n) == wide.max_abs_diff(x.data(), y.data(), n));
  }
}

}  // namespace

TEST_CASE("scalar reference kernels") {
  const KernelTable& k = kernels::scalar_table();
  const std::vector<double> x{1, 2, 3, 4, 5}, y{5, 4, 3, 2, 1};
  CHECK(k.sum(x.data(), 5) == 15.0);
  CHECK(k.dot(x.data(), y.data(), 5) == 35.0);
  const std::vector<std::uint32_t> idx{4, 4, 0};
  CHECK(k.gather_dot(x.data(), idx.data(), y.data(), 3) == 1 * 1 + 2 * 1 + 3 * 5);
  CHECK(k.max_abs_diff(x.data(), y.data(), 5) == 4.0);
  CHECK(k.max_abs_diff(x.data(), y.data(), 0) == 0.0);
  std::vector<double> out(5);
  k.affine(x.data(), 2.0, y.data(), out.data(), 5);
  CHECK(out == std::vector<double>{11, 10, 9, 8, 7});
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* wide = kernels::avx2_table();
  const auto names = kernels::available();
  if (!wide || names.size() < 2) {
    MESSAGE("avx2 variant not available on this machine; skipped");
    return;
  }
  check_against_scalar(*wide);
}

TEST_CASE("runtime selection") {
  const std::string before = kernels::active().name;
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("neon9000"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK(kernels::select("auto"));
  CHECK(kernels::select(before));
}

TEST_CASE("span wrappers and scatter") {
  std::vector<double> y(4, 0.0);
  const std::vector<double> x{1.0, 2.0};
  const std::vector<std::uint32_t> idx{3, 1};
  kernels::scatter_axpy(0.5, x, idx, y);
  CHECK(y == std::vector<double>{0.0, 1.0, 0.0, 0.5});
  CHECK(kernels::sum(y) == 1.5);
}
