#include <cmath>

#include "mdprec/kernel_table.hpp"

namespace mdprec::kernels {
namespace {

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void scale_scalar(double* x, std::size_t n, double a) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double gather_dot_scalar(const double* w, const std::uint32_t* idx, const double* table, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * table[idx[i]];
  return s;
}

void affine_scalar(const double* r, double g, const double* v, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = r[i] + g * v[i];
}

double max_abs_diff_scalar(const double* a, const double* b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

constexpr KernelTable kScalar{
    "scalar",     sum_scalar,      scale_scalar, axpy_scalar, dot_scalar, gather_dot_scalar,
    affine_scalar, max_abs_diff_scalar,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace mdprec::kernels
