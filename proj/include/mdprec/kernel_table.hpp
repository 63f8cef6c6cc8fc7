#pragma once

// Raw-pointer kernel signatures shared by every ISA variant. Kept free of
// standard-library templates so ISA-specific translation units never emit
// inline code the linker could pick for the generic build.

#include <cstddef>
#include <cstdint>

namespace mdprec::kernels {

struct KernelTable {
  const char* name;
  double (*sum)(const double* x, std::size_t n);
  void (*scale)(double* x, std::size_t n, double a);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*gather_dot)(const double* w, const std::uint32_t* idx, const double* table, std::size_t n);
  void (*affine)(const double* r, double g, const double* v, double* out, std::size_t n);
  double (*max_abs_diff)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

}  // namespace mdprec::kernels
