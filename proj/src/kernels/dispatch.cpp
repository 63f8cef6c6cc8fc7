#include <atomic>
#include <cstdlib>
#include <string_view>
#include <vector>

#include "mdprec/kernels.hpp"

namespace mdprec::kernels {

#ifndef MDPREC_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* usable_avx2() { return cpu_has_avx2() ? avx2_table() : nullptr; }

const KernelTable* lookup(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return usable_avx2();
  if (name == "auto") {
    const KernelTable* wide = usable_avx2();
    return wide ? wide : &scalar_table();
  }
  return nullptr;
}

const KernelTable* initial_choice() {
  if (const char* env = std::getenv("MDPREC_KERNELS")) {
    if (const KernelTable* t = lookup(env)) return t;
  }
  return lookup("auto");
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{initial_choice()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

std::vector<std::string_view> available() {
  std::vector<std::string_view> names{"scalar"};
  if (usable_avx2()) names.emplace_back("avx2");
  return names;
}

bool select(std::string_view name) {
  const KernelTable* t = lookup(name);
  if (!t) return false;
  slot().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace mdprec::kernels
