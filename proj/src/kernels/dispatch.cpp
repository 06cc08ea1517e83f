#include <atomic>
#include <cstdlib>
#include <string>

#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace pos::kernels {

// defined in avx2.cpp; nullptr when the variant was not compiled in
const KernelTable* avx2_table_unchecked() noexcept;

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* best() noexcept {
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable* initial() noexcept {
  const char* env = std::getenv("POS_KERNELS");
  if (env && std::string(env) == "scalar") return &scalar_table();
  return best();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() noexcept {
  static const KernelTable* t = cpu_has_avx2() ? avx2_table_unchecked() : nullptr;
  return t;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
  } else if (name == "avx2") {
    const KernelTable* t = avx2_table();
    if (!t) throw InvalidInput("AVX2 kernels are not available on this machine");
    current().store(t);
  } else if (name == "auto") {
    current().store(best());
  } else {
    throw InvalidInput("unknown kernel variant '" + std::string(name) + "'");
  }
}

}  // namespace pos::kernels
