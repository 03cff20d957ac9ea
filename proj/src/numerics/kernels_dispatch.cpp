#include <cstdlib>
#include <stdexcept>
#include <string>

#include "forge/numerics/kernels.hpp"

namespace forge::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("FORGE_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
  }
  if (isa_supported(Isa::Avx2)) return Isa::Avx2;
  return Isa::Scalar;
}

struct Active {
  Isa isa;
  const KernelTable* table;
};

Active& current() {
  static Active active = [] {
    const Isa isa = detect();
    return Active{isa, &table(isa)};
  }();
  return active;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(FORGE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
  }
#if defined(FORGE_HAVE_AVX2)
  if (isa == Isa::Avx2) return avx2::kTable;
#endif
  return scalar::kTable;
}

const KernelTable& active() { return *current().table; }

Isa active_isa() { return current().isa; }

void set_active_isa(Isa isa) { current() = Active{isa, &table(isa)}; }

}  // namespace forge::kernels
