#pragma once

// Dense f32 inner-loop kernels. Every kernel has a scalar reference
// implementation; SIMD variants are picked once at startup from what the CPU
// reports and can be pinned with FORGE_SIMD={scalar,avx2}.

#include <cstddef>
#include <string_view>

namespace forge::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// All matrix kernels accumulate into c (c += ...), row-major, no aliasing.
struct KernelTable {
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  const float* b, float* c);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  const float* b, float* c);
  // c[m x n] += a[k x m]^T * b[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  const float* b, float* c);
  float (*dot)(const float* x, const float* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // sum of squares, accumulated in double
  double (*sumsq)(const float* x, std::size_t n);
};

bool isa_supported(Isa isa);

// Table for a specific ISA. Throws if the ISA is not compiled in or not
// supported by this CPU.
const KernelTable& table(Isa isa);

// The table used by the tensor ops.
const KernelTable& active();
Isa active_isa();

// Switches the active table. Not thread-safe; intended for tests and startup.
void set_active_isa(Isa isa);

namespace scalar {
extern const KernelTable kTable;
}

#if defined(FORGE_HAVE_AVX2)
namespace avx2 {
extern const KernelTable kTable;
}
#endif

}  // namespace forge::kernels
