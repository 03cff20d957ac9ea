#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "forge/numerics/kernels.hpp"
#include "forge/numerics/rng.hpp"

using namespace forge;
using forge::kernels::Isa;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// FMA contraction and lane-wise summation reorder the arithmetic, so SIMD
// results are compared against the scalar reference with a relative bound.
void check_close(const std::vector<float>& ref, const std::vector<float>& got, double k) {
  REQUIRE(ref.size() == got.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double tol = 1e-5 * std::max(1.0, std::sqrt(k)) * std::max(1.0, std::abs(double(ref[i])));
    CHECK(std::abs(double(ref[i]) - double(got[i])) <= tol);
  }
}

}  // namespace

TEST_CASE("scalar is always available and the active table is valid") {
  CHECK(kernels::isa_supported(Isa::Scalar));
  CHECK(kernels::active().gemm_nn != nullptr);
  MESSAGE("active ISA: " << kernels::isa_name(kernels::active_isa()));
}

TEST_CASE("scalar gemm reference against naive triple loop") {
  Rng rng(1);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
  std::vector<float> c(m * n, 0.0f);
  kernels::table(Isa::Scalar).gemm_nn(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += double(a[i * k + p]) * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("SIMD variants match the scalar reference") {
  if (!kernels::isa_supported(Isa::Avx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const auto& ref = kernels::table(Isa::Scalar);
  const auto& simd = kernels::table(Isa::Avx2);
  Rng rng(7);
  // odd sizes exercise the vector tails
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 16, 8}, {17, 33, 9}, {4, 64, 259}, {31, 9, 65}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    {
      auto a = random_vec(rng, m * k), b = random_vec(rng, k * n), c0 = random_vec(rng, m * n);
      auto c1 = c0;
      ref.gemm_nn(m, n, k, a.data(), b.data(), c0.data());
      simd.gemm_nn(m, n, k, a.data(), b.data(), c1.data());
      check_close(c0, c1, double(k));
    }
    {
      auto a = random_vec(rng, m * k), b = random_vec(rng, n * k), c0 = random_vec(rng, m * n);
      auto c1 = c0;
      ref.gemm_nt(m, n, k, a.data(), b.data(), c0.data());
      simd.gemm_nt(m, n, k, a.data(), b.data(), c1.data());
      check_close(c0, c1, double(k));
    }
    {
      auto a = random_vec(rng, k * m), b = random_vec(rng, k * n), c0 = random_vec(rng, m * n);
      auto c1 = c0;
      ref.gemm_tn(m, n, k, a.data(), b.data(), c0.data());
      simd.gemm_tn(m, n, k, a.data(), b.data(), c1.data());
      check_close(c0, c1, double(k));
    }
  }
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 17u, 100u, 1000u}) {
    auto x = random_vec(rng, n), y = random_vec(rng, n);
    CHECK(simd.dot(x.data(), y.data(), n) ==
          doctest::Approx(ref.dot(x.data(), y.data(), n)).epsilon(1e-4).scale(1.0));
    CHECK(simd.sumsq(x.data(), n) == doctest::Approx(ref.sumsq(x.data(), n)).epsilon(1e-12));
    auto y0 = y, y1 = y;
    ref.axpy(0.37f, x.data(), y0.data(), n);
    simd.axpy(0.37f, x.data(), y1.data(), n);
    check_close(y0, y1, 1.0);
  }
}

TEST_CASE("set_active_isa round trip") {
  const Isa before = kernels::active_isa();
  kernels::set_active_isa(Isa::Scalar);
  CHECK(kernels::active_isa() == Isa::Scalar);
  kernels::set_active_isa(before);
  CHECK(kernels::active_isa() == before);
}
