#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../support/gradcheck.hpp"
#include "forge/error.hpp"
#include "forge/numerics/ops.hpp"
#include "forge/numerics/optim.hpp"

using namespace forge;
using forge::testing::check_op;
using forge::testing::random_tensor;

namespace {

constexpr double kOpTol = 1e-3;

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul basics") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(eye, m)) == std::vector<float>{1, 2, 3, 4});
  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0f);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("x [2x3]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(AB) wrt A is row-broadcast of B row sums") {
  Rng rng(3);
  Tensor a = random_tensor(rng, {3, 4}, true);
  Tensor b = random_tensor(rng, {4, 5}, false);
  backward(sum(matmul(a, b)));
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 4; ++p) {
      float rs = 0.0f;
      for (int j = 0; j < 5; ++j) rs += b.at(p, j);
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(rs).epsilon(1e-5));
    }
  }
  // and against central differences
  Rng rng2(4);
  auto res = check_op([](std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                      {random_tensor(rng2, {3, 4}, true), random_tensor(rng2, {4, 5}, true)}, rng2);
  CHECK_MESSAGE(res.max_rel_err < kOpTol, res.worst);
}

TEST_CASE("softmax") {
  CHECK(values(softmax(Tensor::from({2}, {0, 0}), 0)) == std::vector<float>{0.5f, 0.5f});
  auto big = values(softmax(Tensor::from({2}, {1000, 0}), 0));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big[0]));
  CHECK_THROWS_AS(softmax(Tensor::from({2}, {NAN, 0}), 0), Error);

  Rng rng(11);
  for (int axis : {0, 1}) {
    Tensor x = random_tensor(rng, {3, 4}, false, 3.0);
    Tensor y = softmax(x, axis);
    const int outer = axis == 0 ? 4 : 3;
    const int n = axis == 0 ? 3 : 4;
    for (int o = 0; o < outer; ++o) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const float v = axis == 0 ? y.at(i, o) : y.at(o, i);
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-5);
    }
    auto res = check_op([axis](std::vector<Tensor>& in) { return softmax(in[0], axis); },
                        {random_tensor(rng, {3, 4}, true)}, rng);
    CHECK_MESSAGE(res.max_rel_err < kOpTol, res.worst);
  }
}

TEST_CASE("cross_entropy") {
  const std::int64_t ignore = -100;
  Tensor uniform = Tensor::zeros({1, 4});
  std::vector<std::int64_t> t1{2};
  CHECK(cross_entropy(uniform, t1, ignore).item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  Tensor peaked = Tensor::from({1, 4}, {0, 0, 30, 0});
  CHECK(cross_entropy(peaked, t1, ignore).item() < 1e-3f);

  // masking half the targets gives the mean over the kept half
  Rng rng(5);
  Tensor logits = random_tensor(rng, {4, 6}, false);
  std::vector<std::int64_t> all{1, 3, 0, 5};
  std::vector<std::int64_t> half{1, ignore, 0, ignore};
  auto row_nll = [&](int r, int t) {
    double mx = -1e30, z = 0.0;
    for (int j = 0; j < 6; ++j) mx = std::max(mx, static_cast<double>(logits.at(r, j)));
    for (int j = 0; j < 6; ++j) z += std::exp(logits.at(r, j) - mx);
    return std::log(z) + mx - logits.at(r, t);
  };
  const double expected_half = (row_nll(0, 1) + row_nll(2, 0)) / 2.0;
  const double expected_all = (row_nll(0, 1) + row_nll(1, 3) + row_nll(2, 0) + row_nll(3, 5)) / 4.0;
  CHECK(cross_entropy(logits, half, ignore).item() == doctest::Approx(expected_half).epsilon(1e-6));
  CHECK(cross_entropy(logits, all, ignore).item() == doctest::Approx(expected_all).epsilon(1e-6));

  std::vector<std::int64_t> none{ignore, ignore, ignore, ignore};
  CHECK_THROWS_AS(cross_entropy(logits, none, ignore), DegenerateBatchError);
  std::vector<std::int64_t> bad{1, 6, 0, 0};
  CHECK_THROWS_AS(cross_entropy(logits, bad, ignore), IndexError);

  // masked rows get exactly zero gradient
  Tensor lg = logits.clone_leaf(true);
  backward(cross_entropy(lg, half, ignore));
  for (int j = 0; j < 6; ++j) {
    CHECK(lg.grad()[6 + j] == 0.0f);
    CHECK(lg.grad()[18 + j] == 0.0f);
  }

  auto res = check_op(
      [&](std::vector<Tensor>& in) { return cross_entropy(in[0], half, ignore); },
      {random_tensor(rng, {4, 6}, true)}, rng);
  CHECK_MESSAGE(res.max_rel_err < kOpTol, res.worst);
}

TEST_CASE("backward") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tensor unreachable = Tensor::from({2}, {1, 1}, true);
  backward(sum(x));
  CHECK(values(Tensor::from({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})) ==
        std::vector<float>{1, 1, 1});
  CHECK_FALSE(unreachable.has_grad());

  // accumulation until zeroed
  backward(sum(x));
  CHECK(x.grad()[0] == 2.0f);
  x.zero_grad();
  backward(sum(x));
  CHECK(x.grad()[0] == 1.0f);

  CHECK_THROWS_AS(backward(x), DimensionError);
}

TEST_CASE("backward twice on the same graph is deterministic") {
  Rng rng(21);
  Tensor w = random_tensor(rng, {4, 4}, true);
  Tensor g = Tensor::full({4}, 1.0f, true);
  Tensor b = Tensor::zeros({4}, true);
  Tensor x = random_tensor(rng, {3, 4}, false);
  Tensor loss = sum(gelu(layer_norm(matmul(x, w), g, b)));
  backward(loss);
  std::vector<float> first(w.grad().begin(), w.grad().end());
  w.zero_grad();
  g.zero_grad();
  b.zero_grad();
  backward(loss);
  std::vector<float> second(w.grad().begin(), w.grad().end());
  CHECK(first == second);
}

TEST_CASE("tape is topological and visits each node once") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = mul(x, x);
  Tensor z = add(y, x);
  Tensor loss = sum(z);
  auto tape = build_tape(loss);
  REQUIRE(tape.size() == 4);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const auto& in : tape[i]->inputs) {
      auto pos = std::find(tape.begin(), tape.end(), in.get());
      REQUIRE(pos != tape.end());
      CHECK(pos < tape.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  backward(loss);
  CHECK(x.grad()[0] == 3.0f);  // 2x + 1
  CHECK(x.grad()[1] == 5.0f);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = sum(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("finite-difference checks for every differentiable op") {
  Rng rng(1234);
  auto run = [&](const char* name, const std::function<Tensor(std::vector<Tensor>&)>& f,
                 std::vector<Tensor> in) {
    auto res = check_op(f, std::move(in), rng);
    const std::string where = std::string(name) + ": " + res.worst;
    INFO(where);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_err < kOpTol);
  };
  run("matmul_nt", [](auto& in) { return matmul_nt(in[0], in[1]); },
      {random_tensor(rng, {3, 4}, true), random_tensor(rng, {5, 4}, true)});
  run("linear", [](auto& in) { return linear(in[0], in[1], in[2]); },
      {random_tensor(rng, {3, 4}, true), random_tensor(rng, {2, 4}, true),
       random_tensor(rng, {2}, true)});
  run("transpose", [](auto& in) { return transpose(in[0]); }, {random_tensor(rng, {3, 2}, true)});
  run("add", [](auto& in) { return add(in[0], in[1]); },
      {random_tensor(rng, {2, 3}, true), random_tensor(rng, {2, 3}, true)});
  run("sub", [](auto& in) { return sub(in[0], in[1]); },
      {random_tensor(rng, {2, 3}, true), random_tensor(rng, {2, 3}, true)});
  run("mul", [](auto& in) { return mul(in[0], in[1]); },
      {random_tensor(rng, {2, 3}, true), random_tensor(rng, {2, 3}, true)});
  run("scale", [](auto& in) { return scale(in[0], -1.5f); }, {random_tensor(rng, {2, 3}, true)});
  run("add_bias", [](auto& in) { return add_bias(in[0], in[1]); },
      {random_tensor(rng, {3, 4}, true), random_tensor(rng, {4}, true)});
  run("mean", [](auto& in) { return mean(in[0]); }, {random_tensor(rng, {3, 4}, true)});
  run("reshape", [](auto& in) { return reshape(in[0], {6, 2}); }, {random_tensor(rng, {3, 4}, true)});
  run("concat0", [](auto& in) { return concat(std::span<const Tensor>(in.data(), 2), 0); },
      {random_tensor(rng, {2, 3}, true), random_tensor(rng, {1, 3}, true)});
  run("concat1", [](auto& in) { return concat(std::span<const Tensor>(in.data(), 2), 1); },
      {random_tensor(rng, {2, 3}, true), random_tensor(rng, {2, 2}, true)});
  run("slice0", [](auto& in) { return slice(in[0], 0, 1, 3); }, {random_tensor(rng, {4, 3}, true)});
  run("slice1", [](auto& in) { return slice(in[0], 1, 1, 3); }, {random_tensor(rng, {4, 3}, true)});
  run("embedding_lookup",
      [](auto& in) {
        const std::int64_t ids[] = {2, 0, 2, 1};
        return embedding_lookup(in[0], ids);
      },
      {random_tensor(rng, {3, 4}, true)});
  run("layer_norm", [](auto& in) { return layer_norm(in[0], in[1], in[2]); },
      {random_tensor(rng, {3, 5}, true), random_tensor(rng, {5}, true),
       random_tensor(rng, {5}, true)});
  run("gelu", [](auto& in) { return gelu(in[0]); }, {random_tensor(rng, {3, 4}, true)});
  run("unfold_frames", [](auto& in) { return unfold_frames(in[0], 3, 2, 1); },
      {random_tensor(rng, {5, 2}, true)});
}

TEST_CASE("unfold_frames geometry") {
  for (std::int64_t t = 1; t < 12; ++t) {
    Tensor x = Tensor::zeros({t, 2});
    CHECK(unfold_frames(x, 3, 2, 1).dim(0) == (t + 1) / 2);
  }
  Tensor x = Tensor::from({3, 1}, {1, 2, 3});
  Tensor u = unfold_frames(x, 3, 2, 1);
  CHECK(values(u) == std::vector<float>{0, 1, 2, 2, 3, 0});
}

TEST_CASE("adamw") {
  SUBCASE("one step from zero state matches the hand-computed update") {
    Tensor p = Tensor::from({1}, {0.5f}, true);
    AdamW opt({{"p", p}}, AdamWConfig{});
    p.mutable_grad()[0] = 0.2f;
    opt.step();
    const double lr = 1e-3, wd = 0.01, g = 0.2, eps = 1e-8;
    const double expected = 0.5 - lr * wd * 0.5 - lr * g / (std::sqrt(g * g) + eps);
    CHECK(p.data()[0] == doctest::Approx(expected).epsilon(1e-7));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("frozen parameters are untouched bitwise") {
    Tensor live = Tensor::from({2}, {1.0f, -1.0f}, true);
    Tensor frozen = Tensor::from({2}, {0.123f, 4.56f}, false);
    AdamW opt({{"live", live}, {"frozen", frozen}}, AdamWConfig{});
    live.mutable_grad()[0] = 1.0f;
    live.mutable_grad()[1] = 1.0f;
    opt.step();
    CHECK(frozen.data()[0] == 0.123f);
    CHECK(frozen.data()[1] == 4.56f);
  }
  SUBCASE("identical params with identical grads move identically") {
    Tensor a = Tensor::from({3}, {0.1f, 0.2f, 0.3f}, true);
    Tensor b = Tensor::from({3}, {0.1f, 0.2f, 0.3f}, true);
    AdamW opt({{"a", a}, {"b", b}}, AdamWConfig{});
    for (int s = 0; s < 5; ++s) {
      for (int i = 0; i < 3; ++i) {
        a.mutable_grad()[i] = 0.1f * static_cast<float>(i + s);
        b.mutable_grad()[i] = 0.1f * static_cast<float>(i + s);
      }
      opt.step();
    }
    CHECK(values(a) == values(b));
  }
  SUBCASE("missing grad on trainable param is an error") {
    Tensor p = Tensor::from({1}, {0.5f}, true);
    AdamW opt({{"p", p}}, AdamWConfig{});
    CHECK_THROWS_AS(opt.step(), Error);
  }
}

TEST_CASE("clip_grad_norm") {
  Tensor p = Tensor::from({2}, {0, 0}, true);
  p.mutable_grad()[0] = 3.0f;
  p.mutable_grad()[1] = 4.0f;
  ParameterList ps{{"p", p}};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(p.grad()[0] == doctest::Approx(0.6));
  CHECK(p.grad()[1] == doctest::Approx(0.8));
}
