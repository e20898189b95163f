#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "anmt/adam.hpp"
#include "anmt/checkpoint.hpp"
#include "anmt/param_store.hpp"
#include "anmt/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace anmt;

namespace {

Tensor<double> random_matrix(ParameterStore<double>& ps, const std::string& name, std::size_t r,
                             std::size_t c, Rng& rng) {
  auto& t = ps.create(name, {r, c});
  for (auto& v : t.value()) v = rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, a);
  CHECK(r.value() == std::vector<double>{1, 2, 3, 4});

  auto proj = Tensor<double>::from({2, 2}, {1, 0, 0, 0});
  auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
  auto r2 = matmul(proj, b);
  CHECK(r2.value() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2 x 3]"), std::invalid_argument);
}

TEST_CASE("matmul gradients match central finite differences") {
  Rng rng(7);
  ParameterStore<double> ps;
  auto a = random_matrix(ps, "a", 3, 4, rng);
  auto b = random_matrix(ps, "b", 4, 2, rng);
  auto loss_fn = [&]() {
    NoGradGuard ng;
    return sum_all(matmul(a, b)).item();
  };
  ps.zero_grads();
  backward(sum_all(matmul(a, b)));
  auto res = testsupport::check_gradients(ps, loss_fn);
  CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("matmul_nt gradients match central finite differences") {
  Rng rng(11);
  ParameterStore<double> ps;
  auto a = random_matrix(ps, "a", 3, 4, rng);
  auto b = random_matrix(ps, "b", 5, 4, rng);
  // weigh elements unevenly so transposition mistakes cannot cancel
  auto w = Tensor<double>::zeros({3, 5});
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.1 * static_cast<double>(i + 1);
  auto loss = [&]() {
    auto prod = matmul_nt(a, b);
    auto weighted = Tensor<double>::zeros({3, 5});
    for (std::size_t i = 0; i < weighted.size(); ++i) {
      weighted.data()[i] = prod.data()[i];
    }
    return sum_all(matmul_nt(prod, w));  // prod * w^T mixes entries
  };
  ps.zero_grads();
  backward(loss());
  auto res = testsupport::check_gradients(ps, [&]() {
    NoGradGuard ng;
    return loss().item();
  });
  CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("softmax basics") {
  auto r = softmax_rows(Tensor<double>::from({1, 2}, {0, 0}));
  CHECK(r.at(0, 0) == doctest::Approx(0.5));
  CHECK(r.at(0, 1) == doctest::Approx(0.5));

  auto big = softmax_rows(Tensor<double>::from({1, 3}, {1000, 1000, 1000}));
  for (int j = 0; j < 3; ++j) {
    CHECK(std::isfinite(big.at(0, static_cast<std::size_t>(j))));
    CHECK(big.at(0, static_cast<std::size_t>(j)) == doctest::Approx(1.0 / 3.0));
  }

  auto logs = softmax_rows(
      Tensor<double>::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(logs.at(0, 0) == doctest::Approx(1.0 / 6.0));
  CHECK(logs.at(0, 1) == doctest::Approx(2.0 / 6.0));
  CHECK(logs.at(0, 2) == doctest::Approx(3.0 / 6.0));
}

TEST_CASE("softmax rows sum to one for arbitrary finite inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t d = 1 + rng.below(40);
    auto x = Tensor<float>::zeros({n, d});
    for (auto& v : x.value()) {
      v = static_cast<float>(rng.uniform(-50.0, 50.0));
    }
    auto y = softmax_rows(x);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += y.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm values") {
  auto gain = Tensor<double>::from({3}, {1, 1, 1});
  auto bias = Tensor<double>::from({3}, {0, 0, 0});
  auto constant = layer_norm_rows(Tensor<double>::from({1, 3}, {5, 5, 5}), gain, bias);
  for (int j = 0; j < 3; ++j) {
    CHECK(constant.at(0, static_cast<std::size_t>(j)) == doctest::Approx(0.0));
  }

  auto gain2 = Tensor<double>::from({2}, {1, 1});
  auto bias2 = Tensor<double>::from({2}, {0, 0});
  auto two = layer_norm_rows(Tensor<double>::from({1, 2}, {1, 3}), gain2, bias2);
  CHECK(two.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(two.at(0, 1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("layer_norm gradients match central finite differences") {
  Rng rng(13);
  ParameterStore<double> ps;
  auto x = random_matrix(ps, "x", 3, 6, rng);
  auto g = ps.create("g", {6});
  for (auto& v : g.value()) v = rng.uniform(0.5, 1.5);
  auto b = ps.create("b", {6});
  for (auto& v : b.value()) v = rng.uniform(-0.5, 0.5);
  auto w = Tensor<double>::zeros({3, 6});
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = std::sin(static_cast<double>(i));
  auto loss = [&]() {
    auto y = layer_norm_rows(x, g, b);
    // multiply elementwise by fixed weights via matmul_nt against diag trick:
    // simpler: weighted sum through softmax-free path
    double acc = 0.0;
    (void)acc;
    return sum_all(matmul_nt(y, w));
  };
  ps.zero_grads();
  backward(loss());
  auto res = testsupport::check_gradients(ps, [&]() {
    NoGradGuard ng;
    return loss().item();
  });
  CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("cross_entropy on uniform and confident logits") {
  const std::size_t V = 50;
  auto logits = Tensor<double>::zeros({1, V});
  auto loss = cross_entropy(logits, {7});
  CHECK(loss.item() == doctest::Approx(std::log(50.0)));
  CHECK(std::exp(loss.item()) == doctest::Approx(50.0));

  // one-hot-correct logits: loss tends to zero as the margin grows
  double prev = 1e9;
  for (double margin : {2.0, 8.0, 32.0}) {
    auto l = Tensor<double>::zeros({1, 5});
    l.at(0, 2) = margin;
    const double v = cross_entropy(l, {2}).item();
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("cross_entropy matches hand-summed log softmax") {
  Rng rng(5);
  auto logits = Tensor<double>::zeros({2, 3});
  for (auto& v : logits.value()) v = rng.uniform(-2.0, 2.0);
  const std::vector<int> targets = {2, 0};
  double expected = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < 3; ++j) denom += std::exp(logits.at(i, j));
    expected += -std::log(std::exp(logits.at(i, static_cast<std::size_t>(targets[i]))) / denom);
  }
  expected /= 2.0;
  CHECK(cross_entropy(logits, targets).item() == doctest::Approx(expected));
}

TEST_CASE("cross_entropy rejects out-of-range targets") {
  auto logits = Tensor<double>::zeros({1, 3});
  CHECK_THROWS_AS(cross_entropy(logits, {3}), std::out_of_range);
}

TEST_CASE("backward on simple graphs") {
  ParameterStore<double> ps;
  auto& x = ps.create("x", {1, 1});
  x.value()[0] = 3.0;
  ps.zero_grads();
  backward(matmul_nt(x, x));  // x * x
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  // sum of a softmax is constant, so the gradient vanishes
  auto& y = ps.create("y", {1, 4});
  y.value() = {0.3, -1.0, 2.0, 0.1};
  ps.zero_grads();
  backward(sum_all(softmax_rows(y)));
  for (double g : y.grad()) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("backward requires a scalar") {
  auto x = Tensor<double>::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(x), std::invalid_argument);
}

TEST_CASE("unreached parameters keep zero gradients") {
  ParameterStore<double> ps;
  auto& used = ps.create("used", {1, 2});
  used.value() = {1.0, 2.0};
  auto& unused = ps.create("unused", {1, 2});
  unused.value() = {5.0, 5.0};
  ps.zero_grads();
  backward(sum_all(relu(used)));
  CHECK(used.grad() == std::vector<double>{1.0, 1.0});
  CHECK(unused.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam fixed point, first step and hand recurrence") {
  ParameterStore<double> ps;
  auto& p = ps.create("p", {2});
  p.value() = {1.0, -2.0};
  AdamState<double> state;
  state.cfg.lr = 1e-3;

  // zero gradient from a fresh state leaves the parameter unchanged
  ps.zero_grads();
  adam_step(ps, state);
  CHECK(p.value()[0] == doctest::Approx(1.0));
  CHECK(p.value()[1] == doctest::Approx(-2.0));
  CHECK(state.t == 1);

  // first effective step has magnitude lr, for any nonzero gradient
  ParameterStore<double> ps2;
  auto& q = ps2.create("q", {1});
  q.value() = {0.5};
  AdamState<double> st2;
  st2.cfg.lr = 1e-3;
  q.grad() = {0.37};
  adam_step(ps2, st2);
  CHECK(std::abs(0.5 - q.value()[0]) == doctest::Approx(1e-3).epsilon(1e-4));

  // two constant-gradient steps match the unrolled recurrence
  ParameterStore<double> ps3;
  auto& r = ps3.create("r", {1});
  r.value() = {0.0};
  AdamState<double> st3;
  const double lr = st3.cfg.lr, b1 = st3.cfg.beta1, b2 = st3.cfg.beta2, eps = st3.cfg.eps;
  const double g = -0.8;
  double m = 0.0, v = 0.0, theta = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
    r.grad() = {g};
    adam_step(ps3, st3);
  }
  CHECK(r.value()[0] == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("adam aborts on NaN gradient naming the parameter") {
  ParameterStore<double> ps;
  auto& p = ps.create("enc/bad_param", {1});
  p.value() = {1.0};
  AdamState<double> state;
  p.grad() = {std::nan("")};
  CHECK_THROWS_WITH_AS(adam_step(ps, state), doctest::Contains("enc/bad_param"),
                       std::runtime_error);
}

TEST_CASE("forward and backward are deterministic given identical inputs") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    ParameterStore<float> ps;
    auto& a = ps.create("a", {4, 4});
    for (auto& v : a.value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto& b = ps.create("b", {4, 4});
    for (auto& v : b.value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    ps.zero_grads();
    auto loss = sum_all(softmax_rows(matmul(a, b)));
    backward(loss);
    return std::make_pair(loss.item(), a.grad());
  };
  auto [l1, g1] = run(42);
  auto [l2, g2] = run(42);
  CHECK(std::memcmp(&l1, &l2, sizeof(l1)) == 0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint save/load round-trip is bit exact") {
  Rng rng(99);
  ParameterStore<float> ps;
  auto& a = ps.create("model/w1", {3, 5});
  for (auto& v : a.value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  auto& b = ps.create("model/b1", {5});
  for (auto& v : b.value()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const std::string path = (std::filesystem::temp_directory_path() / "anmt_ckpt_test.bin").string();
  save_checkpoint(path, ps, "{\"component\":\"test\"}");
  auto [loaded, info] = load_checkpoint<float>(path);
  CHECK(info.precision == 4);
  CHECK(info.meta == "{\"component\":\"test\"}");
  CHECK(loaded.names() == ps.names());
  for (const auto& name : ps.names()) {
    const auto& orig = ps.get(name).value();
    const auto& got = loaded.get(name).value();
    REQUIRE(orig.size() == got.size());
    CHECK(std::memcmp(orig.data(), got.data(), orig.size() * sizeof(float)) == 0);
  }
  CHECK_THROWS_AS(load_checkpoint<double>(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("gather, concat and slice round trips with gradients") {
  Rng rng(21);
  ParameterStore<double> ps;
  auto table = random_matrix(ps, "table", 5, 4, rng);
  const std::vector<int> ids = {4, 0, 2, 2};
  auto weights = Tensor<double>::zeros({8, 4});
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights.data()[i] = std::cos(0.7 * static_cast<double>(i));
  }
  auto loss = [&]() {
    auto rows = gather_rows(table, ids);
    auto left = slice_cols(rows, 0, 2);
    auto right = slice_cols(rows, 2, 2);
    auto rejoined = concat_cols<double>({right, left});
    auto stacked = concat_rows<double>({rejoined, rejoined});
    return sum_all(matmul_nt(softmax_rows(stacked), weights));
  };
  ps.zero_grads();
  backward(loss());
  auto res = testsupport::check_gradients(ps, [&]() {
    NoGradGuard ng;
    return loss().item();
  });
  CHECK(res.max_rel_err <= 1e-5);
}
