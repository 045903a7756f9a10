#include <cmath>
#include <random>

#include "doctest.h"
#include "glyphforge/autodiff.hpp"
#include "glyphforge/layers.hpp"

using namespace glyphforge;
using ag::Shape;
using ag::TensorT;
using D = ag::VarT<double>;

namespace {

TensorT<double> randt(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  TensorT<double> t(std::move(shape));
  for (auto& v : t.v) v = dist(rng);
  return t;
}

double check_op(const std::function<D()>& f, const std::vector<D>& leaves,
                std::uint64_t seed = 1) {
  ag::GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.seed = seed;
  return ag::grad_check(f, leaves, opts);
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("matmul with identity is identity") {
  std::mt19937_64 rng(7);
  auto x = D::leaf(randt({3, 3}, rng), false);
  TensorT<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  auto y = ag::matmul(x, D::constant(eye));
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.value().v[i] == doctest::Approx(x.value().v[i]));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  std::mt19937_64 rng(7);
  auto a = D::leaf(randt({2, 3}, rng), false);
  auto b = D::leaf(randt({4, 2}, rng), false);
  CHECK_THROWS_WITH_AS(ag::matmul(a, b), doctest::Contains("[2x3]"), NumericError);
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(11);
  auto x = D::leaf(randt({5, 7}, rng, -3, 3), false);
  auto y = ag::softmax_rows(x);
  for (int i = 0; i < 5; ++i) {
    double s = 0;
    for (int j = 0; j < 7; ++j) s += y.value().at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("layer_norm normalizes rows") {
  std::mt19937_64 rng(13);
  auto x = D::leaf(randt({4, 16}, rng, -2, 5), false);
  auto g = D::constant(TensorT<double>(Shape{1, 16}, 1.0));
  auto b = D::constant(TensorT<double>(Shape{1, 16}, 0.0));
  auto y = ag::layer_norm_rows(x, g, b);
  for (int i = 0; i < 4; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 16; ++j) mean += y.value().at(i, j);
    mean /= 16;
    for (int j = 0; j < 16; ++j) var += (y.value().at(i, j) - mean) * (y.value().at(i, j) - mean);
    var /= 16;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("grad_check sanity: x squared") {
  auto x = D::leaf(TensorT<double>(Shape{1, 1}, 3.0), true);
  const double err = check_op([&] { return ag::mul(x, x); }, {x});
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check: sum of softmax is constant") {
  std::mt19937_64 rng(17);
  auto x = D::leaf(randt({1, 6}, rng), true);
  auto f = [&] { return ag::sum_all(ag::softmax_rows(x)); };
  f();
  ag::backward(f());
  // constant function: gradient vanishes
  for (const double g : x.grad()) CHECK(std::abs(g) < 1e-12);
  // wide eps keeps the central-difference rounding noise below the 1e-8 floor
  ag::GradCheckOptions opts;
  opts.eps = 5e-4;
  CHECK(ag::grad_check(f, {x}, opts) < 1e-3);
}

TEST_CASE("elementwise and broadcast ops pass grad check on random shapes") {
  std::mt19937_64 rng(23);
  for (const auto& [n, d] : std::vector<std::pair<int, int>>{{2, 3}, {1, 5}, {4, 4}}) {
    auto a = D::leaf(randt({n, d}, rng, 0.3, 1.7), true);
    auto b = D::leaf(randt({n, d}, rng, 0.4, 1.9), true);
    auto bias = D::leaf(randt({1, d}, rng), true);
    CHECK(check_op([&] { return ag::mean_all(ag::mul(ag::add(a, b), ag::sub(a, b))); }, {a, b}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::div(a, b)); }, {a, b}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::add_bias(a, bias)); }, {a, bias}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::sigmoid(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::tanh_act(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::exp_act(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::log_act(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::relu(a)); }, {a}) < 1e-3);
  }
}

TEST_CASE("matmul and reductions pass grad check") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 2 + trial, k = 3, m = 2;
    auto a = D::leaf(randt({n, k}, rng), true);
    auto b = D::leaf(randt({k, m}, rng), true);
    CHECK(check_op([&] { return ag::mean_all(ag::matmul(a, b)); }, {a, b}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::mean_rows(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::row_sum(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::cumsum_rows(a)); }, {a}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::mean_blocks(a, 1)); }, {a}) < 1e-3);
  }
}

TEST_CASE("softmax family passes grad check") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    auto x = D::leaf(randt({3, 5}, rng, -2, 2), true);
    CHECK(check_op([&] { return ag::mean_all(ag::mul(ag::softmax_rows(x), x)); }, {x}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::mul(ag::log_softmax_rows(x), x)); }, {x}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::logsumexp_rows(x)); }, {x}) < 1e-3);
    CHECK(check_op([&] { return ag::mean_all(ag::cross_entropy_rows(x, {1, 0, 4})); }, {x}) < 1e-3);
  }
}

TEST_CASE("layer norm passes grad check") {
  std::mt19937_64 rng(37);
  auto x = D::leaf(randt({3, 8}, rng), true);
  auto g = D::leaf(randt({1, 8}, rng, 0.5, 1.5), true);
  auto b = D::leaf(randt({1, 8}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::mul(ag::layer_norm_rows(x, g, b), x)); },
                 {x, g, b}) < 1e-3);
}

TEST_CASE("structural ops pass grad check") {
  std::mt19937_64 rng(41);
  auto a = D::leaf(randt({4, 3}, rng), true);
  auto b = D::leaf(randt({2, 3}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::concat_rows<double>({a, b})); }, {a, b}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::slice_rows(a, 1, 2)); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::slice_cols(a, 1, 2)); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::gather_rows(a, {0, 2, 2})); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::reshape(a, {3, 4})); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::add_block_bias(a, b)); }, {a, b}) < 1e-3);
}

TEST_CASE("extrema ops pass grad check away from ties") {
  std::mt19937_64 rng(43);
  auto a = D::leaf(randt({5, 2}, rng), true);
  auto b = D::leaf(randt({5, 2}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::reduce_max_rows(a)); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::reduce_min_rows(a)); }, {a}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::max_elem(a, b)); }, {a, b}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::min_elem(a, b)); }, {a, b}) < 1e-3);
}

TEST_CASE("attention passes grad check") {
  std::mt19937_64 rng(47);
  for (const int heads : {1, 2}) {
    auto q = D::leaf(randt({2, 4}, rng), true);
    auto k = D::leaf(randt({3, 4}, rng), true);
    auto v = D::leaf(randt({3, 4}, rng), true);
    CHECK(check_op([&] { return ag::mean_all(ag::attention(q, k, v, 1, heads, false)); },
                   {q, k, v}) < 1e-3);
  }
  // causal + blocked
  auto q = D::leaf(randt({6, 4}, rng), true);
  auto k = D::leaf(randt({6, 4}, rng), true);
  auto v = D::leaf(randt({6, 4}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::attention(q, k, v, 2, 2, true)); }, {q, k, v}) <
        1e-3);
  // key masking
  std::vector<std::uint8_t> mask = {1, 0, 1};
  auto q2 = D::leaf(randt({2, 4}, rng), true);
  auto k2 = D::leaf(randt({3, 4}, rng), true);
  auto v2 = D::leaf(randt({3, 4}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::attention(q2, k2, v2, 1, 2, false, mask)); },
                 {q2, k2, v2}) < 1e-3);
}

TEST_CASE("attention with a single key returns the value row") {
  std::mt19937_64 rng(53);
  auto q = D::leaf(randt({3, 4}, rng), false);
  auto k = D::leaf(randt({1, 4}, rng), false);
  auto v = D::leaf(randt({1, 4}, rng), false);
  auto out = ag::attention(q, k, v, 1, 2, false);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(out.value().at(i, j) == doctest::Approx(v.value().at(0, j)));
}

TEST_CASE("masked keys receive zero attention") {
  std::mt19937_64 rng(59);
  auto q = D::leaf(randt({2, 4}, rng), false);
  auto k = D::leaf(randt({3, 4}, rng), false);
  auto v0 = randt({3, 4}, rng);
  auto v = D::leaf(v0, false);
  std::vector<std::uint8_t> mask = {1, 1, 0};
  auto out1 = ag::attention(q, k, v, 1, 2, false, mask);
  // changing a masked value row must not change the output
  auto v2 = v0;
  for (int j = 0; j < 4; ++j) v2.at(2, j) += 100.0;
  auto out2 = ag::attention(q, k, D::leaf(v2, false), 1, 2, false, mask);
  for (std::size_t i = 0; i < out1.value().v.size(); ++i)
    CHECK(out1.value().v[i] == doctest::Approx(out2.value().v[i]));
}

TEST_CASE("conv and pooling pass grad check") {
  std::mt19937_64 rng(61);
  auto x = D::leaf(randt({2, 2, 6, 6}, rng), true);
  auto w = D::leaf(randt({3, 2, 3, 3}, rng), true);
  auto b = D::leaf(randt({1, 3}, rng), true);
  CHECK(check_op([&] { return ag::mean_all(ag::conv2d(x, w, b, 2, 1)); }, {x, w, b}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::max_pool2d(x, 2, 2)); }, {x}) < 1e-3);
  CHECK(check_op([&] { return ag::mean_all(ag::image_to_tokens(x)); }, {x}) < 1e-3);
}

TEST_CASE("lstm cell: zero weights give zero state from zero cell") {
  nn::ParamStore<double> ps;
  std::mt19937_64 rng(67);
  nn::LstmCell<double> cell(ps, "lstm", 3, 4, rng);
  for (auto& [name, v] : ps.items())
    for (auto& x : v.value().v) x = 0.0;
  auto x = D::constant(TensorT<double>(Shape{1, 3}, 0.5));
  auto h = D::constant(TensorT<double>(Shape{1, 4}, 0.0));
  auto c = D::constant(TensorT<double>(Shape{1, 4}, 0.0));
  auto [h2, c2] = cell.step(x, h, c);
  for (const double v : h2.value().v) CHECK(v == doctest::Approx(0.0));
  for (const double v : c2.value().v) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("lstm cell: saturated forget keeps the cell") {
  nn::ParamStore<double> ps;
  std::mt19937_64 rng(71);
  nn::LstmCell<double> cell(ps, "lstm", 3, 4, rng);
  for (auto& [name, v] : ps.items())
    for (auto& x : v.value().v) x = 0.0;
  // bias layout i,f,g,o: forget gate to +inf, input gate to -inf
  auto& bias = ps.items()[1].second;  // lstm.wx.bias
  REQUIRE(ps.items()[1].first == "lstm.wx.bias");
  for (int j = 0; j < 4; ++j) {
    bias.value().v[static_cast<std::size_t>(j)] = -100.0;     // i
    bias.value().v[static_cast<std::size_t>(4 + j)] = 100.0;  // f
  }
  std::mt19937_64 rng2(73);
  auto cvals = randt({1, 4}, rng2);
  auto x = D::constant(TensorT<double>(Shape{1, 3}, 0.3));
  auto h = D::constant(TensorT<double>(Shape{1, 4}, 0.2));
  auto c = D::constant(cvals);
  auto [h2, c2] = cell.step(x, h, c);
  for (int j = 0; j < 4; ++j)
    CHECK(c2.value().v[static_cast<std::size_t>(j)] ==
          doctest::Approx(cvals.v[static_cast<std::size_t>(j)]).epsilon(1e-9));
}

TEST_CASE("lstm cell passes grad check") {
  nn::ParamStore<double> ps;
  std::mt19937_64 rng(79);
  nn::LstmCell<double> cell(ps, "lstm", 4, 4, rng);
  auto x = D::leaf(randt({1, 4}, rng), true);
  auto h = D::leaf(randt({1, 4}, rng), true);
  auto c = D::leaf(randt({1, 4}, rng), true);
  std::vector<D> leaves = {x, h, c};
  for (auto& [name, v] : ps.items()) leaves.push_back(v);
  const double err = check_op(
      [&] {
        auto [h2, c2] = cell.step(x, h, c);
        return ag::mean_all(ag::add(h2, c2));
      },
      leaves);
  CHECK(err < 1e-3);
}

TEST_CASE("multi-head attention module passes grad check") {
  nn::ParamStore<double> ps;
  std::mt19937_64 rng(83);
  nn::MultiHeadAttention<double> mha(ps, "mha", 4, 2, rng);
  auto q = D::leaf(randt({2, 4}, rng), true);
  auto kv = D::leaf(randt({3, 4}, rng), true);
  std::vector<D> leaves = {q, kv};
  for (auto& [name, v] : ps.items()) leaves.push_back(v);
  CHECK(check_op([&] { return ag::mean_all(mha(q, kv)); }, leaves) < 1e-3);
}

TEST_CASE("backward accumulation is linear") {
  std::mt19937_64 rng(89);
  auto x = D::leaf(randt({2, 2}, rng), true);

  auto f1 = ag::sum_all(ag::mul(x, x));
  ag::backward(f1);
  const auto g1 = x.grad();
  x.clear_grad();

  auto f2 = ag::sum_all(ag::sigmoid(x));
  ag::backward(f2);
  const auto g2 = x.grad();
  x.clear_grad();

  auto f3 = ag::add(ag::sum_all(ag::mul(x, x)), ag::sum_all(ag::sigmoid(x)));
  ag::backward(f3);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(97);
  auto x = D::leaf(randt({4, 8}, rng), false);
  auto w = D::leaf(randt({8, 8}, rng), false);
  auto y1 = ag::softmax_rows(ag::matmul(x, w));
  auto y2 = ag::softmax_rows(ag::matmul(x, w));
  CHECK(y1.value().v == y2.value().v);
}

TEST_CASE("grad_check rejects eps outside the contract") {
  auto x = D::leaf(TensorT<double>(Shape{1, 1}, 1.0), true);
  ag::GradCheckOptions opts;
  opts.eps = 1e-2;
  CHECK_THROWS_AS(ag::grad_check([&] { return ag::mul(x, x); }, {x}, opts), UsageError);
}

}  // TEST_SUITE
