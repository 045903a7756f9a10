#include <cmath>
#include <random>

#include "doctest.h"
#include "glyphforge/losses.hpp"

using namespace glyphforge;
using losses::LossReport;
using D = ag::VarT<double>;
using ag::Shape;
using ag::TensorT;

namespace {

// direct density summation at 64-bit, no log-sum-exp: the independent oracle
double nll_naive(const TensorT<double>& raw, int r,
                 const std::vector<std::pair<double, double>>& targets) {
  double total = 0.0;
  const int t = raw.rows();
  for (int i = 0; i < t; ++i) {
    std::vector<double> pi(static_cast<std::size_t>(r));
    double psum = 0.0;
    for (int j = 0; j < r; ++j) {
      pi[static_cast<std::size_t>(j)] = std::exp(raw.at(i, j));
      psum += pi[static_cast<std::size_t>(j)];
    }
    double density = 0.0;
    for (int j = 0; j < r; ++j) {
      const double mux = raw.at(i, r + j), muy = raw.at(i, 2 * r + j);
      const double sx = std::exp(raw.at(i, 3 * r + j)), sy = std::exp(raw.at(i, 4 * r + j));
      const double rho = std::tanh(raw.at(i, 5 * r + j));
      const double dx = (targets[static_cast<std::size_t>(i)].first - mux) / sx;
      const double dy = (targets[static_cast<std::size_t>(i)].second - muy) / sy;
      const double q = 1.0 - rho * rho;
      const double z = dx * dx + dy * dy - 2.0 * rho * dx * dy;
      const double n = std::exp(-z / (2.0 * q)) / (2.0 * M_PI * sx * sy * std::sqrt(q));
      density += pi[static_cast<std::size_t>(j)] / psum * n;
    }
    total += -std::log(density);
  }
  return total / t;
}

TensorT<double> randt(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  TensorT<double> t(std::move(shape));
  for (auto& v : t.v) v = dist(rng);
  return t;
}

double gc(const std::function<D()>& f, const std::vector<D>& leaves, std::uint64_t seed = 1) {
  ag::GradCheckOptions opts;
  opts.seed = seed;
  return ag::grad_check(f, leaves, opts);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("nll at the mean of a standard bivariate component is ln(2pi)") {
  // R=1: arity 9; pi logit free, mu = target, log-scales 0, rho 0
  TensorT<double> raw(Shape{1, 9});
  raw.at(0, 0) = 1.7;    // pi logit (softmax -> 1)
  raw.at(0, 1) = 0.3;    // mux
  raw.at(0, 2) = -0.25;  // muy
  const auto loss = losses::nll_gmm(D::constant(raw), {{0.3, -0.25}}, 1);
  CHECK(std::abs(loss.value().v[0] - std::log(2.0 * M_PI)) < 1e-9);
}

TEST_CASE("mixture of identical components collapses to one") {
  std::mt19937_64 rng(3);
  TensorT<double> raw1(Shape{1, 9});
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (auto& v : raw1.v) v = dist(rng);
  TensorT<double> raw2(Shape{1, 15});  // R=2, equal weights, duplicated component
  raw2.at(0, 0) = 0.4;
  raw2.at(0, 1) = 0.4;
  for (int j = 0; j < 5; ++j) {
    raw2.at(0, 2 + 2 * j) = raw1.at(0, 1 + j);
    raw2.at(0, 2 + 2 * j + 1) = raw1.at(0, 1 + j);
  }
  const std::vector<std::pair<double, double>> target = {{0.11, -0.07}};
  const auto l1 = losses::nll_gmm(D::constant(raw1), target, 1);
  const auto l2 = losses::nll_gmm(D::constant(raw2), target, 2);
  CHECK(std::abs(l1.value().v[0] - l2.value().v[0]) < 1e-9);
}

TEST_CASE("nll matches the naive-summation oracle") {
  std::mt19937_64 rng(5);
  const int r = 3, t = 4;
  const auto raw = randt({t, 6 * r + 3}, rng, -0.8, 0.8);
  std::vector<std::pair<double, double>> targets;
  std::uniform_real_distribution<double> dist(-0.4, 0.4);
  for (int i = 0; i < t; ++i) targets.push_back({dist(rng), dist(rng)});
  const auto loss = losses::nll_gmm(D::constant(raw), targets, r);
  CHECK(std::abs(loss.value().v[0] - nll_naive(raw, r, targets)) < 1e-9);
}

TEST_CASE("nll rejects non-finite densities") {
  TensorT<double> raw(Shape{1, 9});
  raw.at(0, 5) = 1e30;  // rho_raw -> tanh -> 1, 1-rho^2 -> 0
  CHECK_THROWS_AS(losses::nll_gmm(D::constant(raw), {{0.0, 0.0}}, 1), NumericError);
}

TEST_CASE("uniform pen-state logits give ln 3") {
  TensorT<double> raw(Shape{2, 9});  // R=1
  const auto loss = losses::pen_state_ce(D::constant(raw), {0, 2}, 1);
  CHECK(std::abs(loss.value().v[0] - std::log(3.0)) < 1e-9);
}

TEST_CASE("confident correct pen state drives the loss to zero") {
  TensorT<double> raw(Shape{1, 9});
  raw.at(0, 6) = 50.0;  // state 0 logit
  const auto loss = losses::pen_state_ce(D::constant(raw), {0}, 1);
  CHECK(loss.value().v[0] < 1e-9);
}

TEST_CASE("pen-state batch value equals mean of per-step values") {
  std::mt19937_64 rng(7);
  const auto raw = randt({3, 9}, rng);
  const std::vector<int> states = {0, 1, 2};
  const auto batch = losses::pen_state_ce(D::constant(raw), states, 1);
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    TensorT<double> row(Shape{1, 9});
    for (int j = 0; j < 9; ++j) row.at(0, j) = raw.at(i, j);
    acc += losses::pen_state_ce(D::constant(row), {states[static_cast<std::size_t>(i)]}, 1)
               .value()
               .v[0];
  }
  CHECK(std::abs(batch.value().v[0] - acc / 3.0) < 1e-12);
}

TEST_CASE("contrastive prefers the correct labeling") {
  TensorT<double> emb(Shape{3, 4});
  emb.at(0, 0) = 1.0;  // anchor
  emb.at(1, 0) = 1.0;  // same writer, identical
  emb.at(2, 1) = 1.0;  // other writer, orthogonal
  const auto good = losses::contrastive_style(D::constant(emb), {0, 0, 1}, 0.1);
  const auto swapped = losses::contrastive_style(D::constant(emb), {0, 1, 0}, 0.1);
  CHECK(good.value().v[0] < swapped.value().v[0]);
}

TEST_CASE("identical embeddings give ln(candidate count) regardless of labels") {
  TensorT<double> emb(Shape{3, 4}, 0.7);
  const auto loss = losses::contrastive_style(D::constant(emb), {0, 0, 1}, 0.1);
  // anchors 0 and 1 each see 2 candidates (1 positive + 1 negative)
  CHECK(std::abs(loss.value().v[0] - std::log(2.0)) < 1e-9);
}

TEST_CASE("contrastive is invariant to a global rotation") {
  std::mt19937_64 rng(11);
  const auto emb = randt({4, 2}, rng, 0.2, 1.0);
  const double a = 0.83;
  TensorT<double> rot(Shape{4, 2});
  for (int i = 0; i < 4; ++i) {
    rot.at(i, 0) = std::cos(a) * emb.at(i, 0) - std::sin(a) * emb.at(i, 1);
    rot.at(i, 1) = std::sin(a) * emb.at(i, 0) + std::cos(a) * emb.at(i, 1);
  }
  const std::vector<int> writers = {0, 0, 1, 1};
  const auto l1 = losses::contrastive_style(D::constant(emb), writers, 0.1);
  const auto l2 = losses::contrastive_style(D::constant(rot), writers, 0.1);
  CHECK(std::abs(l1.value().v[0] - l2.value().v[0]) < 1e-9);
}

TEST_CASE("contrastive without positives contributes zero") {
  std::mt19937_64 rng(13);
  const auto emb = randt({3, 4}, rng);
  const auto loss = losses::contrastive_style(D::constant(emb), {0, 1, 2}, 0.1);
  CHECK(loss.value().v[0] == 0.0);
}

TEST_CASE("glyph contrast excludes same-character cross-sample pairs") {
  // two samples of the same character: their cross-pairs are neither positive
  // nor negative, so every anchor sees only its own sample's partner
  std::mt19937_64 rng(17);
  const auto emb = randt({4, 4}, rng, 0.1, 1.0);
  const std::vector<int> samples = {0, 0, 1, 1};
  const std::vector<int> chars = {7, 7, 7, 7};
  const auto loss = losses::contrastive_glyph(D::constant(emb), samples, chars, 0.1);
  // single candidate (the positive) per anchor: -log(1) = 0
  CHECK(std::abs(loss.value().v[0]) < 1e-9);
}

TEST_CASE("char loss oracles") {
  TensorT<double> sure(Shape{1, 40});
  sure.at(0, 7) = 60.0;
  CHECK(losses::char_loss(D::constant(sure), 7).value().v[0] < 1e-9);

  TensorT<double> uniform(Shape{1, 40});
  CHECK(std::abs(losses::char_loss(D::constant(uniform), 3).value().v[0] - std::log(40.0)) < 1e-9);

  // independent implementation on random logits
  std::mt19937_64 rng(19);
  const auto logits = randt({1, 12}, rng, -2, 2);
  double mx = logits.v[0];
  for (const double v : logits.v) mx = std::max(mx, v);
  double sum = 0.0;
  for (const double v : logits.v) sum += std::exp(v - mx);
  const double expect = mx + std::log(sum) - logits.at(0, 5);
  CHECK(std::abs(losses::char_loss(D::constant(logits), 5).value().v[0] - expect) < 1e-9);
  CHECK_THROWS_AS(losses::char_loss(D::constant(logits), 12), DataError);
}

TEST_CASE("decomposition loss oracles") {
  // perfect predictions
  TensorT<double> s(Shape{1, 12});
  s.at(0, 4) = 80.0;
  TensorT<double> c(Shape{2, 40});
  c.at(0, 3) = 80.0;
  c.at(1, 9) = 80.0;
  CHECK(losses::decomp_loss(D::constant(s), D::constant(c), {4}, {3, 9}).value().v[0] < 1e-9);

  // uniform: ln 12 + 2 ln 40
  const auto lu = losses::decomp_loss(D::constant(TensorT<double>(Shape{1, 12})),
                                      D::constant(TensorT<double>(Shape{2, 40})), {0}, {1, 2});
  CHECK(std::abs(lu.value().v[0] - (std::log(12.0) + 2.0 * std::log(40.0))) < 1e-9);

  // additivity over steps
  std::mt19937_64 rng(23);
  const auto sl = randt({2, 12}, rng);
  const auto cl = randt({3, 40}, rng);
  const auto whole =
      losses::decomp_loss(D::constant(sl), D::constant(cl), {1, 2}, {4, 5, 6}).value().v[0];
  double parts = 0.0;
  for (int i = 0; i < 2; ++i) {
    TensorT<double> row(Shape{1, 12});
    for (int j = 0; j < 12; ++j) row.at(0, j) = sl.at(i, j);
    parts += losses::decomp_loss(D::constant(row), D(), {i == 0 ? 1 : 2}, {}).value().v[0];
  }
  for (int i = 0; i < 3; ++i) {
    TensorT<double> row(Shape{1, 40});
    for (int j = 0; j < 40; ++j) row.at(0, j) = cl.at(i, j);
    parts += losses::decomp_loss(D(), D::constant(row), {}, {4 + i}).value().v[0];
  }
  CHECK(std::abs(whole - parts) < 1e-9);

  // atomic character: no structure targets
  const auto atomic = losses::decomp_loss(D(), D::constant(TensorT<double>(Shape{1, 40})), {}, {0});
  CHECK(std::abs(atomic.value().v[0] - std::log(40.0)) < 1e-9);
}

TEST_CASE("spacing loss worked examples") {
  const StrokeBox a{0, 0, 2, 2}, b{1, 1, 3, 3};
  CHECK(std::abs(losses::spacing_loss_value({a}, {b}) - 68.0 / 63.0) < 1e-9);

  const StrokeBox c{0, 0, 1, 1}, d{2, 0, 3, 1};
  CHECK(std::abs(losses::spacing_loss_value({c}, {d}) - 4.0 / 3.0) < 1e-9);

  CHECK(losses::spacing_loss_value({a, c}, {a, c}) == 0.0);
  CHECK_THROWS_AS(losses::spacing_loss_value({}, {}), DataError);

  // graph path agrees with the value path
  const auto la = losses::boxes_to_vars<double>({a, c});
  const auto lb = losses::boxes_to_vars<double>({b, d});
  CHECK(std::abs(losses::spacing_loss(la, lb).value().v[0] -
                 losses::spacing_loss_value({a, c}, {b, d})) < 1e-12);
}

TEST_CASE("unmatched strokes contribute the supremum") {
  const StrokeBox a{0, 0, 2, 2};
  // one matched identical pair + one unmatched: (0 + 2) / 2
  CHECK(std::abs(losses::spacing_loss_value({a, {5, 5, 6, 6}}, {a}) - 1.0) < 1e-12);
}

TEST_CASE("per-stroke term lies in [0,2) and vanishes only on identical boxes") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto mkbox = [&]() {
      const double x0 = dist(rng), y0 = dist(rng);
      StrokeBox b{x0, y0, x0 + 0.1 + std::abs(dist(rng)), y0 + 0.1 + std::abs(dist(rng))};
      return b;
    };
    const auto a = mkbox();
    const auto b = mkbox();
    const double term = losses::spacing_loss_value({a}, {b});
    CHECK(term >= 0.0);
    CHECK(term < 2.0);
    const bool identical =
        a.xmin == b.xmin && a.ymin == b.ymin && a.xmax == b.xmax && a.ymax == b.ymax;
    if (!identical) CHECK(term > 1e-12);
    CHECK(losses::spacing_loss_value({a}, {a}) == 0.0);
  }
}

TEST_CASE("stage totals follow the published coefficients") {
  LossReport r;
  r.l_state = 1.0;
  r.l_xy = 1.0;
  r.l_sty = 1.0;
  r.l_gly = 1.0;
  r.l_ct = 2.0;
  CHECK(losses::stage_total(r, 1, 0.5, 1.0) == doctest::Approx(6.0).epsilon(1e-12));

  r.l_sp = 0.5;
  CHECK(losses::stage_total(r, 2, 0.5, 1.0) == doctest::Approx(5.5).epsilon(1e-12));

  LossReport zero;
  zero.l_state = zero.l_xy = zero.l_sty = zero.l_gly = zero.l_ct = 0.0;
  CHECK(losses::stage_total(zero, 1, 0.5, 1.0) == 0.0);

  LossReport missing;
  missing.l_state = missing.l_xy = missing.l_sty = missing.l_gly = 1.0;
  CHECK_THROWS_AS(losses::stage_total(missing, 1, 0.5, 1.0), NumericError);
  CHECK_THROWS_AS(losses::stage_total(missing, 2, 0.5, 1.0), NumericError);
}

TEST_CASE("stage totals are linear in each component") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(0.1, 2.0);
  LossReport r;
  r.l_state = dist(rng);
  r.l_xy = dist(rng);
  r.l_sty = dist(rng);
  r.l_gly = dist(rng);
  r.l_ct = dist(rng);
  r.l_sp = dist(rng);
  auto bumped = [&](double LossReport::* field, double delta) {
    LossReport r2 = r;
    r2.*field = r.*field + delta;
    return r2;
  };
  const double base1 = losses::stage_total(r, 1, 0.5, 1.0);
  CHECK(losses::stage_total(bumped(&LossReport::l_state, 0.25), 1, 0.5, 1.0) - base1 ==
        doctest::Approx(0.5).epsilon(1e-9));
  CHECK(losses::stage_total(bumped(&LossReport::l_xy, 0.25), 1, 0.5, 1.0) - base1 ==
        doctest::Approx(0.25).epsilon(1e-9));
  CHECK(losses::stage_total(bumped(&LossReport::l_sty, 0.25), 1, 0.5, 1.0) - base1 ==
        doctest::Approx(0.25).epsilon(1e-9));
  CHECK(losses::stage_total(bumped(&LossReport::l_gly, 0.25), 1, 0.5, 1.0) - base1 ==
        doctest::Approx(0.25).epsilon(1e-9));
  CHECK(losses::stage_total(bumped(&LossReport::l_ct, 0.25), 1, 0.5, 1.0) - base1 ==
        doctest::Approx(0.125).epsilon(1e-9));
  const double base2 = losses::stage_total(r, 2, 0.5, 1.0);
  CHECK(losses::stage_total(bumped(&LossReport::l_sp, 0.25), 2, 0.5, 1.0) - base2 ==
        doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(37);

  auto raw = D::leaf(randt({3, 15}, rng, -0.6, 0.6), true);  // R=2
  std::vector<std::pair<double, double>> targets = {{0.1, -0.2}, {0.05, 0.3}, {-0.15, 0.0}};
  CHECK(gc([&] { return losses::nll_gmm(raw, targets, 2); }, {raw}) < 1e-3);
  CHECK(gc([&] { return losses::pen_state_ce(raw, {0, 1, 2}, 2); }, {raw}) < 1e-3);

  auto emb = D::leaf(randt({4, 6}, rng, 0.2, 1.2), true);
  CHECK(gc([&] { return losses::contrastive_style(emb, {0, 0, 1, 1}, 0.1); }, {emb}) < 1e-3);
  CHECK(gc([&] { return losses::contrastive_glyph(emb, {0, 0, 1, 1}, {3, 3, 9, 9}, 0.1); },
           {emb}) < 1e-3);

  auto logits = D::leaf(randt({1, 10}, rng), true);
  CHECK(gc([&] { return losses::char_loss(logits, 4); }, {logits}) < 1e-3);

  auto sl = D::leaf(randt({2, 12}, rng), true);
  auto cl = D::leaf(randt({3, 20}, rng), true);
  CHECK(gc([&] { return losses::decomp_loss(sl, cl, {0, 5}, {1, 2, 3}); }, {sl, cl}) < 1e-3);

  // spacing loss through stroke boxes from positions, away from ties
  auto pos = D::leaf(randt({8, 2}, rng, -1.0, 1.0), true);
  const std::vector<IndexRange> ranges = {{0, 3}, {4, 7}};
  const std::vector<StrokeBox> gt = {{-0.4, -0.4, 0.2, 0.3}, {0.0, -0.1, 0.8, 0.9}};
  CHECK(gc(
            [&] {
              const auto boxes = losses::boxes_from_positions(ag::cumsum_rows(pos), ranges, 0.0);
              return losses::spacing_loss(boxes, losses::boxes_to_vars<double>(gt));
            },
            {pos}) < 1e-3);
}

}  // TEST_SUITE
