#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "glyphforge/metrics.hpp"
#include "glyphforge/trainer.hpp"

using namespace glyphforge;

namespace {

Trajectory from_coords(const std::vector<std::pair<double, double>>& pts) {
  Trajectory t;
  t.writer_id = 0;
  t.char_id = 0;
  double px = 0, py = 0;
  for (const auto& [x, y] : pts) {
    t.points.push_back(PointRecord::pen_down(x - px, y - py));
    px = x;
    py = y;
  }
  return t;
}

// exhaustive monotone-path minimum of (cost sum / path length), accumulating
// in path order exactly like the DP
double dtw_brute(const std::vector<std::pair<double, double>>& a,
                 const std::vector<std::pair<double, double>>& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  double best = std::numeric_limits<double>::infinity();
  struct Frame {
    int i, j, len;
    double cost;
  };
  std::vector<Frame> stack;
  auto cost = [&](int i, int j) {
    return std::hypot(a[static_cast<std::size_t>(i)].first - b[static_cast<std::size_t>(j)].first,
                      a[static_cast<std::size_t>(i)].second - b[static_cast<std::size_t>(j)].second);
  };
  stack.push_back({0, 0, 1, cost(0, 0)});
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.i == n - 1 && f.j == m - 1) {
      best = std::min(best, f.cost / f.len);
      continue;
    }
    if (f.i + 1 < n) stack.push_back({f.i + 1, f.j, f.len + 1, f.cost + cost(f.i + 1, f.j)});
    if (f.j + 1 < m) stack.push_back({f.i, f.j + 1, f.len + 1, f.cost + cost(f.i, f.j + 1)});
    if (f.i + 1 < n && f.j + 1 < m)
      stack.push_back({f.i + 1, f.j + 1, f.len + 1, f.cost + cost(f.i + 1, f.j + 1)});
  }
  return best;
}

// raw-coordinate DTW (no normalization) for oracle comparisons: wrap points
// in trajectories whose normalization is the identity transform
std::vector<std::pair<double, double>> centered(const std::vector<std::pair<double, double>>& pts) {
  double mx = 0, my = 0, xmin = 1e18, xmax = -1e18, ymin = 1e18, ymax = -1e18;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  const double side = std::max(xmax - xmin, ymax - ymin);
  const double s = side > 0 ? 1.0 / side : 1.0;
  std::vector<std::pair<double, double>> out;
  for (const auto& [x, y] : pts) out.push_back({(x - mx) * s, (y - my) * s});
  return out;
}

const Corpus& eval_corpus() {
  static const Corpus corpus = [] {
    CorpusConfig cfg;
    cfg.components = 10;
    cfg.writers = 4;
    cfg.seen_writers = 2;
    cfg.chars = 16;
    cfg.seen_chars = 10;
    cfg.image_size = 16;
    cfg.seed = 13;
    return build_corpus(cfg);
  }();
  return corpus;
}

ClassifierConfig fast_classifier_config() {
  ClassifierConfig cfg;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.steps = 120;
  cfg.batch = 24;
  cfg.seed = 41;
  return cfg;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dtw of identical trajectories is zero") {
  const auto t = from_coords({{0, 0}, {1, 0}, {1, 1}, {0.5, 1.5}});
  CHECK(dtw(t, t) == 0.0);
}

TEST_CASE("dtw worked example: single point against two") {
  const auto a = from_coords({{0, 0}});
  const auto b = from_coords({{0, 0}, {0, 1}});
  // after per-trajectory normalization b's points sit at -0.5 and 0.5 while
  // a's single point is at 0: path costs 0.5 then 0.5, length 2
  CHECK(dtw(a, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("dtw is symmetric") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::pair<double, double>> pa, pb;
    for (int i = 0; i < 5 + trial; ++i) pa.push_back({dist(rng), dist(rng)});
    for (int i = 0; i < 7 - trial % 3; ++i) pb.push_back({dist(rng), dist(rng)});
    const auto a = from_coords(pa), b = from_coords(pb);
    CHECK(dtw(a, b) == doctest::Approx(dtw(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("dtw equals the brute-force path minimum on short sequences") {
  // 3-point alphabet, all pairs up to length 4 (the acceptance suite extends
  // this to length 6)
  const std::vector<std::pair<double, double>> alphabet = {{0, 0}, {1, 0}, {0, 1}};
  std::vector<std::vector<int>> seqs;
  for (int len = 1; len <= 4; ++len) {
    std::vector<int> digits(static_cast<std::size_t>(len), 0);
    for (;;) {
      seqs.push_back(digits);
      int k = len - 1;
      while (k >= 0 && ++digits[static_cast<std::size_t>(k)] == 3) digits[static_cast<std::size_t>(k--)] = 0;
      if (k < 0) break;
    }
  }
  auto coords = [&](const std::vector<int>& seq) {
    std::vector<std::pair<double, double>> out;
    for (const int s : seq) out.push_back(alphabet[static_cast<std::size_t>(s)]);
    return out;
  };
  int checked = 0;
  for (std::size_t i = 0; i < seqs.size(); i += 7) {
    for (std::size_t j = 0; j < seqs.size(); j += 5) {
      const auto ca = centered(coords(seqs[i]));
      const auto cb = centered(coords(seqs[j]));
      const double brute = dtw_brute(ca, cb);
      const double dp = dtw(from_coords(coords(seqs[i])), from_coords(coords(seqs[j])));
      CHECK(dp == doctest::Approx(brute).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("fid of identical feature sets is zero") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> f(3);
    for (auto& v : f) v = dist(rng);
    feats.push_back(f);
  }
  CHECK(std::abs(fid_lite(feats, feats)) < 1e-6);
}

TEST_CASE("fid closed form in one dimension") {
  // sample variance exactly 1, means 0 and 1: fid = 1 + (1 + 1 - 2) = 1
  const int n = 40;
  const double a = std::sqrt(static_cast<double>(n - 1) / n);
  std::vector<std::vector<double>> s1, s2;
  for (int i = 0; i < n; ++i) {
    const double v = (i % 2 == 0 ? a : -a);
    s1.push_back({v});
    s2.push_back({v + 1.0});
  }
  CHECK(fid_lite(s1, s2) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fid is symmetric") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<std::vector<double>> s1, s2;
  for (int i = 0; i < 9; ++i) {
    std::vector<double> f1(4), f2(4);
    for (auto& v : f1) v = dist(rng);
    for (auto& v : f2) v = 0.3 + 1.7 * dist(rng);
    s1.push_back(f1);
    s2.push_back(f2);
  }
  CHECK(std::abs(fid_lite(s1, s2) - fid_lite(s2, s1)) < 1e-8);
}

TEST_CASE("fid rejects undersized sets") {
  std::vector<std::vector<double>> s1(4, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(fid_lite(s1, s1), DataError);
}

TEST_CASE("classifier learns the tiny corpus") {
  const auto& corpus = eval_corpus();
  auto clf = train_content_classifier(corpus, "swsc", fast_classifier_config());
  CHECK(clf.n_classes() == 10);
  CHECK(clf.held_out_accuracy() > 25.0);  // well above 10% chance

  // prediction returns a known class id and is deterministic
  const auto& t = corpus.train.front();
  const int p1 = clf.predict(t);
  const int p2 = clf.predict(t);
  CHECK(p1 == p2);
  CHECK(std::find(clf.class_ids().begin(), clf.class_ids().end(), p1) != clf.class_ids().end());
  CHECK(clf.features(t).size() == 8);

  // same seed, same accuracy
  auto clf2 = train_content_classifier(corpus, "swsc", fast_classifier_config());
  CHECK(clf.held_out_accuracy() == clf2.held_out_accuracy());
}

TEST_CASE("classifier persistence preserves predictions") {
  namespace fs = std::filesystem;
  const auto& corpus = eval_corpus();
  const auto clf = train_content_classifier(corpus, "uwsc", fast_classifier_config());
  const auto path = (fs::temp_directory_path() / "gf_clf.bin").string();
  clf.save(path);
  const auto loaded = ContentClassifier::load(path);
  fs::remove(path);
  CHECK(loaded.held_out_accuracy() == clf.held_out_accuracy());
  for (const auto& t : corpus.uwsc) {
    CHECK(loaded.predict(t) == clf.predict(t));
    CHECK(loaded.features(t) == clf.features(t));
  }
}

TEST_CASE("content score equals accuracy on ground truth") {
  const auto& corpus = eval_corpus();
  const auto clf = train_content_classifier(corpus, "swsc", fast_classifier_config());
  std::vector<int> labels;
  for (const auto& t : corpus.train) labels.push_back(t.char_id);
  const double cs = content_score(corpus.train, labels, clf);
  int correct = 0;
  for (const auto& t : corpus.train)
    if (clf.predict(t) == t.char_id) ++correct;
  CHECK(cs == doctest::Approx(100.0 * correct / corpus.train.size()).epsilon(1e-12));
  CHECK_THROWS_AS(content_score({}, {}, clf), DataError);
}

TEST_CASE("evaluate produces a full deterministic report") {
  const auto& corpus = eval_corpus();
  ModelConfig mcfg;
  mcfg.d_prime = 16;
  mcfg.heads = 2;
  mcfg.mixtures = 2;
  mcfg.style_samples = 3;
  mcfg.max_points = 60;
  const auto model = model_from_checkpoint(
      train_stage1(corpus, model_config_for(corpus, mcfg), [] {
        TrainConfig t;
        t.batch = 4;
        t.seed = 3;
        t.sample_every = 0;
        return t;
      }(), 2).checkpoint);

  const auto clf = train_content_classifier(corpus, "uwsc", fast_classifier_config());
  EvalOptions opts;
  opts.seed = 9;
  const auto r1 = evaluate(*model, corpus, "uwsc", clf, opts);
  CHECK(r1.n_samples == static_cast<int>(corpus.uwsc.size()));
  CHECK(r1.split == "uwsc");
  CHECK(r1.dtw_mean >= 0.0);
  CHECK(r1.content_score >= 0.0);
  CHECK(r1.content_score <= 100.0);
  CHECK(r1.fid_lite >= 0.0);

  const auto r2 = evaluate(*model, corpus, "uwsc", clf, opts);
  CHECK(r1.dtw_mean == r2.dtw_mean);
  CHECK(r1.content_score == r2.content_score);
  CHECK(r1.fid_lite == r2.fid_lite);

  // ground truth evaluated as features gives ~zero feature distance
  std::vector<std::vector<double>> feats;
  for (const auto& t : corpus.uwsc) feats.push_back(clf.features(t));
  CHECK(fid_lite(feats, feats) < 1e-6);

  const auto json = report_json(r1);
  CHECK(json.find("dtw_mean") != std::string::npos);
  CHECK(report_table(r1).find("Content Score") != std::string::npos);
}

TEST_CASE("evaluate with a style-set override") {
  const auto& corpus = eval_corpus();
  ModelConfig mcfg;
  mcfg.d_prime = 16;
  mcfg.heads = 2;
  mcfg.mixtures = 2;
  mcfg.style_samples = 3;
  mcfg.max_points = 40;
  TrainConfig tcfg;
  tcfg.batch = 2;
  tcfg.seed = 5;
  tcfg.sample_every = 0;
  const auto model = model_from_checkpoint(
      train_stage1(corpus, model_config_for(corpus, mcfg), tcfg, 1).checkpoint);
  const auto clf = train_content_classifier(corpus, "uwuc", fast_classifier_config());
  EvalOptions opts;
  opts.seed = 2;
  opts.style_samples = 1;  // single-reference regime
  const auto report = evaluate(*model, corpus, "uwuc", clf, opts);
  CHECK(report.n_samples == static_cast<int>(corpus.uwuc.size()));
}

}  // TEST_SUITE
