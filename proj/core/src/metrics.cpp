#include "glyphforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "glyphforge/layers.hpp"
#include "glyphforge/optim.hpp"
#include "glyphforge/rng.hpp"
#include "json.hpp"

namespace glyphforge {

namespace {

std::vector<std::pair<double, double>> normalized_coords(const Trajectory& t) {
  const auto abs = to_absolute(t);
  double mx = 0, my = 0;
  double xmin = abs[0].x, xmax = abs[0].x, ymin = abs[0].y, ymax = abs[0].y;
  for (const auto& p : abs) {
    mx += p.x;
    my += p.y;
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  mx /= static_cast<double>(abs.size());
  my /= static_cast<double>(abs.size());
  const double side = std::max(xmax - xmin, ymax - ymin);
  const double s = side > 0 ? 1.0 / side : 1.0;
  std::vector<std::pair<double, double>> out;
  out.reserve(abs.size());
  for (const auto& p : abs) out.push_back({(p.x - mx) * s, (p.y - my) * s});
  return out;
}

// Kahan-compensated accumulator
struct Kahan {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

double dtw(const Trajectory& a, const Trajectory& b) {
  const auto pa = normalized_coords(a);
  const auto pb = normalized_coords(b);
  const int n = static_cast<int>(pa.size());
  const int m = static_cast<int>(pb.size());

  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      cost[static_cast<std::size_t>(i) * m + j] =
          std::hypot(pa[static_cast<std::size_t>(i)].first - pb[static_cast<std::size_t>(j)].first,
                     pa[static_cast<std::size_t>(i)].second - pb[static_cast<std::size_t>(j)].second);

  // Path length is part of the objective: layer the DP on the exact number of
  // visited cells and take the best cost/length ratio at the terminal cell.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<std::size_t>(n) * m, inf);
  std::vector<double> cur(static_cast<std::size_t>(n) * m, inf);
  double best = inf;
  const int max_len = n + m - 1;
  for (int len = 1; len <= max_len; ++len) {
    if (len == 1) {
      cur[0] = cost[0];
    } else {
      std::fill(cur.begin(), cur.end(), inf);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
          double reach = inf;
          if (i > 0) reach = std::min(reach, prev[static_cast<std::size_t>(i - 1) * m + j]);
          if (j > 0) reach = std::min(reach, prev[static_cast<std::size_t>(i) * m + j - 1]);
          if (i > 0 && j > 0)
            reach = std::min(reach, prev[static_cast<std::size_t>(i - 1) * m + j - 1]);
          if (reach < inf)
            cur[static_cast<std::size_t>(i) * m + j] = cost[static_cast<std::size_t>(i) * m + j] + reach;
        }
      }
    }
    const double terminal = cur[static_cast<std::size_t>(n - 1) * m + m - 1];
    if (terminal < inf) best = std::min(best, terminal / static_cast<double>(len));
    std::swap(prev, cur);
  }
  return best;
}

// ---------------------------------------------------------------------------
// content classifier
// ---------------------------------------------------------------------------

struct ContentClassifier::Impl {
  ClassifierConfig cfg;
  std::vector<int> class_ids;           // class index -> char id
  std::map<int, int> char_to_class;
  nn::ParamStore<float> ps;
  std::vector<nn::EncoderLayer<float>> layers;
  nn::Linear<float> point_emb, head;
  double held_out_acc = 0.0;

  Impl(ClassifierConfig c, std::vector<int> ids, std::uint64_t init_seed)
      : cfg(c), class_ids(std::move(ids)) {
    if (class_ids.size() < 2) throw DataError("classifier needs at least 2 classes");
    for (std::size_t i = 0; i < class_ids.size(); ++i)
      char_to_class[class_ids[i]] = static_cast<int>(i);
    std::mt19937_64 rng = make_rng(init_seed);
    point_emb = nn::Linear<float>(ps, "clf.point_emb", 5, cfg.width, rng);
    ps.create("clf.pos", nn::normal_init<float>({cfg.max_points + 1, cfg.width}, 0.02, rng));
    for (int i = 0; i < 2; ++i)
      layers.emplace_back(ps, "clf.tf" + std::to_string(i), cfg.width, cfg.heads, rng);
    head = nn::Linear<float>(ps, "clf.head", cfg.width, static_cast<int>(class_ids.size()), rng);
  }

  ag::VarT<float> pooled(const Trajectory& t) const {
    const int n = std::min<int>(static_cast<int>(t.points.size()), cfg.max_points);
    ag::TensorT<float> pts(ag::Shape{n, 5});
    std::vector<int> pos_ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& p = t.points[static_cast<std::size_t>(i)];
      pts.at(i, 0) = static_cast<float>(p.dx);
      pts.at(i, 1) = static_cast<float>(p.dy);
      pts.at(i, 2) = static_cast<float>(p.down);
      pts.at(i, 3) = static_cast<float>(p.up);
      pts.at(i, 4) = static_cast<float>(p.end);
      pos_ids[static_cast<std::size_t>(i)] = i;
    }
    auto h = ag::add(point_emb(ag::VarT<float>::constant(pts)),
                     ag::embedding_rows(ps.get("clf.pos"), pos_ids));
    for (const auto& layer : layers) h = layer(h, 1);
    return ag::mean_rows(h);
  }

  ag::VarT<float> logits(const Trajectory& t) const { return head(pooled(t)); }
};

ContentClassifier::ContentClassifier() = default;
ContentClassifier::ContentClassifier(ClassifierConfig cfg, std::vector<int> class_ids,
                                     std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(cfg, std::move(class_ids), init_seed)) {}
ContentClassifier::~ContentClassifier() = default;
ContentClassifier::ContentClassifier(ContentClassifier&&) noexcept = default;
ContentClassifier& ContentClassifier::operator=(ContentClassifier&&) noexcept = default;

double ContentClassifier::train(const std::vector<const Trajectory*>& samples) {
  auto& im = *impl_;
  if (samples.empty()) throw DataError("classifier: empty training set");
  std::vector<const Trajectory*> shuffled = samples;
  std::mt19937_64 rng = make_rng(mix_seed(im.cfg.seed, 0xC1A55ull));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(im.cfg.train_frac * static_cast<double>(shuffled.size())));
  std::vector<const Trajectory*> train(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<const Trajectory*> held(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());

  nn::Adam<float> adam(im.cfg.lr, 0.9, 0.999, 1e-8, im.ps.total_coords());
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (int step = 0; step < im.cfg.steps; ++step) {
    auto loss = ag::VarT<float>::constant(ag::TensorT<float>(ag::Shape{1, 1}, 0.0f));
    const float inv_b = 1.0f / static_cast<float>(im.cfg.batch);
    for (int b = 0; b < im.cfg.batch; ++b) {
      const auto* t = train[pick(rng)];
      const int cls = im.char_to_class.at(t->char_id);
      loss = ag::add(loss, ag::scale(ag::mean_all(ag::cross_entropy_rows(im.logits(*t), {cls})),
                                     inv_b));
    }
    im.ps.clear_grads();
    ag::backward(loss);
    adam.step(im.ps);
  }

  int correct = 0;
  for (const auto* t : held)
    if (predict(*t) == t->char_id) ++correct;
  im.held_out_acc = held.empty() ? 0.0 : 100.0 * correct / static_cast<double>(held.size());
  return im.held_out_acc;
}

int ContentClassifier::predict(const Trajectory& t) const {
  const auto lg = impl_->logits(t);
  int best = 0;
  for (int j = 1; j < lg.value().cols(); ++j)
    if (lg.value().at(0, j) > lg.value().at(0, best)) best = j;
  return impl_->class_ids[static_cast<std::size_t>(best)];
}

std::vector<double> ContentClassifier::features(const Trajectory& t) const {
  const auto f = impl_->pooled(t);
  std::vector<double> out(f.value().v.begin(), f.value().v.end());
  return out;
}

int ContentClassifier::n_classes() const { return static_cast<int>(impl_->class_ids.size()); }
const std::vector<int>& ContentClassifier::class_ids() const { return impl_->class_ids; }
double ContentClassifier::held_out_accuracy() const { return impl_->held_out_acc; }
const ClassifierConfig& ContentClassifier::config() const { return impl_->cfg; }

namespace {
constexpr char kClfMagic[4] = {'G', 'F', 'C', 'C'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("classifier file truncated");
  return v;
}
}  // namespace

void ContentClassifier::save(const std::string& path) const {
  const auto& im = *impl_;
  std::ofstream out(path + ".tmp", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kClfMagic, 4);
  put<std::uint32_t>(out, 1);
  put<std::int32_t>(out, im.cfg.width);
  put<std::int32_t>(out, im.cfg.heads);
  put<std::int32_t>(out, im.cfg.max_points);
  put<std::uint64_t>(out, im.cfg.seed);
  put<double>(out, im.held_out_acc);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(im.class_ids.size()));
  for (const int id : im.class_ids) put<std::int32_t>(out, id);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(im.ps.items().size()));
  for (const auto& [name, var] : im.ps.items()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, var.value().v.size());
    out.write(reinterpret_cast<const char*>(var.value().v.data()),
              static_cast<std::streamsize>(var.value().v.size() * sizeof(float)));
  }
  out.close();
  std::rename((path + ".tmp").c_str(), path.c_str());
}

ContentClassifier ContentClassifier::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open classifier: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kClfMagic, 4) != 0)
    throw DataError("not a classifier file: " + path);
  const auto version = get<std::uint32_t>(in);
  if (version != 1) throw DataError("unsupported classifier version");
  ClassifierConfig cfg;
  cfg.width = get<std::int32_t>(in);
  cfg.heads = get<std::int32_t>(in);
  cfg.max_points = get<std::int32_t>(in);
  cfg.seed = get<std::uint64_t>(in);
  const double acc = get<double>(in);
  const auto n_classes = get<std::uint32_t>(in);
  std::vector<int> ids;
  for (std::uint32_t i = 0; i < n_classes; ++i) ids.push_back(get<std::int32_t>(in));

  ContentClassifier clf(cfg, ids, cfg.seed);
  clf.impl_->held_out_acc = acc;
  const auto n_params = get<std::uint32_t>(in);
  if (n_params != clf.impl_->ps.items().size())
    throw DataError("classifier parameter count mismatch");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const auto len = get<std::uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto count = get<std::uint64_t>(in);
    auto& var = const_cast<ag::VarT<float>&>(clf.impl_->ps.get(name));
    if (var.value().v.size() != count) throw DataError("classifier blob mismatch for " + name);
    in.read(reinterpret_cast<char*>(var.value().v.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw DataError("classifier file truncated");
  }
  return clf;
}

ContentClassifier train_content_classifier(const Corpus& corpus, const std::string& split,
                                           const ClassifierConfig& cfg) {
  const auto& data = corpus.split_data(split);
  std::vector<int> ids;
  for (const auto& t : data)
    if (std::find(ids.begin(), ids.end(), t.char_id) == ids.end()) ids.push_back(t.char_id);
  std::sort(ids.begin(), ids.end());
  if (ids.size() < 2) throw DataError("split " + split + " has fewer than 2 character classes");

  ClassifierConfig sized = cfg;
  sized.max_points = std::max(sized.max_points, 300);
  ContentClassifier clf(sized, ids, mix_seed(cfg.seed, 0xC1Full));
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(data.size());
  for (const auto& t : data) ptrs.push_back(&t);
  clf.train(ptrs);
  return clf;
}

double content_score(const std::vector<Trajectory>& generated,
                     const std::vector<int>& intended_chars, const ContentClassifier& clf) {
  if (generated.empty()) throw DataError("content_score: empty generated set");
  if (generated.size() != intended_chars.size())
    throw DataError("content_score: label count mismatch");
  int correct = 0;
  for (std::size_t i = 0; i < generated.size(); ++i)
    if (clf.predict(generated[i]) == intended_chars[i]) ++correct;
  return 100.0 * correct / static_cast<double>(generated.size());
}

// ---------------------------------------------------------------------------
// Frechet feature distance
// ---------------------------------------------------------------------------

namespace {

// cyclic Jacobi eigensolver for symmetric matrices; returns eigenvalues,
// overwrites a with accumulated rotations applied
std::vector<double> symmetric_eigenvalues(std::vector<double>& a, int d,
                                          std::vector<double>* vectors = nullptr) {
  std::vector<double> v;
  if (vectors) {
    v.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;
  }
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a[static_cast<std::size_t>(p) * d + q] * a[static_cast<std::size_t>(p) * d + q];
    if (off < 1e-24) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * d + q];
        if (std::abs(apq) < 1e-18) continue;
        const double app = a[static_cast<std::size_t>(p) * d + p];
        const double aqq = a[static_cast<std::size_t>(q) * d + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * d + p];
          const double akq = a[static_cast<std::size_t>(k) * d + q];
          a[static_cast<std::size_t>(k) * d + p] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * d + q] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[static_cast<std::size_t>(p) * d + k];
          const double aqk = a[static_cast<std::size_t>(q) * d + k];
          a[static_cast<std::size_t>(p) * d + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q) * d + k] = s * apk + c * aqk;
        }
        if (vectors)
          for (int k = 0; k < d; ++k) {
            const double vkp = v[static_cast<std::size_t>(k) * d + p];
            const double vkq = v[static_cast<std::size_t>(k) * d + q];
            v[static_cast<std::size_t>(k) * d + p] = c * vkp - s * vkq;
            v[static_cast<std::size_t>(k) * d + q] = s * vkp + c * vkq;
          }
      }
  }
  std::vector<double> eig(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) eig[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * d + i];
  if (vectors) *vectors = std::move(v);
  return eig;
}

struct Gaussian {
  std::vector<double> mean;
  std::vector<double> cov;  // d x d
};

Gaussian fit_gaussian(const std::vector<std::vector<double>>& feats) {
  const int n = static_cast<int>(feats.size());
  const int d = static_cast<int>(feats[0].size());
  Gaussian g;
  g.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& f : feats)
    for (int j = 0; j < d; ++j) g.mean[static_cast<std::size_t>(j)] += f[static_cast<std::size_t>(j)];
  for (auto& m : g.mean) m /= n;
  g.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& f : feats)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        g.cov[static_cast<std::size_t>(i) * d + j] +=
            (f[static_cast<std::size_t>(i)] - g.mean[static_cast<std::size_t>(i)]) *
            (f[static_cast<std::size_t>(j)] - g.mean[static_cast<std::size_t>(j)]);
  for (auto& c : g.cov) c /= (n - 1);
  for (int i = 0; i < d; ++i) g.cov[static_cast<std::size_t>(i) * d + i] += 1e-6;
  return g;
}

}  // namespace

double fid_lite(const std::vector<std::vector<double>>& real_features,
                const std::vector<std::vector<double>>& generated_features) {
  if (real_features.empty() || generated_features.empty())
    throw DataError("fid_lite: empty feature set");
  const int d = static_cast<int>(real_features[0].size());
  if (static_cast<int>(real_features.size()) < d + 1 ||
      static_cast<int>(generated_features.size()) < d + 1)
    throw DataError("fid_lite: need at least width+1 samples per set");

  const Gaussian g1 = fit_gaussian(real_features);
  const Gaussian g2 = fit_gaussian(generated_features);

  double mean_term = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = g1.mean[static_cast<std::size_t>(j)] - g2.mean[static_cast<std::size_t>(j)];
    mean_term += diff * diff;
  }

  // sqrt(S1) via eigendecomposition
  std::vector<double> s1 = g1.cov;
  std::vector<double> vecs;
  auto eig1 = symmetric_eigenvalues(s1, d, &vecs);
  for (auto& e : eig1) {
    if (e < -1e-6) throw NumericError("fid_lite: covariance eigenvalue below tolerance");
    e = std::sqrt(std::max(0.0, e));
  }
  std::vector<double> sqrt1(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += vecs[static_cast<std::size_t>(i) * d + k] * eig1[static_cast<std::size_t>(k)] *
               vecs[static_cast<std::size_t>(j) * d + k];
      sqrt1[static_cast<std::size_t>(i) * d + j] = acc;
    }

  // A = sqrt(S1) S2 sqrt(S1)
  std::vector<double> tmp(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double s = sqrt1[static_cast<std::size_t>(i) * d + k];
      if (s == 0.0) continue;
      for (int j = 0; j < d; ++j)
        tmp[static_cast<std::size_t>(i) * d + j] += s * g2.cov[static_cast<std::size_t>(k) * d + j];
    }
  std::vector<double> a(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double s = tmp[static_cast<std::size_t>(i) * d + k];
      if (s == 0.0) continue;
      for (int j = 0; j < d; ++j)
        a[static_cast<std::size_t>(i) * d + j] += s * sqrt1[static_cast<std::size_t>(k) * d + j];
    }
  // enforce exact symmetry before the eigensolve
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (a[static_cast<std::size_t>(i) * d + j] + a[static_cast<std::size_t>(j) * d + i]);
      a[static_cast<std::size_t>(i) * d + j] = avg;
      a[static_cast<std::size_t>(j) * d + i] = avg;
    }

  auto eig = symmetric_eigenvalues(a, d);
  double tr_sqrt = 0.0;
  for (auto& e : eig) {
    if (e < -1e-6) throw NumericError("fid_lite: cross-covariance eigenvalue below tolerance");
    tr_sqrt += std::sqrt(std::max(0.0, e));
  }

  double tr1 = 0.0, tr2 = 0.0;
  for (int i = 0; i < d; ++i) {
    tr1 += g1.cov[static_cast<std::size_t>(i) * d + i];
    tr2 += g2.cov[static_cast<std::size_t>(i) * d + i];
  }
  return std::max(0.0, mean_term + tr1 + tr2 - 2.0 * tr_sqrt);
}

// ---------------------------------------------------------------------------
// orchestration
// ---------------------------------------------------------------------------

EvalReport evaluate(const DnaModel<float>& model, const Corpus& corpus, const std::string& split,
                    const ContentClassifier& clf, const EvalOptions& opts) {
  const auto& data = corpus.split_data(split);
  if (data.empty()) throw DataError("evaluate: split " + split + " is empty");
  const int n_s = opts.style_samples > 0 ? opts.style_samples : model.config().style_samples;

  Kahan dtw_acc;
  std::vector<std::vector<double>> real_feats, gen_feats;
  std::vector<Trajectory> generated;
  std::vector<int> intended;
  for (const auto& gt : data) {
    std::mt19937_64 rng = make_rng(mix_seed(opts.seed, static_cast<std::uint64_t>(gt.writer_id),
                                            static_cast<std::uint64_t>(gt.char_id)));
    const auto style = sample_style_set(corpus, split, gt.writer_id, n_s, rng, gt.char_id);
    std::vector<const RasterImage*> ptrs;
    ptrs.reserve(style.size());
    for (const auto& img : style) ptrs.push_back(&img);
    auto traj = model.generate(ptrs, corpus.decomps.at(gt.char_id),
                               corpus.content_images.at(gt.char_id), rng);
    traj.writer_id = gt.writer_id;
    traj.char_id = gt.char_id;

    dtw_acc.add(dtw(traj, gt));
    real_feats.push_back(clf.features(gt));
    gen_feats.push_back(clf.features(traj));
    intended.push_back(gt.char_id);
    generated.push_back(std::move(traj));
  }

  EvalReport report;
  report.split = split;
  report.n_samples = static_cast<int>(data.size());
  report.dtw_mean = dtw_acc.sum / static_cast<double>(data.size());
  report.content_score = content_score(generated, intended, clf);
  report.fid_lite = fid_lite(real_feats, gen_feats);
  report.classifier_accuracy = clf.held_out_accuracy();
  return report;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["split"] = r.split;
  j["dtw_mean"] = r.dtw_mean;
  j["content_score"] = r.content_score;
  j["fid_lite"] = r.fid_lite;
  j["n_samples"] = r.n_samples;
  j["classifier_accuracy"] = r.classifier_accuracy;
  return j.dump(2);
}

std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  out << "split          " << r.split << "\n"
      << "samples        " << r.n_samples << "\n"
      << "DTW (mean)     " << r.dtw_mean << "\n"
      << "Content Score  " << r.content_score << "%\n"
      << "FID-lite       " << r.fid_lite << "\n"
      << "evaluator acc  " << r.classifier_accuracy << "%\n";
  return out.str();
}

}  // namespace glyphforge
