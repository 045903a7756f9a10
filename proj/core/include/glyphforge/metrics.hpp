#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "glyphforge/corpus.hpp"
#include "glyphforge/model.hpp"

namespace glyphforge {

struct EvalReport {
  std::string split;
  double dtw_mean = 0.0;
  double content_score = 0.0;  // percent
  double fid_lite = 0.0;
  int n_samples = 0;
  double classifier_accuracy = 0.0;  // held-out accuracy of the evaluator, percent
};

// Path-length-normalized DTW over mean-centered, scale-normalized absolute
// coordinates: minimum over monotone alignment paths of (summed Euclidean
// point cost / path length).
double dtw(const Trajectory& a, const Trajectory& b);

struct ClassifierConfig {
  int width = 32;  // feature width of the evaluator network
  int heads = 2;
  double lr = 1e-3;
  int batch = 128;
  int steps = 600;
  double train_frac = 0.8;
  int max_points = 300;
  std::uint64_t seed = 500;
};

// Sequence classifier used as the Content Score evaluator: point embedding,
// two transformer layers, mean pooling, linear head. The pooled feature also
// feeds the Frechet feature distance.
class ContentClassifier {
 public:
  ContentClassifier(ClassifierConfig cfg, std::vector<int> class_ids, std::uint64_t init_seed);
  ~ContentClassifier();
  ContentClassifier(ContentClassifier&&) noexcept;
  ContentClassifier& operator=(ContentClassifier&&) noexcept;

  // Trains on train_frac of the data and reports held-out accuracy (percent).
  double train(const std::vector<const Trajectory*>& samples);

  int predict(const Trajectory& t) const;               // returns a class id
  std::vector<double> features(const Trajectory& t) const;

  int n_classes() const;
  const std::vector<int>& class_ids() const;
  double held_out_accuracy() const;
  const ClassifierConfig& config() const;

  void save(const std::string& path) const;
  static ContentClassifier load(const std::string& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ContentClassifier();
};

ContentClassifier train_content_classifier(const Corpus& corpus, const std::string& split,
                                           const ClassifierConfig& cfg);

// Percentage of generated trajectories classified as their intended character.
double content_score(const std::vector<Trajectory>& generated,
                     const std::vector<int>& intended_chars, const ContentClassifier& clf);

// Frechet distance between Gaussian fits of two feature sets; covariance
// square root via symmetric eigendecomposition, small diagonal regularization.
double fid_lite(const std::vector<std::vector<double>>& real_features,
                const std::vector<std::vector<double>>& generated_features);

struct EvalOptions {
  std::uint64_t seed = 1;
  int style_samples = -1;  // -1: use the model config value
};

EvalReport evaluate(const DnaModel<float>& model, const Corpus& corpus, const std::string& split,
                    const ContentClassifier& clf, const EvalOptions& opts = {});

std::string report_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace glyphforge
