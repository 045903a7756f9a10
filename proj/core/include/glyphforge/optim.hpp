#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "glyphforge/errors.hpp"
#include "glyphforge/layers.hpp"

namespace glyphforge::nn {

// Bias-corrected Adam over a ParamStore. Frozen parameters receive no update
// and keep their moments untouched.
template <class S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps, std::int64_t total_coords)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.assign(static_cast<std::size_t>(total_coords), S(0));
    v_.assign(static_cast<std::size_t>(total_coords), S(0));
  }

  std::uint64_t t() const { return t_; }
  const std::vector<S>& m() const { return m_; }
  const std::vector<S>& v() const { return v_; }

  void set_state(std::uint64_t t, std::vector<S> m, std::vector<S> v) {
    if (m.size() != m_.size() || v.size() != v_.size())
      throw DataError("optimizer state size mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  void step(ParamStore<S>& ps, const std::vector<std::uint8_t>& frozen = {}) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t offset = 0;
    std::size_t pi = 0;
    for (auto& [name, var] : ps.items()) {
      auto& vals = var.value().v;
      const auto& grad = var.grad();
      const bool skip = !frozen.empty() && frozen[pi];
      if (!skip && !grad.empty()) {
        for (std::size_t i = 0; i < vals.size(); ++i) {
          const double g = grad[i];
          const std::size_t k = offset + i;
          m_[k] = static_cast<S>(beta1_ * m_[k] + (1.0 - beta1_) * g);
          v_[k] = static_cast<S>(beta2_ * v_[k] + (1.0 - beta2_) * g * g);
          const double mhat = m_[k] / bc1;
          const double vhat = v_[k] / bc2;
          vals[i] = static_cast<S>(vals[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
      }
      offset += vals.size();
      ++pi;
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<S> m_, v_;
};

}  // namespace glyphforge::nn
