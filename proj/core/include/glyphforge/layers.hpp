#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glyphforge/autodiff.hpp"
#include "glyphforge/errors.hpp"

namespace glyphforge::nn {

using ag::Shape;
using ag::TensorT;
using ag::VarT;

// Named trainable parameters; names carry the owning branch prefix
// (style. / content. / decoder.) so stage-2 freezing can match on it.
template <class S>
class ParamStore {
 public:
  VarT<S> create(const std::string& name, TensorT<S> init) {
    if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
    index_[name] = items_.size();
    items_.push_back({name, VarT<S>::leaf(std::move(init), true)});
    return items_.back().second;
  }

  const VarT<S>& get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter: " + name);
    return items_[it->second].second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::pair<std::string, VarT<S>>>& items() const { return items_; }
  std::vector<std::pair<std::string, VarT<S>>>& items() { return items_; }

  std::int64_t total_coords() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : items_) n += v.value().numel();
    return n;
  }

  void clear_grads() {
    for (auto& [name, v] : items_) v.clear_grad();
  }

 private:
  std::vector<std::pair<std::string, VarT<S>>> items_;
  std::map<std::string, std::size_t> index_;
};

template <class S>
TensorT<S> glorot_uniform(Shape shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  TensorT<S> t(std::move(shape));
  for (auto& v : t.v) v = static_cast<S>(dist(rng));
  return t;
}

template <class S>
TensorT<S> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  TensorT<S> t(std::move(shape));
  for (auto& v : t.v) v = static_cast<S>(dist(rng));
  return t;
}

template <class S>
struct Linear {
  VarT<S> weight;  // [in x out]
  VarT<S> bias;    // [1 x out], optional

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& prefix, int in, int out, std::mt19937_64& rng,
         bool with_bias = true) {
    weight = ps.create(prefix + ".weight", glorot_uniform<S>({in, out}, in, out, rng));
    if (with_bias) bias = ps.create(prefix + ".bias", TensorT<S>(Shape{1, out}));
  }

  VarT<S> operator()(const VarT<S>& x) const {
    const auto y = ag::matmul(x, weight);
    return bias.defined() ? ag::add_bias(y, bias) : y;
  }
};

template <class S>
struct LayerNorm {
  VarT<S> gain;
  VarT<S> bias;

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& prefix, int dim) {
    gain = ps.create(prefix + ".gain", TensorT<S>(Shape{1, dim}, S(1)));
    bias = ps.create(prefix + ".bias", TensorT<S>(Shape{1, dim}));
  }

  VarT<S> operator()(const VarT<S>& x) const { return ag::layer_norm_rows(x, gain, bias); }
};

// Q from `query`, K and V from `kv`, standard output projection.
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  // key projection carries no bias: a shared key offset cancels in softmax
  MultiHeadAttention(ParamStore<S>& ps, const std::string& prefix, int dim, int heads_,
                     std::mt19937_64& rng)
      : wq(ps, prefix + ".wq", dim, dim, rng),
        wk(ps, prefix + ".wk", dim, dim, rng, /*with_bias=*/false),
        wv(ps, prefix + ".wv", dim, dim, rng),
        wo(ps, prefix + ".wo", dim, dim, rng),
        heads(heads_) {}

  VarT<S> operator()(const VarT<S>& query, const VarT<S>& kv, int blocks = 1, bool causal = false,
                     const std::vector<std::uint8_t>& key_mask = {}) const {
    const auto q = wq(query);
    const auto k = wk(kv);
    const auto v = wv(kv);
    return wo(ag::attention(q, k, v, blocks, heads, causal, key_mask));
  }
};

// Post-norm transformer encoder layer, feed-forward expansion x2.
template <class S>
struct EncoderLayer {
  MultiHeadAttention<S> attn;
  LayerNorm<S> ln1, ln2;
  Linear<S> ff1, ff2;

  EncoderLayer() = default;
  EncoderLayer(ParamStore<S>& ps, const std::string& prefix, int dim, int heads,
               std::mt19937_64& rng)
      : attn(ps, prefix + ".attn", dim, heads, rng),
        ln1(ps, prefix + ".ln1", dim),
        ln2(ps, prefix + ".ln2", dim),
        ff1(ps, prefix + ".ff1", dim, 2 * dim, rng),
        ff2(ps, prefix + ".ff2", 2 * dim, dim, rng) {}

  VarT<S> operator()(const VarT<S>& x, int blocks = 1,
                     const std::vector<std::uint8_t>& key_mask = {}) const {
    auto h = ln1(ag::add(x, attn(x, x, blocks, false, key_mask)));
    return ln2(ag::add(h, ff2(ag::relu(ff1(h)))));
  }
};

// Gates in i, f, g, o order.
template <class S>
struct LstmCell {
  Linear<S> wx;  // [in x 4H]
  VarT<S> wh;    // [H x 4H]
  int hidden = 0;

  LstmCell() = default;
  LstmCell(ParamStore<S>& ps, const std::string& prefix, int in, int hidden_, std::mt19937_64& rng)
      : wx(ps, prefix + ".wx", in, 4 * hidden_, rng), hidden(hidden_) {
    wh = ps.create(prefix + ".wh", glorot_uniform<S>({hidden_, 4 * hidden_}, hidden_, 4 * hidden_, rng));
  }

  std::pair<VarT<S>, VarT<S>> step(const VarT<S>& x, const VarT<S>& h, const VarT<S>& c) const {
    const auto gates = ag::add(wx(x), ag::matmul(h, wh));
    const auto i = ag::sigmoid(ag::slice_cols(gates, 0, hidden));
    const auto f = ag::sigmoid(ag::slice_cols(gates, hidden, hidden));
    const auto g = ag::tanh_act(ag::slice_cols(gates, 2 * hidden, hidden));
    const auto o = ag::sigmoid(ag::slice_cols(gates, 3 * hidden, hidden));
    const auto c_next = ag::add(ag::mul(f, c), ag::mul(i, g));
    const auto h_next = ag::mul(o, ag::tanh_act(c_next));
    return {h_next, c_next};
  }
};

}  // namespace glyphforge::nn
