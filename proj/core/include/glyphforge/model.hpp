#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "glyphforge/autodiff.hpp"
#include "glyphforge/decomp.hpp"
#include "glyphforge/errors.hpp"
#include "glyphforge/layers.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/trajectory.hpp"

namespace glyphforge {

struct ModelConfig {
  int d_prime = 64;        // shared feature width d'
  int style_tokens = 16;   // d: 4x4 token grid out of the conv backbone
  int global_tokens = 16;  // d^g
  int heads = 4;
  int mixtures = 20;       // R
  int style_samples = 15;  // N_s
  int max_points = 300;    // N_p generation cap
  int image_h = 32;
  int image_w = 32;
  int char_vocab = 0;         // N_c
  int struct_vocab = 0;       // positional structure tokens incl. padding
  int compo_vocab = 0;        // component tokens incl. padding
  int max_struct_tokens = 4;  // sizing for the local positional table

  int gmm_arity() const { return 6 * mixtures + 3; }

  void validate() const {
    if (d_prime < 2 || d_prime % heads != 0)
      throw UsageError("d_prime must be positive and divisible by heads");
    if (mixtures < 1) throw UsageError("mixtures must be >= 1");
    if (max_points < 1) throw UsageError("max_points must be >= 1");
    if (style_samples < 1) throw UsageError("style_samples must be >= 1");
    if (image_h < 8 || image_w < 8) throw UsageError("images must be at least 8x8");
    if (char_vocab < 1 || struct_vocab < 1 || compo_vocab < 1)
      throw UsageError("vocabulary sizes must be set from the corpus");
  }
};

// Activated per-step decoder output.
struct GmmParams {
  std::vector<double> pi;   // mixture probabilities, sums to 1
  std::vector<double> mux;
  std::vector<double> muy;
  std::vector<double> sx;   // exp(log-scale)
  std::vector<double> sy;
  std::vector<double> rho;  // tanh-squashed, in (-1,1)
  std::array<double, 3> state_logits{};
  std::array<double, 3> state_probs{};
};

template <class Raw>
GmmParams activate_gmm(const Raw* raw, int mixtures) {
  GmmParams g;
  const int r = mixtures;
  g.pi.resize(static_cast<std::size_t>(r));
  g.mux.resize(static_cast<std::size_t>(r));
  g.muy.resize(static_cast<std::size_t>(r));
  g.sx.resize(static_cast<std::size_t>(r));
  g.sy.resize(static_cast<std::size_t>(r));
  g.rho.resize(static_cast<std::size_t>(r));
  double mx = static_cast<double>(raw[0]);
  for (int i = 1; i < r; ++i) mx = std::max(mx, static_cast<double>(raw[i]));
  double sum = 0.0;
  for (int i = 0; i < r; ++i) {
    g.pi[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(raw[i]) - mx);
    sum += g.pi[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < r; ++i) g.pi[static_cast<std::size_t>(i)] /= sum;
  for (int i = 0; i < r; ++i) {
    g.mux[static_cast<std::size_t>(i)] = static_cast<double>(raw[r + i]);
    g.muy[static_cast<std::size_t>(i)] = static_cast<double>(raw[2 * r + i]);
    g.sx[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(raw[3 * r + i]));
    g.sy[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(raw[4 * r + i]));
    g.rho[static_cast<std::size_t>(i)] = std::tanh(static_cast<double>(raw[5 * r + i]));
  }
  double smx = static_cast<double>(raw[6 * r]);
  for (int i = 1; i < 3; ++i) smx = std::max(smx, static_cast<double>(raw[6 * r + i]));
  double ssum = 0.0;
  for (int i = 0; i < 3; ++i) {
    g.state_logits[static_cast<std::size_t>(i)] = static_cast<double>(raw[6 * r + i]);
    g.state_probs[static_cast<std::size_t>(i)] =
        std::exp(static_cast<double>(raw[6 * r + i]) - smx);
    ssum += g.state_probs[static_cast<std::size_t>(i)];
  }
  for (auto& p : g.state_probs) p /= ssum;
  return g;
}

// Component choice ~ Cat(pi), offset ~ bivariate normal, pen state greedy or
// categorical.
PointRecord sample_point(const GmmParams& g, std::mt19937_64& rng, bool greedy_states = true);

template <class S>
class DnaModel {
 public:
  using Var = ag::VarT<S>;
  using Tensor = ag::TensorT<S>;

  struct StyleFeats {
    Var writer_style;  // S_s rows, [n_images * d x d']
    Var glyph_style;   // G_s rows, same shape
    int n_images = 0;
    int tokens_per_image = 0;
  };

  struct LocalFeats {
    Var tokens;  // Z_lc, [(n_struct + 12) x d']
    std::vector<std::uint8_t> key_mask;
    int n_struct = 0;
  };

  DnaModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng = make_rng(init_seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return ps_; }
  const nn::ParamStore<S>& params() const { return ps_; }

  // ----- style branch ------------------------------------------------------

  // Encode any image count; each image contributes `style_tokens` rows.
  StyleFeats encode_styles(const std::vector<const RasterImage*>& images) const {
    const Var z = backbone_tokens(images, style_conv_, ps_.get("style.encoder.pos"));
    const int b = static_cast<int>(images.size());
    Var h = z;
    for (const auto& layer : style_tf_) h = layer(h, b);
    StyleFeats out;
    out.writer_style = style_head_(h, b);
    out.glyph_style = glyph_head_(h, b);
    out.n_images = b;
    out.tokens_per_image = cfg_.style_tokens;
    return out;
  }

  // Spec surface: exactly N_s style images.
  StyleFeats style_branch(const std::vector<RasterImage>& images) const {
    if (static_cast<int>(images.size()) != cfg_.style_samples)
      throw DataError("style_branch: expected " + std::to_string(cfg_.style_samples) +
                      " style images, got " + std::to_string(images.size()));
    std::vector<const RasterImage*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    return encode_styles(ptrs);
  }

  // ----- content branch ----------------------------------------------------

  LocalFeats local_encoder(const Decomposition& d) const {
    const int n_struct = d.num_structs();
    std::vector<int> struct_ids(d.v_struct.begin(), d.v_struct.end());
    std::vector<int> compo_ids(d.v_compo.begin(), d.v_compo.end());
    for (const int id : struct_ids)
      if (id < 0 || id >= cfg_.struct_vocab) throw DataError("structure token out of vocabulary");
    for (const int id : compo_ids)
      if (id < 0 || id >= cfg_.compo_vocab) throw DataError("component token out of vocabulary");

    std::vector<Var> parts;
    if (n_struct > 0) parts.push_back(ag::embedding_rows(ps_.get("content.local.struct_emb"), struct_ids));
    parts.push_back(ag::embedding_rows(ps_.get("content.local.compo_emb"), compo_ids));
    Var tokens = n_struct > 0 ? ag::concat_rows(parts) : parts[0];

    // fixed positional rows: struct token i -> row min(i, cap-1); compo slot j
    // -> row cap + j
    std::vector<int> pos_ids;
    pos_ids.reserve(static_cast<std::size_t>(n_struct) + kComponentSlots);
    for (int i = 0; i < n_struct; ++i) pos_ids.push_back(std::min(i, cfg_.max_struct_tokens - 1));
    for (int j = 0; j < kComponentSlots; ++j) pos_ids.push_back(cfg_.max_struct_tokens + j);
    tokens = ag::add(tokens, ag::embedding_rows(ps_.get("content.local.pos"), pos_ids));

    LocalFeats out;
    out.n_struct = n_struct;
    out.key_mask.assign(static_cast<std::size_t>(n_struct) + kComponentSlots, 1);
    for (int j = 0; j < kComponentSlots; ++j)
      if (d.v_compo[static_cast<std::size_t>(j)] == 0)
        out.key_mask[static_cast<std::size_t>(n_struct + j)] = 0;

    Var h = tokens;
    for (const auto& layer : local_tf_) h = layer(h, 1, out.key_mask);
    out.tokens = h;
    return out;
  }

  // Batched global texture encoding; each image contributes d^g rows.
  Var encode_globals(const std::vector<const RasterImage*>& images) const {
    const Var z = backbone_tokens(images, global_conv_, ps_.get("content.global.pos"));
    Var h = z;
    for (const auto& layer : global_tf_) h = layer(h, static_cast<int>(images.size()));
    return h;
  }

  Var global_encoder(const RasterImage& img) const { return encode_globals({&img}); }

  // Eq. 4: Z_c = Avg(CA(ln Z_gc, ln Z_lc) + Z_gc)
  Var fuse(const Var& z_gc, const LocalFeats& lc) const {
    if (z_gc.value().cols() != cfg_.d_prime || lc.tokens.value().cols() != cfg_.d_prime)
      throw NumericError("fuse: feature width mismatch");
    const Var q = fuse_ln_q_(z_gc);
    const Var kv = fuse_ln_kv_(lc.tokens);
    const Var ca = fuse_ca_(q, kv, 1, false, lc.key_mask);
    return ag::mean_rows(ag::add(ca, z_gc));
  }

  // Z_lg = Avg(CA(ln Z_lc, ln Z_gc) + Z_lc)
  Var refine_local(const LocalFeats& lc, const Var& z_gc) const {
    const Var q = refine_ln_q_(lc.tokens);
    const Var kv = refine_ln_kv_(z_gc);
    const Var ca = refine_ca_(q, kv, 1, false);
    return ag::mean_rows(ag::add(ca, lc.tokens));
  }

  // ----- auxiliary heads ---------------------------------------------------

  Var char_logits(const Var& z_c) const { return char_head_(z_c); }

  // LSTM unrolled from Z_lg; structure logits for the first n_struct steps,
  // component logits for the next n_compo steps.
  std::pair<Var, Var> decomp_logits(const Var& z_lg, int n_struct, int n_compo) const {
    Var h = ag::tanh_act(decomp_init_h_(z_lg));
    Var c = ag::tanh_act(decomp_init_c_(z_lg));
    std::vector<Var> struct_rows, compo_rows;
    for (int t = 0; t < n_struct + n_compo; ++t) {
      auto [h2, c2] = decomp_lstm_.step(z_lg, h, c);
      h = h2;
      c = c2;
      if (t < n_struct)
        struct_rows.push_back(decomp_struct_head_(h));
      else
        compo_rows.push_back(decomp_compo_head_(h));
    }
    Var s = struct_rows.empty() ? Var() : ag::concat_rows(struct_rows);
    Var cmp = compo_rows.empty() ? Var() : ag::concat_rows(compo_rows);
    return {s, cmp};
  }

  // ----- decoder -----------------------------------------------------------

  // Teacher-forced full-sequence decode. Row t predicts point t+1 given
  // [Z_c, p_1 .. p_t]. Output [T x (6R+3)] with T = prev_points.size() + 1.
  Var decode_sequence(const Var& z_c, const std::vector<PointRecord>& prev_points,
                      const StyleFeats& style) const {
    const int t_ctx = static_cast<int>(prev_points.size()) + 1;
    if (t_ctx > cfg_.max_points)
      throw DataError("decode_sequence: context exceeds max_points");

    Var ctx = build_context(z_c, prev_points);
    const Var pbar = self_ln_(ag::add(ctx, self_attn_(ctx, ctx, 1, true)));
    const Var s_bar = ln_style_(style.writer_style);
    const Var z_cs = ag::add(ca_style_(pbar, s_bar, 1, false), ctx);
    const Var g_bar = ln_glyph_(style.glyph_style);
    const Var fused = ag::add(ca_glyph_(ln_cs_(z_cs), g_bar, 1, false), z_cs);
    return f2_(ag::relu(f1_(fused)));
  }

  // Spec surface: raw output for the final step only.
  Var decode_step(const Var& z_c, const std::vector<PointRecord>& prev_points,
                  const StyleFeats& style) const {
    const Var seq = decode_sequence(z_c, prev_points, style);
    return ag::slice_rows(seq, seq.value().rows() - 1, 1);
  }

  // Autoregressive generation with per-step KV caching; stops at pen-end or
  // after max_points.
  Trajectory generate(const std::vector<const RasterImage*>& style_images,
                      const Decomposition& decomp, const RasterImage& content_image,
                      std::mt19937_64& rng, bool greedy_states = true) const;

  // Plain-value forward used by generate(); exposed for the decode-path
  // consistency test.
  std::vector<S> infer_sequence_last_raw(const std::vector<S>& z_c,
                                         const std::vector<S>& s_rows,
                                         const std::vector<S>& g_rows, int n_style_rows,
                                         const std::vector<PointRecord>& prev_points) const;

 private:
  struct ConvBlock {
    Var weight;  // [out, in, 3, 3]
    Var bias;    // [1, out]
  };

  ModelConfig cfg_;
  nn::ParamStore<S> ps_;

  std::vector<ConvBlock> style_conv_, global_conv_;
  std::vector<nn::EncoderLayer<S>> style_tf_, global_tf_, local_tf_;
  nn::EncoderLayer<S> style_head_, glyph_head_;

  nn::MultiHeadAttention<S> fuse_ca_, refine_ca_;
  nn::LayerNorm<S> fuse_ln_q_, fuse_ln_kv_, refine_ln_q_, refine_ln_kv_;

  nn::Linear<S> char_head_;
  nn::Linear<S> decomp_init_h_, decomp_init_c_;
  nn::LstmCell<S> decomp_lstm_;
  nn::Linear<S> decomp_struct_head_, decomp_compo_head_;

  nn::Linear<S> point_emb_;
  nn::MultiHeadAttention<S> self_attn_, ca_style_, ca_glyph_;
  nn::LayerNorm<S> self_ln_, ln_style_, ln_cs_, ln_glyph_;
  nn::Linear<S> f1_, f2_;

  static int conv_blocks_for(int size) {
    int blocks = 0;
    while (size > 4) {
      if (size % 2 != 0) throw UsageError("image side must reduce to 4 by halving");
      size /= 2;
      ++blocks;
    }
    if (size != 4) throw UsageError("image side must reduce to exactly 4");
    return blocks;
  }

  void build(std::mt19937_64& rng) {
    const int d = cfg_.d_prime;
    const int blocks = conv_blocks_for(std::min(cfg_.image_h, cfg_.image_w));
    if (cfg_.image_h != cfg_.image_w) throw UsageError("images must be square");
    if (cfg_.style_tokens != 16 || cfg_.global_tokens != 16)
      throw UsageError("token grid is fixed at 4x4 = 16");

    auto make_conv = [&](const std::string& prefix, std::vector<ConvBlock>& dst) {
      int cin = 1;
      for (int i = 0; i < blocks; ++i) {
        const int cout = i + 1 == blocks ? d : std::min(16 << i, d);
        ConvBlock cb;
        cb.weight = ps_.create(prefix + std::to_string(i) + ".weight",
                               nn::glorot_uniform<S>({cout, cin, 3, 3}, cin * 9, cout * 9, rng));
        cb.bias = ps_.create(prefix + std::to_string(i) + ".bias", Tensor(ag::Shape{1, cout}));
        dst.push_back(cb);
        cin = cout;
      }
    };

    // style branch
    make_conv("style.encoder.conv", style_conv_);
    ps_.create("style.encoder.pos", nn::normal_init<S>({cfg_.style_tokens, d}, 0.02, rng));
    for (int i = 0; i < 2; ++i)
      style_tf_.emplace_back(ps_, "style.encoder.tf" + std::to_string(i), d, cfg_.heads, rng);
    style_head_ = nn::EncoderLayer<S>(ps_, "style.style_head", d, cfg_.heads, rng);
    glyph_head_ = nn::EncoderLayer<S>(ps_, "style.glyph_head", d, cfg_.heads, rng);

    // content branch: local
    ps_.create("content.local.struct_emb", nn::normal_init<S>({cfg_.struct_vocab, d}, 0.02, rng));
    ps_.create("content.local.compo_emb", nn::normal_init<S>({cfg_.compo_vocab, d}, 0.02, rng));
    ps_.create("content.local.pos",
               nn::normal_init<S>({cfg_.max_struct_tokens + kComponentSlots, d}, 0.02, rng));
    for (int i = 0; i < 2; ++i)
      local_tf_.emplace_back(ps_, "content.local.tf" + std::to_string(i), d, cfg_.heads, rng);

    // content branch: global
    make_conv("content.global.conv", global_conv_);
    ps_.create("content.global.pos", nn::normal_init<S>({cfg_.global_tokens, d}, 0.02, rng));
    for (int i = 0; i < 2; ++i)
      global_tf_.emplace_back(ps_, "content.global.tf" + std::to_string(i), d, cfg_.heads, rng);

    // fusion + refinement
    fuse_ln_q_ = nn::LayerNorm<S>(ps_, "content.fuse.ln_q", d);
    fuse_ln_kv_ = nn::LayerNorm<S>(ps_, "content.fuse.ln_kv", d);
    fuse_ca_ = nn::MultiHeadAttention<S>(ps_, "content.fuse.ca", d, cfg_.heads, rng);
    refine_ln_q_ = nn::LayerNorm<S>(ps_, "content.refine.ln_q", d);
    refine_ln_kv_ = nn::LayerNorm<S>(ps_, "content.refine.ln_kv", d);
    refine_ca_ = nn::MultiHeadAttention<S>(ps_, "content.refine.ca", d, cfg_.heads, rng);

    // auxiliary heads
    char_head_ = nn::Linear<S>(ps_, "content.char_head", d, cfg_.char_vocab, rng);
    decomp_init_h_ = nn::Linear<S>(ps_, "content.decomp.init_h", d, d, rng);
    decomp_init_c_ = nn::Linear<S>(ps_, "content.decomp.init_c", d, d, rng);
    decomp_lstm_ = nn::LstmCell<S>(ps_, "content.decomp.lstm", d, d, rng);
    decomp_struct_head_ = nn::Linear<S>(ps_, "content.decomp.struct_head", d, kNumStructureOps, rng);
    decomp_compo_head_ = nn::Linear<S>(ps_, "content.decomp.compo_head", d, cfg_.compo_vocab - 1, rng);

    // decoder
    point_emb_ = nn::Linear<S>(ps_, "decoder.point_emb", 5, d, rng);
    ps_.create("decoder.pos", nn::normal_init<S>({cfg_.max_points + 1, d}, 0.02, rng));
    self_attn_ = nn::MultiHeadAttention<S>(ps_, "decoder.self", d, cfg_.heads, rng);
    self_ln_ = nn::LayerNorm<S>(ps_, "decoder.self_ln", d);
    ln_style_ = nn::LayerNorm<S>(ps_, "decoder.ln_style", d);
    ca_style_ = nn::MultiHeadAttention<S>(ps_, "decoder.ca_style", d, cfg_.heads, rng);
    ln_cs_ = nn::LayerNorm<S>(ps_, "decoder.ln_cs", d);
    ln_glyph_ = nn::LayerNorm<S>(ps_, "decoder.ln_glyph", d);
    ca_glyph_ = nn::MultiHeadAttention<S>(ps_, "decoder.ca_glyph", d, cfg_.heads, rng);
    f1_ = nn::Linear<S>(ps_, "decoder.f1", d, 2 * d, rng);
    f2_ = nn::Linear<S>(ps_, "decoder.f2", 2 * d, cfg_.gmm_arity(), rng);
  }

  Tensor images_to_tensor(const std::vector<const RasterImage*>& images) const {
    if (images.empty()) throw DataError("no images given");
    const int b = static_cast<int>(images.size());
    Tensor t(ag::Shape{b, 1, cfg_.image_h, cfg_.image_w});
    for (int i = 0; i < b; ++i) {
      const auto& img = *images[static_cast<std::size_t>(i)];
      if (img.height != cfg_.image_h || img.width != cfg_.image_w)
        throw DataError("image size " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " does not match config");
      for (std::size_t p = 0; p < img.pixels.size(); ++p)
        t.v[static_cast<std::size_t>(i) * img.pixels.size() + p] = static_cast<S>(img.pixels[p]);
    }
    return t;
  }

  Var backbone_tokens(const std::vector<const RasterImage*>& images,
                      const std::vector<ConvBlock>& conv, const Var& pos) const {
    Var x = Var::constant(images_to_tensor(images));
    for (const auto& cb : conv) x = ag::relu(ag::conv2d(x, cb.weight, cb.bias, 2, 1));
    Var tokens = ag::image_to_tokens(x);  // [B*16 x d']
    return ag::add_block_bias(tokens, pos);
  }

  Var build_context(const Var& z_c, const std::vector<PointRecord>& prev_points) const {
    if (prev_points.empty()) return z_c;
    const int n = static_cast<int>(prev_points.size());
    Tensor pts(ag::Shape{n, 5});
    std::vector<int> pos_ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& p = prev_points[static_cast<std::size_t>(i)];
      pts.at(i, 0) = static_cast<S>(p.dx);
      pts.at(i, 1) = static_cast<S>(p.dy);
      pts.at(i, 2) = static_cast<S>(p.down);
      pts.at(i, 3) = static_cast<S>(p.up);
      pts.at(i, 4) = static_cast<S>(p.end);
      pos_ids[static_cast<std::size_t>(i)] = i + 1;
    }
    const Var embedded = ag::add(point_emb_(Var::constant(pts)),
                                 ag::embedding_rows(ps_.get("decoder.pos"), pos_ids));
    return ag::concat_rows<S>({z_c, embedded});
  }
};

// ---------------------------------------------------------------------------
// plain-value inference path (mirrors decode_sequence step for step)
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void matvec(const S* x, const S* w, const S* b, int in, int out, S* dst) {
  for (int j = 0; j < out; ++j) dst[j] = b ? b[j] : S(0);
  for (int i = 0; i < in; ++i) {
    const S xv = x[i];
    const S* wrow = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) dst[j] += xv * wrow[j];
  }
}

template <class S>
void layer_norm_row(const S* x, const S* gain, const S* bias, int d, S* dst) {
  S mean = S(0);
  for (int j = 0; j < d; ++j) mean += x[j];
  mean /= static_cast<S>(d);
  S var = S(0);
  for (int j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<S>(d);
  const S inv = S(1) / std::sqrt(var + S(1e-5));
  for (int j = 0; j < d; ++j) dst[j] = (x[j] - mean) * inv * gain[j] + bias[j];
}

// single query row attending over n cached key/value rows
template <class S>
void attend_row(const S* q, const S* keys, const S* vals, int n, int d, int heads, S* dst,
                std::vector<S>& scratch) {
  const int hd = d / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(hd));
  scratch.resize(static_cast<std::size_t>(n));
  for (int h = 0; h < heads; ++h) {
    const int off = h * hd;
    for (int j = 0; j < n; ++j) {
      const S* krow = keys + static_cast<std::size_t>(j) * d + off;
      S acc = S(0);
      for (int l = 0; l < hd; ++l) acc += q[off + l] * krow[l];
      scratch[static_cast<std::size_t>(j)] = acc * inv_sqrt;
    }
    ag::detail::softmax_row(scratch.data(), n);
    for (int l = 0; l < hd; ++l) dst[off + l] = S(0);
    for (int j = 0; j < n; ++j) {
      const S wgt = scratch[static_cast<std::size_t>(j)];
      const S* vrow = vals + static_cast<std::size_t>(j) * d + off;
      for (int l = 0; l < hd; ++l) dst[off + l] += wgt * vrow[l];
    }
  }
}

// Per-generation decoder state: projected style keys/values are fixed, self
// attention keys/values grow one row per step.
template <class S>
struct DecoderCache {
  const nn::ParamStore<S>* ps = nullptr;
  int d = 0, heads = 0, arity = 0;
  std::vector<S> k_style, v_style, k_glyph, v_glyph;
  int n_style = 0;
  std::vector<S> k_self, v_self;
  std::vector<S> scratch;

  const S* w(const std::string& name) const { return ps->get(name).value().v.data(); }

  void init(const nn::ParamStore<S>& store, int d_, int heads_, int arity_,
            const std::vector<S>& s_rows, const std::vector<S>& g_rows, int n_rows) {
    ps = &store;
    d = d_;
    heads = heads_;
    arity = arity_;
    n_style = n_rows;
    std::vector<S> bar(static_cast<std::size_t>(d));
    k_style.resize(static_cast<std::size_t>(n_rows) * d);
    v_style.resize(static_cast<std::size_t>(n_rows) * d);
    k_glyph.resize(static_cast<std::size_t>(n_rows) * d);
    v_glyph.resize(static_cast<std::size_t>(n_rows) * d);
    for (int i = 0; i < n_rows; ++i) {
      layer_norm_row(s_rows.data() + static_cast<std::size_t>(i) * d,
                     w("decoder.ln_style.gain"), w("decoder.ln_style.bias"), d, bar.data());
      matvec(bar.data(), w("decoder.ca_style.wk.weight"), static_cast<const S*>(nullptr), d, d,
             k_style.data() + static_cast<std::size_t>(i) * d);
      matvec(bar.data(), w("decoder.ca_style.wv.weight"), w("decoder.ca_style.wv.bias"), d, d,
             v_style.data() + static_cast<std::size_t>(i) * d);
      layer_norm_row(g_rows.data() + static_cast<std::size_t>(i) * d,
                     w("decoder.ln_glyph.gain"), w("decoder.ln_glyph.bias"), d, bar.data());
      matvec(bar.data(), w("decoder.ca_glyph.wk.weight"), static_cast<const S*>(nullptr), d, d,
             k_glyph.data() + static_cast<std::size_t>(i) * d);
      matvec(bar.data(), w("decoder.ca_glyph.wv.weight"), w("decoder.ca_glyph.wv.bias"), d, d,
             v_glyph.data() + static_cast<std::size_t>(i) * d);
    }
  }

  // context row in, raw gmm row out
  std::vector<S> step(const std::vector<S>& ctx_row) {
    std::vector<S> q(static_cast<std::size_t>(d)), tmp(static_cast<std::size_t>(d)),
        tmp2(static_cast<std::size_t>(d));
    const std::size_t t = k_self.size() / static_cast<std::size_t>(d);
    k_self.resize((t + 1) * static_cast<std::size_t>(d));
    v_self.resize((t + 1) * static_cast<std::size_t>(d));
    matvec(ctx_row.data(), w("decoder.self.wk.weight"), static_cast<const S*>(nullptr), d, d,
           k_self.data() + t * static_cast<std::size_t>(d));
    matvec(ctx_row.data(), w("decoder.self.wv.weight"), w("decoder.self.wv.bias"), d, d,
           v_self.data() + t * static_cast<std::size_t>(d));
    matvec(ctx_row.data(), w("decoder.self.wq.weight"), w("decoder.self.wq.bias"), d, d, q.data());
    attend_row(q.data(), k_self.data(), v_self.data(), static_cast<int>(t) + 1, d, heads,
               tmp.data(), scratch);
    matvec(tmp.data(), w("decoder.self.wo.weight"), w("decoder.self.wo.bias"), d, d, tmp2.data());
    for (int j = 0; j < d; ++j) tmp2[static_cast<std::size_t>(j)] += ctx_row[static_cast<std::size_t>(j)];
    std::vector<S> pbar(static_cast<std::size_t>(d));
    layer_norm_row(tmp2.data(), w("decoder.self_ln.gain"), w("decoder.self_ln.bias"), d,
                   pbar.data());

    // first CA: stroke-style keys/values, residual adds the raw context row
    matvec(pbar.data(), w("decoder.ca_style.wq.weight"), w("decoder.ca_style.wq.bias"), d, d,
           q.data());
    attend_row(q.data(), k_style.data(), v_style.data(), n_style, d, heads, tmp.data(), scratch);
    std::vector<S> z_cs(static_cast<std::size_t>(d));
    matvec(tmp.data(), w("decoder.ca_style.wo.weight"), w("decoder.ca_style.wo.bias"), d, d,
           z_cs.data());
    for (int j = 0; j < d; ++j) z_cs[static_cast<std::size_t>(j)] += ctx_row[static_cast<std::size_t>(j)];

    // second CA: glyph-style keys/values
    layer_norm_row(z_cs.data(), w("decoder.ln_cs.gain"), w("decoder.ln_cs.bias"), d, tmp2.data());
    matvec(tmp2.data(), w("decoder.ca_glyph.wq.weight"), w("decoder.ca_glyph.wq.bias"), d, d,
           q.data());
    attend_row(q.data(), k_glyph.data(), v_glyph.data(), n_style, d, heads, tmp.data(), scratch);
    std::vector<S> fused(static_cast<std::size_t>(d));
    matvec(tmp.data(), w("decoder.ca_glyph.wo.weight"), w("decoder.ca_glyph.wo.bias"), d, d,
           fused.data());
    for (int j = 0; j < d; ++j) fused[static_cast<std::size_t>(j)] += z_cs[static_cast<std::size_t>(j)];

    const int hidden = 2 * d;
    std::vector<S> h(static_cast<std::size_t>(hidden));
    matvec(fused.data(), w("decoder.f1.weight"), w("decoder.f1.bias"), d, hidden, h.data());
    for (auto& v : h) v = v > S(0) ? v : S(0);
    std::vector<S> raw(static_cast<std::size_t>(arity));
    matvec(h.data(), w("decoder.f2.weight"), w("decoder.f2.bias"), hidden, arity, raw.data());
    return raw;
  }
};

}  // namespace detail

template <class S>
std::vector<S> DnaModel<S>::infer_sequence_last_raw(const std::vector<S>& z_c,
                                                    const std::vector<S>& s_rows,
                                                    const std::vector<S>& g_rows, int n_style_rows,
                                                    const std::vector<PointRecord>& prev_points) const {
  detail::DecoderCache<S> cache;
  cache.init(ps_, cfg_.d_prime, cfg_.heads, cfg_.gmm_arity(), s_rows, g_rows, n_style_rows);
  const auto& pos = ps_.get("decoder.pos").value();
  const auto& pw = point_emb_.weight.value();
  const auto& pb = point_emb_.bias.value();

  std::vector<S> raw;
  std::vector<S> row(static_cast<std::size_t>(cfg_.d_prime));
  raw = cache.step(z_c);
  for (std::size_t i = 0; i < prev_points.size(); ++i) {
    const auto& p = prev_points[i];
    const S in[5] = {static_cast<S>(p.dx), static_cast<S>(p.dy), static_cast<S>(p.down),
                     static_cast<S>(p.up), static_cast<S>(p.end)};
    detail::matvec(in, pw.v.data(), pb.v.data(), 5, cfg_.d_prime, row.data());
    const S* posrow = pos.v.data() + (i + 1) * static_cast<std::size_t>(cfg_.d_prime);
    for (int j = 0; j < cfg_.d_prime; ++j) row[static_cast<std::size_t>(j)] += posrow[j];
    raw = cache.step(row);
  }
  return raw;
}

template <class S>
Trajectory DnaModel<S>::generate(const std::vector<const RasterImage*>& style_images,
                                 const Decomposition& decomp, const RasterImage& content_image,
                                 std::mt19937_64& rng, bool greedy_states) const {
  // content and style features through the graph path (small, one-shot)
  const StyleFeats style = encode_styles(style_images);
  const LocalFeats lc = local_encoder(decomp);
  const Var z_gc = global_encoder(content_image);
  const Var z_c = fuse(z_gc, lc);

  detail::DecoderCache<S> cache;
  cache.init(ps_, cfg_.d_prime, cfg_.heads, cfg_.gmm_arity(), style.writer_style.value().v,
             style.glyph_style.value().v, style.writer_style.value().rows());

  const auto& pos = ps_.get("decoder.pos").value();
  const auto& pw = point_emb_.weight.value();
  const auto& pb = point_emb_.bias.value();

  Trajectory out;
  std::vector<S> ctx_row = z_c.value().v;
  std::vector<S> emb(static_cast<std::size_t>(cfg_.d_prime));
  for (int t = 1; t <= cfg_.max_points; ++t) {
    const std::vector<S> raw = cache.step(ctx_row);
    const GmmParams g = activate_gmm(raw.data(), cfg_.mixtures);
    const PointRecord p = sample_point(g, rng, greedy_states);
    out.points.push_back(p);
    if (p.end == 1) break;
    const S in[5] = {static_cast<S>(p.dx), static_cast<S>(p.dy), static_cast<S>(p.down),
                     static_cast<S>(p.up), static_cast<S>(p.end)};
    detail::matvec(in, pw.v.data(), pb.v.data(), 5, cfg_.d_prime, emb.data());
    const S* posrow = pos.v.data() + static_cast<std::size_t>(t) * cfg_.d_prime;
    for (int j = 0; j < cfg_.d_prime; ++j) emb[static_cast<std::size_t>(j)] = emb[static_cast<std::size_t>(j)] + posrow[j];
    ctx_row = emb;
  }
  return out;
}

}  // namespace glyphforge
