#pragma once

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "glyphforge/autodiff.hpp"
#include "glyphforge/errors.hpp"
#include "glyphforge/trajectory.hpp"

namespace glyphforge::losses {

using ag::Shape;
using ag::TensorT;
using ag::VarT;

// Per-step component losses for one optimizer step. NaN marks a component
// that was not computed for the running stage.
struct LossReport {
  double l_xy = std::numeric_limits<double>::quiet_NaN();
  double l_state = std::numeric_limits<double>::quiet_NaN();
  double l_sty = std::numeric_limits<double>::quiet_NaN();
  double l_gly = std::numeric_limits<double>::quiet_NaN();
  double l_ch = std::numeric_limits<double>::quiet_NaN();
  double l_de = std::numeric_limits<double>::quiet_NaN();
  double l_ct = std::numeric_limits<double>::quiet_NaN();
  double l_sp = std::numeric_limits<double>::quiet_NaN();
  double total = std::numeric_limits<double>::quiet_NaN();
};

// L_base = 2*L_state + L_xy + L_sty + L_gly; stage 1 adds lambda1*L_ct,
// stage 2 adds lambda2*L_sp.
double stage_total(const LossReport& report, int stage, double lambda1, double lambda2);

std::string loss_csv_header();
std::string loss_csv_row(int step, int stage, const LossReport& r);

// ---------------------------------------------------------------------------
// GMM negative log-likelihood (bivariate normal mixture with correlation)
//
// raw: [T x (6R+3)] decoder outputs, targets: T offset pairs. Mean over steps,
// stabilized through log-sum-exp over mixture components.
// ---------------------------------------------------------------------------
template <class S>
VarT<S> nll_gmm(const VarT<S>& raw, const std::vector<std::pair<double, double>>& targets,
                int mixtures) {
  const int t = raw.value().rows();
  const int r = mixtures;
  if (static_cast<int>(targets.size()) != t)
    throw NumericError("nll_gmm: " + std::to_string(targets.size()) + " targets for " +
                       std::to_string(t) + " steps");
  if (raw.value().cols() != 6 * r + 3) throw NumericError("nll_gmm: raw arity mismatch");

  const auto log_pi = ag::log_softmax_rows(ag::slice_cols(raw, 0, r));
  const auto mux = ag::slice_cols(raw, r, r);
  const auto muy = ag::slice_cols(raw, 2 * r, r);
  const auto lsx = ag::slice_cols(raw, 3 * r, r);
  const auto lsy = ag::slice_cols(raw, 4 * r, r);
  const auto rho = ag::tanh_act(ag::slice_cols(raw, 5 * r, r));

  TensorT<S> tx(Shape{t, r}), ty(Shape{t, r});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < r; ++j) {
      tx.at(i, j) = static_cast<S>(targets[static_cast<std::size_t>(i)].first);
      ty.at(i, j) = static_cast<S>(targets[static_cast<std::size_t>(i)].second);
    }
  const auto cx = VarT<S>::constant(std::move(tx));
  const auto cy = VarT<S>::constant(std::move(ty));

  const auto zx = ag::mul(ag::sub(cx, mux), ag::exp_act(ag::neg(lsx)));
  const auto zy = ag::mul(ag::sub(cy, muy), ag::exp_act(ag::neg(lsy)));
  const auto one = VarT<S>::constant(TensorT<S>(Shape{t, r}, S(1)));
  const auto one_m_rho2 = ag::sub(one, ag::mul(rho, rho));
  const auto z = ag::sub(ag::add(ag::mul(zx, zx), ag::mul(zy, zy)),
                         ag::scale(ag::mul(rho, ag::mul(zx, zy)), S(2)));

  const auto log_norm = VarT<S>::constant(
      TensorT<S>(Shape{t, r}, static_cast<S>(-std::log(2.0 * M_PI))));
  auto log_density = ag::sub(log_norm, ag::add(lsx, lsy));
  log_density = ag::sub(log_density, ag::scale(ag::log_act(one_m_rho2), S(0.5)));
  log_density = ag::sub(log_density, ag::div(z, ag::scale(one_m_rho2, S(2))));

  const auto mix = ag::logsumexp_rows(ag::add(log_pi, log_density));
  const auto loss = ag::neg(ag::mean_all(mix));
  if (!std::isfinite(static_cast<double>(loss.value().v[0])))
    throw NumericError("nll_gmm: non-finite density");
  return loss;
}

// Mean categorical cross-entropy over the three pen states.
template <class S>
VarT<S> pen_state_ce(const VarT<S>& raw, const std::vector<int>& states, int mixtures) {
  const auto logits = ag::slice_cols(raw, 6 * mixtures, 3);
  return ag::mean_all(ag::cross_entropy_rows(logits, states));
}

// ---------------------------------------------------------------------------
// temperature-scaled contrastive loss (NT-Xent / SupCon form)
//
// For anchor a: positives share pos_group[a] (excluding a); candidates are
// positives plus rows with a different neg_class. Rows sharing neg_class but
// not pos_group are excluded from the denominator. Embeddings are
// L2-normalized; anchors without positives are skipped. Returns 0 with a
// warning when no anchor has a positive.
// ---------------------------------------------------------------------------
template <class S>
VarT<S> contrastive(const VarT<S>& embeddings, const std::vector<int>& pos_group,
                    const std::vector<int>& neg_class, double temperature) {
  const int n = embeddings.value().rows();
  const int d = embeddings.value().cols();
  if (static_cast<int>(pos_group.size()) != n || static_cast<int>(neg_class.size()) != n)
    throw NumericError("contrastive: label count mismatch");

  // L2 normalize rows: x * rsqrt(sum(x^2))
  const auto sq = ag::row_sum(ag::mul(embeddings, embeddings));  // [n x 1]
  const auto inv_norm = ag::exp_act(ag::scale(ag::log_act(sq), S(-0.5)));
  const auto ones_row = VarT<S>::constant(TensorT<S>(Shape{1, d}, S(1)));
  const auto normed = ag::mul(embeddings, ag::matmul(inv_norm, ones_row));

  auto sims = ag::scale(ag::matmul(normed, ag::transpose(normed)), static_cast<S>(1.0 / temperature));

  TensorT<S> cand_keep(Shape{n, n}), cand_neg_inf(Shape{n, n});
  TensorT<S> pos_mask(Shape{n, n});
  std::vector<double> pos_counts(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const bool positive = i != j && pos_group[static_cast<std::size_t>(i)] == pos_group[static_cast<std::size_t>(j)];
      const bool negative = neg_class[static_cast<std::size_t>(i)] != neg_class[static_cast<std::size_t>(j)];
      const bool candidate = positive || negative;
      cand_keep.at(i, j) = candidate ? S(1) : S(0);
      cand_neg_inf.at(i, j) = candidate ? S(0) : S(-1e30);
      pos_mask.at(i, j) = positive ? S(1) : S(0);
      if (positive) pos_counts[static_cast<std::size_t>(i)] += 1.0;
    }

  std::vector<int> valid;
  for (int i = 0; i < n; ++i)
    if (pos_counts[static_cast<std::size_t>(i)] > 0) valid.push_back(i);
  if (valid.empty()) {
    std::cerr << "[glyphforge] contrastive loss skipped: no positive pair in batch\n";
    return VarT<S>::constant(TensorT<S>(Shape{1, 1}, S(0)));
  }

  const auto masked = ag::add(ag::mul(sims, VarT<S>::constant(std::move(cand_keep))),
                              VarT<S>::constant(std::move(cand_neg_inf)));
  const auto lse = ag::logsumexp_rows(masked);  // [n x 1]

  const auto pos_sum = ag::row_sum(ag::mul(sims, VarT<S>::constant(std::move(pos_mask))));
  TensorT<S> inv_counts(Shape{n, 1});
  for (int i = 0; i < n; ++i)
    inv_counts.v[static_cast<std::size_t>(i)] =
        pos_counts[static_cast<std::size_t>(i)] > 0
            ? static_cast<S>(1.0 / pos_counts[static_cast<std::size_t>(i)])
            : S(0);
  const auto mean_pos = ag::mul(pos_sum, VarT<S>::constant(std::move(inv_counts)));

  const auto per_anchor = ag::sub(lse, mean_pos);  // [n x 1]
  return ag::mean_all(ag::gather_rows(per_anchor, valid));
}

// Writer-style contrast: positives share the writer, negatives are other
// writers.
template <class S>
VarT<S> contrastive_style(const VarT<S>& writer_embeddings, const std::vector<int>& writer_ids,
                          double temperature = 0.1) {
  return contrastive(writer_embeddings, writer_ids, writer_ids, temperature);
}

// Glyph contrast over two sampled G_s rows per sample: positives are patches
// of the same sample, negatives come from different characters.
template <class S>
VarT<S> contrastive_glyph(const VarT<S>& patch_embeddings, const std::vector<int>& sample_ids,
                          const std::vector<int>& char_ids, double temperature = 0.1) {
  return contrastive(patch_embeddings, sample_ids, char_ids, temperature);
}

// Character classification on the fused content feature.
template <class S>
VarT<S> char_loss(const VarT<S>& char_logits, int label) {
  return ag::mean_all(ag::cross_entropy_rows(char_logits, {label}));
}

// Eq.-style decomposition loss: summed cross-entropies over structure steps
// then component steps. Empty structure targets contribute 0.
template <class S>
VarT<S> decomp_loss(const VarT<S>& struct_logits, const VarT<S>& compo_logits,
                    const std::vector<int>& struct_targets, const std::vector<int>& compo_targets) {
  VarT<S> total = VarT<S>::constant(TensorT<S>(Shape{1, 1}, S(0)));
  if (!struct_targets.empty()) {
    if (!struct_logits.defined() || struct_logits.value().rows() != static_cast<int>(struct_targets.size()))
      throw NumericError("decomp_loss: structure step count mismatch");
    total = ag::add(total, ag::sum_all(ag::cross_entropy_rows(struct_logits, struct_targets)));
  }
  if (!compo_targets.empty()) {
    if (!compo_logits.defined() || compo_logits.value().rows() != static_cast<int>(compo_targets.size()))
      throw NumericError("decomp_loss: component step count mismatch");
    total = ag::add(total, ag::sum_all(ag::cross_entropy_rows(compo_logits, compo_targets)));
  }
  return total;
}

// ---------------------------------------------------------------------------
// spacing loss (per-stroke GIoU-style penalty with enclosing-gap term)
// ---------------------------------------------------------------------------

// plain-value path; strokes paired by index, each unmatched stroke contributes
// the per-term supremum 2, N_str = max count.
double spacing_loss_value(const std::vector<StrokeBox>& predicted,
                          const std::vector<StrokeBox>& ground_truth);

// Differentiable box: min/max corners as [1 x 2] graph values.
template <class S>
struct BoxVar {
  VarT<S> lo;  // [1 x 2] = (xmin, ymin)
  VarT<S> hi;  // [1 x 2] = (xmax, ymax)
};

// Boxes over absolute positions [T x 2] grouped by stroke ranges, with the
// degenerate-side expansion applied per coordinate.
template <class S>
std::vector<BoxVar<S>> boxes_from_positions(const VarT<S>& abs_positions,
                                            const std::vector<IndexRange>& ranges,
                                            double min_extent) {
  std::vector<BoxVar<S>> boxes;
  boxes.reserve(ranges.size());
  for (const auto& rng : ranges) {
    if (rng.last < rng.first) throw DataError("boxes_from_positions: empty range");
    const auto rows = ag::slice_rows(abs_positions, static_cast<int>(rng.first),
                                     static_cast<int>(rng.last - rng.first + 1));
    auto lo = ag::reduce_min_rows(rows);
    auto hi = ag::reduce_max_rows(rows);
    // expand any side shorter than min_extent symmetrically around its center
    std::vector<VarT<S>> lo_parts, hi_parts;
    for (int c = 0; c < 2; ++c) {
      auto lo_c = ag::slice_cols(lo, c, 1);
      auto hi_c = ag::slice_cols(hi, c, 1);
      const double side = static_cast<double>(hi_c.value().v[0] - lo_c.value().v[0]);
      if (side < min_extent) {
        const auto center = ag::scale(ag::add(lo_c, hi_c), S(0.5));
        lo_c = ag::add_scalar(center, static_cast<S>(-0.5 * min_extent));
        hi_c = ag::add_scalar(center, static_cast<S>(0.5 * min_extent));
      }
      lo_parts.push_back(lo_c);
      hi_parts.push_back(hi_c);
    }
    BoxVar<S> b;
    b.lo = ag::reshape(ag::concat_rows(lo_parts), {1, 2});
    b.hi = ag::reshape(ag::concat_rows(hi_parts), {1, 2});
    boxes.push_back(b);
  }
  return boxes;
}

template <class S>
std::vector<BoxVar<S>> boxes_to_vars(const std::vector<StrokeBox>& boxes) {
  std::vector<BoxVar<S>> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    BoxVar<S> bv;
    bv.lo = VarT<S>::constant(TensorT<S>(Shape{1, 2}, {static_cast<S>(b.xmin), static_cast<S>(b.ymin)}));
    bv.hi = VarT<S>::constant(TensorT<S>(Shape{1, 2}, {static_cast<S>(b.xmax), static_cast<S>(b.ymax)}));
    out.push_back(bv);
  }
  return out;
}

template <class S>
VarT<S> box_area(const VarT<S>& lo, const VarT<S>& hi) {
  const auto side = ag::sub(hi, lo);
  return ag::mul(ag::slice_cols(side, 0, 1), ag::slice_cols(side, 1, 1));
}

// 1 - IoU + gap ratio for one box pair.
template <class S>
VarT<S> spacing_term(const BoxVar<S>& a, const BoxVar<S>& b) {
  const auto ilo = ag::max_elem(a.lo, b.lo);
  const auto ihi = ag::min_elem(a.hi, b.hi);
  const auto iside = ag::relu(ag::sub(ihi, ilo));
  const auto inter = ag::mul(ag::slice_cols(iside, 0, 1), ag::slice_cols(iside, 1, 1));

  const auto area_a = box_area(a.lo, a.hi);
  const auto area_b = box_area(b.lo, b.hi);
  const auto uni = ag::sub(ag::add(area_a, area_b), inter);

  const auto clo = ag::min_elem(a.lo, b.lo);
  const auto chi = ag::max_elem(a.hi, b.hi);
  const auto area_c = box_area(clo, chi);

  const auto one = VarT<S>::constant(TensorT<S>(Shape{1, 1}, S(1)));
  const auto iou = ag::div(inter, uni);
  const auto gap = ag::div(ag::sub(area_c, uni), area_c);
  return ag::add(ag::sub(one, iou), gap);
}

template <class S>
VarT<S> spacing_loss(const std::vector<BoxVar<S>>& predicted,
                     const std::vector<BoxVar<S>>& ground_truth) {
  if (predicted.empty() && ground_truth.empty())
    throw DataError("spacing_loss: both stroke lists empty");
  const std::size_t matched = std::min(predicted.size(), ground_truth.size());
  const std::size_t n_str = std::max(predicted.size(), ground_truth.size());
  VarT<S> total = VarT<S>::constant(
      TensorT<S>(Shape{1, 1}, static_cast<S>(2.0 * static_cast<double>(n_str - matched))));
  for (std::size_t i = 0; i < matched; ++i)
    total = ag::add(total, spacing_term(predicted[i], ground_truth[i]));
  return ag::scale(total, static_cast<S>(1.0 / static_cast<double>(n_str)));
}

}  // namespace glyphforge::losses
