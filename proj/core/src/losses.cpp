#include "glyphforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace glyphforge::losses {

namespace {

double pair_term(const StrokeBox& a, const StrokeBox& b) {
  const double ix = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.xmax, b.xmax) - std::min(a.xmin, b.xmin);
  const double ch = std::max(a.ymax, b.ymax) - std::min(a.ymin, b.ymin);
  const double c = cw * ch;
  return 1.0 - inter / uni + (c - uni) / c;
}

}  // namespace

double spacing_loss_value(const std::vector<StrokeBox>& predicted,
                          const std::vector<StrokeBox>& ground_truth) {
  if (predicted.empty() && ground_truth.empty())
    throw DataError("spacing_loss: both stroke lists empty");
  const std::size_t matched = std::min(predicted.size(), ground_truth.size());
  const std::size_t n_str = std::max(predicted.size(), ground_truth.size());
  double total = 2.0 * static_cast<double>(n_str - matched);
  for (std::size_t i = 0; i < matched; ++i) total += pair_term(predicted[i], ground_truth[i]);
  return total / static_cast<double>(n_str);
}

double stage_total(const LossReport& report, int stage, double lambda1, double lambda2) {
  auto need = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("stage_total: missing component ") + name);
    return v;
  };
  const double base = 2.0 * need(report.l_state, "L_state") + need(report.l_xy, "L_xy") +
                      need(report.l_sty, "L_sty") + need(report.l_gly, "L_gly");
  if (stage == 1) return base + lambda1 * need(report.l_ct, "L_ct");
  if (stage == 2) return base + lambda2 * need(report.l_sp, "L_sp");
  throw UsageError("stage_total: stage must be 1 or 2");
}

std::string loss_csv_header() {
  return "step,stage,l_xy,l_state,l_sty,l_gly,l_ch,l_de,l_ct,l_sp,total";
}

std::string loss_csv_row(int step, int stage, const LossReport& r) {
  std::ostringstream out;
  out.precision(10);
  auto field = [&](double v) {
    out << ',';
    if (std::isfinite(v)) out << v;
  };
  out << step << ',' << stage;
  field(r.l_xy);
  field(r.l_state);
  field(r.l_sty);
  field(r.l_gly);
  field(r.l_ch);
  field(r.l_de);
  field(r.l_ct);
  field(r.l_sp);
  field(r.total);
  return out.str();
}

}  // namespace glyphforge::losses
