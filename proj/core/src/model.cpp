#include <cmath>
#include <random>

#include "glyphforge/model.hpp"

namespace glyphforge {

PointRecord sample_point(const GmmParams& g, std::mt19937_64& rng, bool greedy_states) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // component
  const double u = unif(rng);
  std::size_t r = 0;
  double acc = 0.0;
  for (; r < g.pi.size(); ++r) {
    acc += g.pi[r];
    if (u <= acc) break;
  }
  if (r == g.pi.size()) r = g.pi.size() - 1;

  std::normal_distribution<double> normal(0.0, 1.0);
  const double z1 = normal(rng);
  const double z2 = normal(rng);
  const double rho = g.rho[r];
  const double dx = g.mux[r] + g.sx[r] * z1;
  const double dy = g.muy[r] + g.sy[r] * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);

  int state = 0;
  if (greedy_states) {
    for (int i = 1; i < 3; ++i)
      if (g.state_logits[static_cast<std::size_t>(i)] >
          g.state_logits[static_cast<std::size_t>(state)])
        state = i;
  } else {
    const double us = unif(rng);
    double sacc = 0.0;
    for (state = 0; state < 2; ++state) {
      sacc += g.state_probs[static_cast<std::size_t>(state)];
      if (us <= sacc) break;
    }
  }
  PointRecord p;
  p.dx = dx;
  p.dy = dy;
  p.down = state == 0 ? 1 : 0;
  p.up = state == 1 ? 1 : 0;
  p.end = state == 2 ? 1 : 0;
  return p;
}

}  // namespace glyphforge
