#include "glyphforge/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "glyphforge/errors.hpp"
#include "json.hpp"

namespace glyphforge {

void validate(const Trajectory& traj) {
  if (traj.points.empty()) throw DataError("trajectory has no points");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const auto& p = traj.points[i];
    const int hot = int(p.down) + int(p.up) + int(p.end);
    if (hot != 1 || p.down > 1 || p.up > 1 || p.end > 1)
      throw DataError("pen state is not one-hot at point " + std::to_string(i));
    if (!std::isfinite(p.dx) || !std::isfinite(p.dy))
      throw DataError("non-finite offset at point " + std::to_string(i));
    if (p.end == 1 && i + 1 != traj.points.size())
      throw DataError("pen-end before final point at index " + std::to_string(i));
  }
}

std::vector<AbsolutePoint> to_absolute(const Trajectory& traj,
                                       std::pair<double, double> origin) {
  validate(traj);
  std::vector<AbsolutePoint> out;
  out.reserve(traj.points.size());
  double x = origin.first;
  double y = origin.second;
  int stroke = 0;
  for (const auto& p : traj.points) {
    x += p.dx;
    y += p.dy;
    out.push_back({x, y, stroke});
    if (p.up == 1) ++stroke;
  }
  return out;
}

std::vector<IndexRange> split_strokes(const Trajectory& traj) {
  validate(traj);
  std::vector<IndexRange> ranges;
  std::size_t start = 0;
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (traj.points[i].up == 1) {
      ranges.push_back({start, i});
      start = i + 1;
    }
  }
  if (start < traj.points.size()) ranges.push_back({start, traj.points.size() - 1});
  return ranges;
}

std::vector<StrokeBox> stroke_bboxes(const std::vector<AbsolutePoint>& abs_points,
                                     const std::vector<IndexRange>& ranges,
                                     double min_extent) {
  std::vector<StrokeBox> boxes;
  boxes.reserve(ranges.size());
  for (const auto& r : ranges) {
    if (r.last < r.first || r.last >= abs_points.size())
      throw DataError("empty or out-of-range stroke range");
    StrokeBox b{std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity()};
    for (std::size_t i = r.first; i <= r.last; ++i) {
      b.xmin = std::min(b.xmin, abs_points[i].x);
      b.ymin = std::min(b.ymin, abs_points[i].y);
      b.xmax = std::max(b.xmax, abs_points[i].x);
      b.ymax = std::max(b.ymax, abs_points[i].y);
    }
    if (b.width() < min_extent) {
      const double c = 0.5 * (b.xmin + b.xmax);
      b.xmin = c - 0.5 * min_extent;
      b.xmax = c + 0.5 * min_extent;
    }
    if (b.height() < min_extent) {
      const double c = 0.5 * (b.ymin + b.ymax);
      b.ymin = c - 0.5 * min_extent;
      b.ymax = c + 0.5 * min_extent;
    }
    boxes.push_back(b);
  }
  return boxes;
}

namespace {

void plot(RasterImage& img, int r, int c) {
  if (r >= 0 && r < img.height && c >= 0 && c < img.width) img.at(r, c) = 0.0;
}

// Integer midpoint line; endpoints included.
void draw_line(RasterImage& img, int r0, int c0, int r1, int c1) {
  const int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  int err = (dc > dr ? dc : -dr) / 2;
  for (;;) {
    plot(img, r0, c0);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = err;
    if (e2 > -dc) {
      err -= dr;
      c0 += sc;
    }
    if (e2 < dr) {
      err += dc;
      r0 += sr;
    }
  }
}

}  // namespace

RasterImage render(const Trajectory& traj, int height, int width) {
  if (height < 8 || width < 8) throw UsageError("render target must be at least 8x8");
  const auto abs = to_absolute(traj);

  double xmin = abs[0].x, xmax = abs[0].x, ymin = abs[0].y, ymax = abs[0].y;
  for (const auto& p : abs) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double margin = 2.0;
  const double spanx = xmax - xmin, spany = ymax - ymin;
  const double availw = width - 1 - 2 * margin, availh = height - 1 - 2 * margin;
  double scale = 0.0;
  if (spanx > 0.0 || spany > 0.0)
    scale = std::min(spanx > 0.0 ? availw / spanx : std::numeric_limits<double>::infinity(),
                     spany > 0.0 ? availh / spany : std::numeric_limits<double>::infinity());
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);

  auto to_px = [&](double x, double y) {
    const int c = static_cast<int>(std::lround((x - cx) * scale + (width - 1) * 0.5));
    const int r = static_cast<int>(std::lround((y - cy) * scale + (height - 1) * 0.5));
    return std::pair<int, int>{r, c};
  };

  RasterImage img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height) * width, 1.0);

  bool any_ink = false;
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (traj.points[i].down != 1) continue;
    any_ink = true;
    const auto [r1, c1] = to_px(abs[i].x, abs[i].y);
    if (i == 0) {
      plot(img, r1, c1);
    } else {
      const auto [r0, c0] = to_px(abs[i - 1].x, abs[i - 1].y);
      draw_line(img, r0, c0, r1, c1);
    }
  }
  if (!any_ink) {
    for (const auto& p : abs) {
      const auto [r, c] = to_px(p.x, p.y);
      plot(img, r, c);
    }
  }
  return img;
}

Trajectory normalize(const Trajectory& traj) {
  const auto abs = to_absolute(traj);
  double xmin = abs[0].x, xmax = abs[0].x, ymin = abs[0].y, ymax = abs[0].y;
  double mx = 0.0, my = 0.0;
  for (const auto& p : abs) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(abs.size());
  my /= static_cast<double>(abs.size());
  const double side = std::max(xmax - xmin, ymax - ymin);
  if (side <= 0.0) throw DataError("normalize: all points coincident");
  const double s = 1.0 / side;

  Trajectory out = traj;
  double px = 0.0, py = 0.0;
  for (std::size_t i = 0; i < abs.size(); ++i) {
    const double nx = (abs[i].x - mx) * s;
    const double ny = (abs[i].y - my) * s;
    out.points[i].dx = nx - px;
    out.points[i].dy = ny - py;
    px = nx;
    py = ny;
  }
  return out;
}

std::string to_jsonl(const Trajectory& traj) {
  nlohmann::json j;
  j["writer"] = traj.writer_id;
  j["char"] = traj.char_id;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : traj.points)
    pts.push_back({p.dx, p.dy, int(p.down), int(p.up), int(p.end)});
  return j.dump();
}

Trajectory from_jsonl(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad trajectory record: ") + e.what());
  }
  Trajectory t;
  try {
    t.writer_id = j.at("writer").get<int>();
    t.char_id = j.at("char").get<int>();
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 5) throw DataError("point is not a 5-tuple");
      PointRecord rec;
      rec.dx = p[0].get<double>();
      rec.dy = p[1].get<double>();
      rec.down = static_cast<std::uint8_t>(p[2].get<int>());
      rec.up = static_cast<std::uint8_t>(p[3].get<int>());
      rec.end = static_cast<std::uint8_t>(p[4].get<int>());
      t.points.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad trajectory record: ") + e.what());
  }
  validate(t);
  return t;
}

void write_jsonl(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& t : trajs) out << to_jsonl(t) << '\n';
}

std::vector<Trajectory> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_jsonl(line));
  }
  return out;
}

void write_pgm(const std::string& path, const RasterImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
}

std::string to_svg(const Trajectory& traj) {
  const auto abs = to_absolute(traj);
  double xmin = abs[0].x, xmax = abs[0].x, ymin = abs[0].y, ymax = abs[0].y;
  for (const auto& p : abs) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double pad = 0.05 * std::max({xmax - xmin, ymax - ymin, 1e-6});
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\""
      << (xmin - pad) << " " << (ymin - pad) << " " << (xmax - xmin + 2 * pad) << " "
      << (ymax - ymin + 2 * pad) << "\">\n";
  // one polyline per chain of consecutive pen-down segments
  std::vector<std::pair<double, double>> chain;
  auto flush = [&]() {
    if (chain.size() >= 2) {
      svg << "  <polyline fill=\"none\" stroke=\"black\" stroke-width=\""
          << pad * 0.4 << "\" points=\"";
      for (const auto& [x, y] : chain) svg << x << "," << y << " ";
      svg << "\"/>\n";
    }
    chain.clear();
  };
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (traj.points[i].down == 1) {
      if (chain.empty() && i > 0) chain.push_back({abs[i - 1].x, abs[i - 1].y});
      chain.push_back({abs[i].x, abs[i].y});
    } else {
      flush();
    }
  }
  flush();
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace glyphforge
