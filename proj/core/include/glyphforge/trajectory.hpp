#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace glyphforge {

// One online-handwriting point: offsets from the previous position plus a
// one-hot pen state. The state describes the segment *arriving* at this
// point: the segment from the previous point is drawn iff down == 1.
struct PointRecord {
  double dx = 0.0;
  double dy = 0.0;
  std::uint8_t down = 0;  // pen-down: arriving segment is ink
  std::uint8_t up = 0;    // pen-up: travel move, closes the current stroke
  std::uint8_t end = 0;   // pen-end: trajectory terminator

  static PointRecord pen_down(double dx, double dy) { return {dx, dy, 1, 0, 0}; }
  static PointRecord pen_up(double dx, double dy) { return {dx, dy, 0, 1, 0}; }
  static PointRecord pen_end(double dx, double dy) { return {dx, dy, 0, 0, 1}; }
};

struct Trajectory {
  int writer_id = -1;
  int char_id = -1;
  std::vector<PointRecord> points;

  std::size_t size() const { return points.size(); }
};

struct StrokeBox {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
};

struct RasterImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major, [0,1], 1 = background

  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

struct AbsolutePoint {
  double x = 0.0;
  double y = 0.0;
  int stroke_id = 0;
};

// Throws DataError when a pen state is not one-hot, a point follows the
// pen-end point, or the trajectory is empty.
void validate(const Trajectory& traj);

// Cumulative positions from `origin`; stroke ids increment after pen-up points.
std::vector<AbsolutePoint> to_absolute(const Trajectory& traj,
                                       std::pair<double, double> origin = {0.0, 0.0});

struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

// Partition of point indices into strokes; each range ends at a pen-up point
// or at the trajectory end.
std::vector<IndexRange> split_strokes(const Trajectory& traj);

// Axis-aligned box per stroke; any side shorter than min_extent is expanded
// symmetrically so downstream IoU ratios stay defined.
std::vector<StrokeBox> stroke_bboxes(const std::vector<AbsolutePoint>& abs_points,
                                     const std::vector<IndexRange>& ranges,
                                     double min_extent);

// Default degenerate-stroke guard: 5% of the unit-normalized glyph side.
inline constexpr double kMinStrokeExtent = 0.025;

// Rasterize with ink 0 on background 1. Aspect-preserving fit into HxW with a
// 2-pixel margin, Bresenham segments for pen-down destinations.
RasterImage render(const Trajectory& traj, int height, int width);

// Translate absolute positions to zero mean and scale the larger bounding-box
// side to 1, then re-derive offsets. Pen states are untouched.
Trajectory normalize(const Trajectory& traj);

// Line-delimited JSON: {"writer":int,"char":int,"points":[[dx,dy,m1,m2,m3],...]}
std::string to_jsonl(const Trajectory& traj);
Trajectory from_jsonl(const std::string& line);
void write_jsonl(const std::string& path, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_jsonl(const std::string& path);

// PGM (P5) and SVG emission for eyeballing results.
void write_pgm(const std::string& path, const RasterImage& img);
std::string to_svg(const Trajectory& traj);

}  // namespace glyphforge
