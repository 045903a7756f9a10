#include <cmath>

#include "doctest.h"
#include "glyphforge/errors.hpp"
#include "glyphforge/trajectory.hpp"

using namespace glyphforge;

namespace {

Trajectory make(std::vector<PointRecord> pts) {
  Trajectory t;
  t.writer_id = 0;
  t.char_id = 0;
  t.points = std::move(pts);
  return t;
}

}  // namespace

TEST_SUITE("trajectory") {

TEST_CASE("to_absolute accumulates offsets") {
  const auto t = make({PointRecord::pen_down(1, 2), PointRecord::pen_down(3, 4)});
  const auto abs = to_absolute(t);
  REQUIRE(abs.size() == 2);
  CHECK(abs[0].x == doctest::Approx(1));
  CHECK(abs[0].y == doctest::Approx(2));
  CHECK(abs[1].x == doctest::Approx(4));
  CHECK(abs[1].y == doctest::Approx(6));
  CHECK(abs[0].stroke_id == 0);
  CHECK(abs[1].stroke_id == 0);
}

TEST_CASE("to_absolute single pen-end point") {
  const auto abs = to_absolute(make({PointRecord::pen_end(0, 0)}));
  REQUIRE(abs.size() == 1);
  CHECK(abs[0].x == 0.0);
  CHECK(abs[0].stroke_id == 0);
}

TEST_CASE("pen-up closes the stroke") {
  const auto t = make({PointRecord::pen_down(1, 0), PointRecord::pen_up(1, 0),
                       PointRecord::pen_down(0, 1)});
  const auto abs = to_absolute(t);
  CHECK(abs[0].stroke_id == 0);
  CHECK(abs[1].stroke_id == 0);
  CHECK(abs[2].stroke_id == 1);
}

TEST_CASE("validate rejects bad pen states") {
  Trajectory t = make({PointRecord::pen_down(0, 0)});
  t.points[0].up = 1;  // two bits set
  CHECK_THROWS_AS(validate(t), DataError);
  Trajectory t2 = make({PointRecord::pen_end(0, 0), PointRecord::pen_down(1, 1)});
  CHECK_THROWS_AS(validate(t2), DataError);
  Trajectory t3;
  CHECK_THROWS_AS(validate(t3), DataError);
}

TEST_CASE("split_strokes partitions indices") {
  const auto t = make({PointRecord::pen_down(1, 0), PointRecord::pen_down(1, 0),
                       PointRecord::pen_up(1, 0), PointRecord::pen_down(1, 0),
                       PointRecord::pen_end(0, 0)});
  const auto r = split_strokes(t);
  REQUIRE(r.size() == 2);
  CHECK(r[0].first == 0);
  CHECK(r[0].last == 2);
  CHECK(r[1].first == 3);
  CHECK(r[1].last == 4);
}

TEST_CASE("split_strokes without pen-up gives one range") {
  const auto t = make({PointRecord::pen_down(1, 0), PointRecord::pen_down(1, 0)});
  const auto r = split_strokes(t);
  REQUIRE(r.size() == 1);
  CHECK(r[0].first == 0);
  CHECK(r[0].last == 1);
}

TEST_CASE("pen-up at every point gives single-point ranges") {
  const auto t = make({PointRecord::pen_up(1, 0), PointRecord::pen_up(1, 0),
                       PointRecord::pen_up(1, 0)});
  const auto r = split_strokes(t);
  REQUIRE(r.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r[i].first == i);
    CHECK(r[i].last == i);
  }
}

TEST_CASE("stroke_bboxes min/max and expansion") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_down(2, 3)});
  const auto abs = to_absolute(t);
  const auto boxes = stroke_bboxes(abs, split_strokes(t), 0.0);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].xmin == doctest::Approx(0));
  CHECK(boxes[0].ymin == doctest::Approx(0));
  CHECK(boxes[0].xmax == doctest::Approx(2));
  CHECK(boxes[0].ymax == doctest::Approx(3));

  const auto single = make({PointRecord::pen_down(1, 1)});
  const auto b2 = stroke_bboxes(to_absolute(single), split_strokes(single), 0.5);
  REQUIRE(b2.size() == 1);
  CHECK(b2[0].xmin == doctest::Approx(0.75));
  CHECK(b2[0].ymin == doctest::Approx(0.75));
  CHECK(b2[0].xmax == doctest::Approx(1.25));
  CHECK(b2[0].ymax == doctest::Approx(1.25));
}

TEST_CASE("stroke_bboxes keeps stroke order and count") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_up(5, 0),
                       PointRecord::pen_down(0, 5), PointRecord::pen_end(0, 0)});
  const auto ranges = split_strokes(t);
  const auto boxes = stroke_bboxes(to_absolute(t), ranges, 0.0);
  CHECK(boxes.size() == ranges.size());
  CHECK(boxes[0].xmin <= boxes[1].xmin);
}

TEST_CASE("render draws a straight pen-down segment") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_down(3, 0)});
  const auto img = render(t, 8, 8);
  int ink = 0;
  int ink_rows = 0;
  for (int r = 0; r < 8; ++r) {
    bool row_has = false;
    for (int c = 0; c < 8; ++c)
      if (img.at(r, c) == 0.0) {
        ++ink;
        row_has = true;
      }
    if (row_has) ++ink_rows;
  }
  CHECK(ink == 4);
  CHECK(ink_rows == 1);
}

TEST_CASE("render single pen-end point marks one pixel") {
  const auto img = render(make({PointRecord::pen_end(0, 0)}), 8, 8);
  int ink = 0;
  for (const double v : img.pixels)
    if (v == 0.0) ++ink;
  CHECK(ink == 1);
}

TEST_CASE("render is deterministic and bounded") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_down(3, 2),
                       PointRecord::pen_up(1, 1), PointRecord::pen_down(0, -2)});
  const auto a = render(t, 16, 16);
  const auto b = render(t, 16, 16);
  CHECK(a.pixels == b.pixels);
  int ink = 0;
  for (const double v : a.pixels) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (v == 0.0) ++ink;
  }
  CHECK(ink > 0);
}

TEST_CASE("normalize maps a square to the unit box") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_down(10, 0),
                       PointRecord::pen_down(0, 10), PointRecord::pen_down(-10, 0)});
  const auto n = normalize(t);
  const auto abs = to_absolute(n);
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& p : abs) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  CHECK(xmin == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(xmax == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(ymin == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(ymax == doctest::Approx(0.5).epsilon(1e-9));
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    CHECK(n.points[i].down == t.points[i].down);
    CHECK(n.points[i].up == t.points[i].up);
    CHECK(n.points[i].end == t.points[i].end);
  }
}

TEST_CASE("normalize is idempotent") {
  const auto t = make({PointRecord::pen_down(0.3, -2), PointRecord::pen_down(4, 1),
                       PointRecord::pen_up(-1, 2), PointRecord::pen_down(0.5, 0.5)});
  const auto once = normalize(t);
  const auto twice = normalize(once);
  const auto a = to_absolute(once);
  const auto b = to_absolute(twice);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].x - b[i].x) < 1e-9);
    CHECK(std::abs(a[i].y - b[i].y) < 1e-9);
  }
}

TEST_CASE("normalize rejects coincident points") {
  CHECK_THROWS_AS(normalize(make({PointRecord::pen_down(0, 0), PointRecord::pen_down(0, 0)})),
                  DataError);
}

TEST_CASE("offsets round-trip through absolute positions") {
  const auto t = make({PointRecord::pen_down(0.123456789, -0.5), PointRecord::pen_down(1.5, 2.25),
                       PointRecord::pen_up(-0.75, 0.125), PointRecord::pen_end(0, 0)});
  const auto abs = to_absolute(t);
  // rebuild offsets from positions and compare
  double px = 0, py = 0;
  for (std::size_t i = 0; i < abs.size(); ++i) {
    CHECK(std::abs((abs[i].x - px) - t.points[i].dx) < 1e-9);
    CHECK(std::abs((abs[i].y - py) - t.points[i].dy) < 1e-9);
    px = abs[i].x;
    py = abs[i].y;
  }
}

TEST_CASE("jsonl round trip preserves full precision") {
  Trajectory t = make({PointRecord::pen_down(0.1234567890123456, -7.775e-3),
                       PointRecord::pen_up(1e-17, 2.5), PointRecord::pen_end(0, 0)});
  t.writer_id = 3;
  t.char_id = 42;
  const auto back = from_jsonl(to_jsonl(t));
  CHECK(back.writer_id == 3);
  CHECK(back.char_id == 42);
  REQUIRE(back.points.size() == t.points.size());
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    CHECK(back.points[i].dx == t.points[i].dx);
    CHECK(back.points[i].dy == t.points[i].dy);
    CHECK(back.points[i].down == t.points[i].down);
  }
}

TEST_CASE("jsonl reader rejects non-one-hot states") {
  CHECK_THROWS_AS(from_jsonl(R"({"writer":0,"char":0,"points":[[0,0,1,1,0]]})"), DataError);
  CHECK_THROWS_AS(from_jsonl(R"({"writer":0,"char":0,"points":[[0,0,0,0,0]]})"), DataError);
  CHECK_THROWS_AS(from_jsonl("not json"), DataError);
}

TEST_CASE("svg emits one polyline per stroke") {
  const auto t = make({PointRecord::pen_down(0, 0), PointRecord::pen_down(1, 0),
                       PointRecord::pen_up(0.5, 0.5), PointRecord::pen_down(0, 1),
                       PointRecord::pen_down(1, 0)});
  const auto svg = to_svg(t);
  std::size_t count = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++count;
    pos += 9;
  }
  CHECK(count == 2);
}

}  // TEST_SUITE
