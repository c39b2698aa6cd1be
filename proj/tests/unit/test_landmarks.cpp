#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "hmdr/errors.hpp"
#include "hmdr/landmarks.hpp"
#include "hmdr/synthetic.hpp"
#include "support.hpp"

using namespace hmdr;

namespace {

// Pixel count of a segment that is horizontal, vertical or exactly diagonal,
// where every rasterizer agrees.
int regular_segment_pixels(PixelPoint a, PixelPoint b) {
  return std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)) + 1;
}

}  // namespace

TEST(Bresenham, VerticalSegmentOnEightByEight) {
  Polyline line{{{0, 0}, {0, 5}}, false};
  auto r = rasterize_polylines(std::span(&line, 1), 8, 8);
  EXPECT_EQ(r.sum().item<float>(), 6.0f);
  for (int y = 0; y <= 5; ++y) EXPECT_EQ(r[y][0].item<float>(), 1.0f);
}

TEST(Bresenham, GeometricProperties) {
  std::mt19937 rng(17);
  std::uniform_int_distribution<int> c(-20, 20);
  for (int i = 0; i < 500; ++i) {
    PixelPoint a{c(rng), c(rng)}, b{c(rng), c(rng)};
    auto pts = bresenham_line(a, b);
    ASSERT_EQ(static_cast<int>(pts.size()), regular_segment_pixels(a, b));
    ASSERT_EQ(pts.front(), a);
    ASSERT_EQ(pts.back(), b);
    const double dx = b.x - a.x, dy = b.y - a.y, len = std::hypot(dx, dy);
    for (std::size_t k = 1; k < pts.size(); ++k) {
      ASSERT_LE(std::abs(pts[k].x - pts[k - 1].x), 1);
      ASSERT_LE(std::abs(pts[k].y - pts[k - 1].y), 1);
    }
    if (len == 0) continue;
    // Distance along the minor axis from the ideal line stays within half a pixel.
    const double major = std::max(std::abs(dx), std::abs(dy));
    for (const auto& p : pts) {
      const double cross = std::abs(dx * (p.y - a.y) - dy * (p.x - a.x));
      ASSERT_LE(cross / major, 0.5 + 1e-12);
    }
  }
}

TEST(Rasterize, SumEqualsSegmentPixelCount) {
  std::vector<Polyline> lines{
      {{{1, 1}, {10, 1}}, false},
      {{{1, 3}, {1, 12}}, false},
      {{{4, 4}, {12, 12}}, false},
      {{{20, 2}, {14, 8}}, false},
  };
  int want = 0;
  for (const auto& l : lines) want += regular_segment_pixels(l.points[0], l.points[1]);
  auto r = rasterize_polylines(lines, 24, 24);
  EXPECT_EQ(r.sum().item<float>(), static_cast<float>(want));
  EXPECT_TRUE((r.eq(0) | r.eq(1)).all().item<bool>());
}

TEST(Rasterize, SegmentCountConstant) {
  EXPECT_EQ(standard_segment_count(), 63);
  int jaw = 0;
  for (const auto& g : standard_groups()) {
    if (g.name == "jaw") jaw = g.segment_count();
  }
  EXPECT_EQ(jaw, 16);
}

TEST(Rasterize, DeterministicAndTranslationInvariant) {
  const auto lm = face_landmarks(FaceParams{});
  auto a = rasterize_contours(lm, 64, 64);
  EXPECT_TRUE(testing_support::identical(a, rasterize_contours(lm, 64, 64)));
  LandmarkSet moved = lm;
  for (auto& p : moved.points) {
    p.x += 3;
    p.y -= 2;
  }
  auto b = rasterize_contours(moved, 64, 64);
  EXPECT_TRUE(testing_support::identical(a.narrow(0, 2, 60).narrow(1, 0, 60), b.narrow(0, 0, 60).narrow(1, 3, 60)));
}

TEST(Rasterize, AntialiasStaysInUnitRange) {
  auto r = rasterize_contours(face_landmarks(FaceParams{}), 64, 64, {true});
  EXPECT_GE(r.min().item<float>(), 0.0f);
  EXPECT_LE(r.max().item<float>(), 1.0f);
  EXPECT_GT(r.sum().item<float>(), 0.0f);
}

TEST(Rasterize, ClipsOutsideCanvas) {
  Polyline line{{{-5, 2}, {5, 2}}, false};
  auto r = rasterize_polylines(std::span(&line, 1), 4, 4);
  EXPECT_EQ(r.sum().item<float>(), 4.0f);
}

TEST(SyntheticProvider, RoundTripAndBlank) {
  FaceParams f;
  f.smile = 0.6;
  f.eye_open = 0.3;
  SyntheticLandmarkProvider provider({FaceParams{}, f});
  auto got = detect_landmarks(render_face(f, 64, 64), provider);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(*got, face_landmarks(f));
  EXPECT_TRUE(got->within(64, 64));
  EXPECT_EQ(*detect_landmarks(render_face(f, 64, 64), provider), *got);
  EXPECT_FALSE(detect_landmarks(torch::zeros({3, 64, 64}), provider).has_value());
  SerializedProvider guarded(provider);
  EXPECT_EQ(*guarded.detect(render_face(f, 64, 64)), *got);
}

TEST(Fallback, ReusesLastDetection) {
  const auto a = face_landmarks(FaceParams{});
  LandmarkTrack track{std::nullopt, a, std::nullopt, std::nullopt};
  std::vector<std::size_t> warned;
  auto filled = fill_missing_landmarks(track, [&](std::size_t i) { warned.push_back(i); });
  EXPECT_FALSE(filled[0].has_value());
  EXPECT_EQ(*filled[3], a);
  EXPECT_EQ(warned, std::vector<std::size_t>{0});
  auto maps = landmark_maps(track, 64, 64);
  EXPECT_EQ(maps[0].sum().item<float>(), 0.0f);
  EXPECT_TRUE(testing_support::identical(maps[1], maps[3]));
}

TEST(LandmarkFile, RoundTripAndErrors) {
  auto dir = testing_support::scratch_dir("landmark_file");
  LandmarkTrack track{face_landmarks(FaceParams{}), std::nullopt};
  write_landmark_file(dir / "lm.txt", track);
  auto back = read_landmark_file(dir / "lm.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back[0], *track[0]);
  EXPECT_FALSE(back[1].has_value());
  std::ofstream(dir / "bad.txt") << "0 1,2,3\n";
  EXPECT_THROW(read_landmark_file(dir / "bad.txt"), DataError);
  EXPECT_THROW(read_landmark_file(dir / "missing.txt"), DataError);
}
