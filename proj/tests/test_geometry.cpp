#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ovc/geometry.hpp"

using namespace ovc::geometry;

namespace {

Box random_box(std::mt19937_64& rng, double min_edge = 0.02) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    if (x2 - x1 >= min_edge && y2 - y1 >= min_edge) return {x1, y1, x2, y2};
  }
}

}  // namespace

TEST(CenterDistance, Examples) {
  const Box a{0, 0, 2, 2}, b{4, 0, 6, 2};
  EXPECT_DOUBLE_EQ(center_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(center_distance(a, b), 4.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Box p = random_box(rng), q = random_box(rng);
    EXPECT_DOUBLE_EQ(center_distance(p, q), center_distance(q, p));
  }
}

TEST(Hausdorff, Examples) {
  EXPECT_DOUBLE_EQ(hausdorff(Box{0, 0, 1, 1}, Box{0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff(Box{0, 0, 1, 1}, Box{2, 0, 3, 1}), 2.0);
  const Box outer{0, 0, 4, 4}, inner{1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(directed_hausdorff(outer, inner), std::sqrt(8.0));
  EXPECT_DOUBLE_EQ(directed_hausdorff(inner, outer), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff(outer, inner), std::sqrt(8.0));
}

TEST(Hausdorff, GridOracleOnHandExamples) {
  EXPECT_NEAR(hausdorff_grid_oracle(Box{0, 0, 1, 1}, Box{2, 0, 3, 1}, 0.01), 2.0, 1e-12);
  EXPECT_NEAR(hausdorff_grid_oracle(Box{0, 0, 4, 4}, Box{1, 1, 2, 2}, 0.01), std::sqrt(8.0), 1e-12);
  EXPECT_DOUBLE_EQ(hausdorff_grid_oracle(Box{0.1, 0.2, 0.5, 0.6}, Box{0.1, 0.2, 0.5, 0.6}, 0.01), 0.0);
}

TEST(Hausdorff, ClosedFormMatchesGridOracle) {
  std::mt19937_64 rng(2);
  const double step = 0.01, tol = 2 * step * std::sqrt(2.0);
  for (int i = 0; i < 200; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    EXPECT_NEAR(hausdorff(a, b), hausdorff_grid_oracle(a, b, step), tol) << i;
  }
}

TEST(Hausdorff, DegenerateBoxesAreSegments) {
  const Box seg{0.5, 0.0, 0.5, 1.0};  // zero width
  const Box sq{0.0, 0.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(directed_hausdorff(seg, sq), 0.0);
  EXPECT_DOUBLE_EQ(directed_hausdorff(sq, seg), 0.5);
  EXPECT_NEAR(hausdorff_grid_oracle(seg, sq, 0.01), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(iou(seg, sq), 0.0);
}

TEST(Hausdorff, MetricAxioms) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const Box a = random_box(rng), b = random_box(rng), c = random_box(rng);
    EXPECT_DOUBLE_EQ(hausdorff(a, b), hausdorff(b, a));
    EXPECT_EQ(hausdorff(a, a), 0.0);
    EXPECT_GT(hausdorff(a, b), 0.0);
    EXPECT_LE(hausdorff(a, c), hausdorff(a, b) + hausdorff(b, c) + 1e-9);
  }
}

TEST(Hausdorff, GridOracleRejectsCoarseStep) {
  EXPECT_THROW(hausdorff_grid_oracle(Box{0, 0, 0.005, 1}, Box{0, 0, 1, 1}, 0.01), std::invalid_argument);
  EXPECT_THROW(hausdorff_grid_oracle(Box{0, 0, 1, 1}, Box{0, 0, 1, 1}, 0.0), std::invalid_argument);
}

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(iou(Box{0, 0, 2, 2}, Box{0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou(Box{0, 0, 1, 1}, Box{2, 2, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(iou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}), 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}), 0.0);  // empty union
}

TEST(Iou, BoundedAndSymmetric) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(v, iou(b, a));
  }
}

TEST(SpatialFeatures, Examples) {
  const Box a{0, 0, 1, 1}, b{2, 0, 3, 1};
  EXPECT_EQ(spatial_features(a, a), (std::array<double, 3>{0, 0, 1}));
  EXPECT_EQ(spatial_features(a, b), (std::array<double, 3>{2, 2, 0}));
}

TEST(NormalizeBox, ScalesAndClamps) {
  const Box b = normalize_box(-10, 50, 320, 300, 640, 200);
  EXPECT_DOUBLE_EQ(b.x_tl, 0.0);
  EXPECT_DOUBLE_EQ(b.y_tl, 0.25);
  EXPECT_DOUBLE_EQ(b.x_br, 0.5);
  EXPECT_DOUBLE_EQ(b.y_br, 1.0);
  EXPECT_THROW(normalize_box(0, 0, 1, 1, 0, 10), std::invalid_argument);
  EXPECT_THROW(normalize_box(5, 0, 1, 1, 10, 10), std::invalid_argument);
}
