#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace spit;
using namespace spit::testing;

namespace {

bool contains(const ShiftIndexSet& s, const IntVector& z) {
  return std::any_of(s.zs.begin(), s.zs.end(), [&](const IntVector& w) { return w == z; });
}

bool symmetric(const ShiftIndexSet& s) {
  return std::all_of(s.zs.begin(), s.zs.end(), [&](const IntVector& z) { return contains(s, IntVector(-z)); });
}

Mat two_points(double ax, double ay, double bx, double by) {
  Mat x(2, 2);
  x << ax, bx, ay, by;
  return x;
}

}  // namespace

TEST_CASE("lattice basis rejects singular and degenerate cells") {
  Mat singular(2, 2);
  singular << 1, 2, 2, 4;
  CHECK_THROWS_WITH_AS(LatticeBasis<double>{singular}, "singular basis", SingularBasis);
  CHECK_THROWS_AS(LatticeBasis<double>(Mat::Identity(2, 2) * 1e-3), DegenerateCell);
  CHECK_NOTHROW(LatticeBasis<double>(Mat::Identity(3, 3) * 4.0));
}

TEST_CASE("shift set for a 4 x identity cell matches brute-force enumeration") {
  const LatticeBasis<double> b(Mat::Identity(2, 2) * 4.0);
  const double cutoff = 2.5;
  const auto set = build_shift_set(b, cutoff);
  const double reach = cutoff + cell_diameter(b);
  CHECK(cell_diameter(b) == doctest::Approx(4.0 * std::sqrt(2.0)));
  // Oracle: scan a generous box and filter by distance.
  std::set<std::pair<int, int>> expected;
  for (int a = -10; a <= 10; ++a) {
    for (int c = -10; c <= 10; ++c) {
      if (std::hypot(4.0 * a, 4.0 * c) <= reach) expected.insert({a, c});
    }
  }
  std::set<std::pair<int, int>> got;
  for (const auto& z : set.zs) got.insert({z[0], z[1]});
  CHECK(got == expected);
  for (int a = -1; a <= 1; ++a) {
    for (int c = -1; c <= 1; ++c) CHECK(got.count({a, c}) == 1);
  }
}

TEST_CASE("one-dimensional shift set") {
  const LatticeBasis<double> b(Mat::Identity(1, 1));
  const auto set = build_shift_set(b, 0.4);
  REQUIRE(set.zs.size() == 3);
  CHECK(set.zs[0][0] == -1);
  CHECK(set.zs[1][0] == 0);
  CHECK(set.zs[2][0] == 1);
}

TEST_CASE("shift sets are symmetric and contain zero") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3;
    Mat m = Mat::Identity(n, n) * 3.0 + random_matrix(gen, n, n, 0.8);
    const LatticeBasis<double> b(m);
    for (double cutoff : {0.0, 1.0, 2.5}) {
      const auto set = build_shift_set(b, cutoff);
      CHECK(contains(set, IntVector::Zero(n)));
      CHECK(symmetric(set));
    }
  }
}

TEST_CASE("shift set completeness under the torus metric") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    Mat m(2, 2);
    m << 5.0, 1.3, 0.0, 4.2;
    m += random_matrix(gen, 2, 2, 0.5);
    const auto s = make_state(random_matrix(gen, 2, 5, 6.0), m);
    const double cutoff = 2.5;
    const auto found = contacts_of(s, cutoff);
    // Oracle: brute force over a wide box of shifts.
    std::size_t expected = 0;
    for (int i = 0; i < 5; ++i) {
      for (int j = i; j < 5; ++j) {
        for (int a = -8; a <= 8; ++a) {
          for (int c = -8; c <= 8; ++c) {
            ContactIndex ci{i, j, IntVector(Eigen::Vector2i(a, c))};
            if (!ci.is_canonical()) continue;
            if (contact_vector(s, ci).norm() <= cutoff) {
              ++expected;
              CHECK(std::find(found.begin(), found.end(), ci) != found.end());
            }
          }
        }
      }
    }
    CHECK(found.size() == expected);
  }
}

TEST_CASE("pair slack") {
  const Mat b = Mat::Identity(2, 2) * 4.0;
  const auto s = make_state(two_points(0, 0, 2, 0), b);
  CHECK(pair_slack(s, {0, 1, IntVector::Zero(2)}) == 0.0);
  const auto far = make_state(two_points(0, 0, 3, 0), Mat::Identity(2, 2) * 10.0);
  CHECK(pair_slack(far, {0, 1, IntVector::Zero(2)}) == doctest::Approx(5.0));
  const auto same = make_state(two_points(0, 0, 0, 0), b);
  CHECK(pair_slack(same, {0, 0, IntVector(Eigen::Vector2i(1, 0))}) == doctest::Approx(12.0));
}

TEST_CASE("pair slack is symmetric under contact reversal") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = make_state(random_matrix(gen, 2, 4, 3.0), Mat::Identity(2, 2) * 6.0);
    ContactIndex c{static_cast<int>(gen() % 4), static_cast<int>(gen() % 4),
                   IntVector(Eigen::Vector2i(static_cast<int>(gen() % 3) - 1, static_cast<int>(gen() % 3) - 1))};
    CHECK(pair_slack(s, c) == pair_slack(s, c.reversed()));
  }
}

TEST_CASE("slack gradients") {
  const auto s = make_state(two_points(1, 0, -1, 0), Mat::Identity(2, 2) * 10.0);
  const auto g = slack_gradients(s, {0, 1, IntVector::Zero(2)});
  CHECK(g.grad_x(0, 0) == 4.0);
  CHECK(g.grad_x(1, 0) == 0.0);
  CHECK(g.grad_x(0, 1) == -4.0);
  CHECK(g.grad_B.isZero());
}

TEST_CASE("slack gradients match finite differences on random states") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 100; ++trial) {
    Mat b = Mat::Identity(2, 2) * 5.0 + random_matrix(gen, 2, 2, 1.0);
    const Mat x = random_matrix(gen, 2, 3, 4.0);
    const auto s = make_state(x, b);
    ContactIndex c{0, 1 + static_cast<int>(gen() % 2),
                   IntVector(Eigen::Vector2i(static_cast<int>(gen() % 3) - 1, static_cast<int>(gen() % 3) - 1))};
    const auto g = slack_gradients(s, c);
    const double h = 1e-5;
    const Mat fd_x = fd_gradient([&](const Mat& y) { return pair_slack(make_state(y, b), c); }, s.positions(), h);
    const Mat fd_b = fd_gradient([&](const Mat& bb) { return pair_slack(make_state(s.positions(), bb), c); }, b, h);
    CHECK(rel_err(g.grad_x, fd_x) <= 1e-7);
    if (c.z.any()) CHECK(rel_err(g.grad_B, fd_b) <= 1e-7);
    CHECK((g.grad_B - fd_b).norm() <= 1e-7 * std::max(1.0, fd_b.norm()));
  }
}

TEST_CASE("cell volume and its gradient") {
  const LatticeBasis<double> id(Mat::Identity(2, 2));
  CHECK(cell_volume(id) == doctest::Approx(1.0));
  CHECK(volume_gradient(id).isApprox(Mat::Identity(2, 2)));
  Mat m(2, 2);
  m << 2, 1, 0, std::sqrt(3.0);
  CHECK(cell_volume(LatticeBasis<double>(m)) == doctest::Approx(2.0 * std::sqrt(3.0)));

  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    Mat b = Mat::Identity(n, n) * 3.0 + random_matrix(gen, n, n, 1.0);
    if (trial % 4 == 3) b.col(0).swap(b.col(1));  // negative orientation
    const Mat fd = fd_gradient([](const Mat& bb) { return std::abs(bb.determinant()); }, b, 1e-5);
    CHECK(rel_err(volume_gradient(LatticeBasis<double>(b)), fd) <= 1e-7);

    const Mat h = random_matrix(gen, n, n);
    const Mat fd_h = fd_directional(
        [&](double t) { return Mat(volume_gradient(LatticeBasis<double>(b + t * h))); }, 1e-5);
    CHECK(rel_err(volume_hvp(LatticeBasis<double>(b), h), fd_h) <= 1e-6);
  }
}

TEST_CASE("gauge projection") {
  Mat ones = Mat::Ones(2, 3);
  CHECK(gauge_project(ones).isZero());
  Mat centered(2, 2);
  centered << 1, -1, 2, -2;
  CHECK(gauge_project(centered) == centered);
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat x = random_matrix(gen, 3, 7, 5.0);
    const Mat once = gauge_project(x);
    CHECK(gauge_project(once) == once);
    CHECK(once.rowwise().sum().norm() <= 1e-12 * 7);
  }
}

TEST_CASE("gauge projection preserves every slack") {
  std::mt19937_64 gen(31);
  const Mat b = Mat::Identity(2, 2) * 6.0;
  const Mat x = random_matrix(gen, 2, 4, 3.0) + Mat::Constant(2, 4, 0.75);
  const Mat y = gauge_project(x);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const IntVector z = IntVector(Eigen::Vector2i(1, -1));
      const Vec r1 = x.col(i) - x.col(j) - b * z.cast<double>();
      const Vec r2 = y.col(i) - y.col(j) - b * z.cast<double>();
      CHECK(std::abs(r1.squaredNorm() - r2.squaredNorm()) <= 1e-12 * std::max(1.0, r1.squaredNorm()));
    }
  }
  PackingState<double> s(x, LatticeBasis<double>(b));
  CHECK(s.positions().rowwise().sum().norm() <= 1e-12 * 4);
}

TEST_CASE("contact canonical form") {
  ContactIndex c{2, 1, IntVector(Eigen::Vector2i(1, 0))};
  CHECK_FALSE(c.is_canonical());
  CHECK(c.canonical() == ContactIndex{1, 2, IntVector(Eigen::Vector2i(-1, 0))});
  ContactIndex self{0, 0, IntVector(Eigen::Vector2i(0, -1))};
  CHECK(self.canonical().z == IntVector(Eigen::Vector2i(0, 1)));
}

TEST_CASE("min slack") {
  Mat x(2, 3);
  x << 0, 2, 6, 0, 0, 6;
  const auto s = make_state(x, Mat::Identity(2, 2) * 12.0);
  CHECK(min_slack(s, build_shift_set(s.basis(), 2.5)) == doctest::Approx(0.0));

  const auto single = make_state(Mat::Zero(2, 1), Mat::Identity(2, 2) * 4.0);
  CHECK(min_slack(single, build_shift_set(single.basis(), 4.5)) == doctest::Approx(12.0));
}

TEST_CASE("testbed satisfies the safeguard") {
  harness::RunConfig cfg;
  const auto ds = harness::make_testbed(cfg);
  CHECK(min_slack(ds.packing, build_shift_set(ds.packing.basis(), cfg.R)) >= 1e-3);
}
