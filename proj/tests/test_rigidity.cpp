#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

using namespace spit;
using namespace spit::testing;

namespace {

const BarrierParams<double> kParams{1e-2, 1e-3};

PackingState<double> square_single() { return make_state(Mat::Zero(2, 1), Mat::Identity(2, 2) * 2.0); }

std::vector<ContactIndex> touching(const PackingState<double>& s, double tol = 1e-9) {
  const auto all = contacts_of(s);
  return active_set(s, std::span<const ContactIndex>(all), tol);
}

Mat rotation(double angle) {
  Mat q(2, 2);
  q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return q;
}

}  // namespace

TEST_CASE("trivial motions lie in the kernel of the shift-convention operator") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = jittered_hex(4 + 2 * static_cast<int>(seed % 5), seed);
    const auto contacts = contacts_of(s);
    const std::span<const ContactIndex> list(contacts);
    const Mat triv = trivial_basis(s);
    CHECK(triv.cols() == 3);
    CHECK((motion_operator(s, list, MotionConvention::kShift) * triv).norm() <= 1e-12 * std::max(1.0, s.positions().norm()));
    // Translations are trivial in either convention.
    CHECK((motion_operator(s, list, MotionConvention::kLiteral) * triv.leftCols(2)).norm() <= 1e-12);
  }
}

TEST_CASE("trivial basis has full rank") {
  for (int n : {2, 3}) {
    std::mt19937_64 gen(static_cast<std::uint64_t>(n));
    const auto s = make_state(random_matrix(gen, n, 5, 3.0), Mat::Identity(n, n) * 8.0);
    const Mat triv = trivial_basis(s);
    CHECK(triv.cols() == n + n * (n - 1) / 2);
    CHECK(Eigen::FullPivLU<Mat>(triv).rank() == triv.cols());
  }
}

TEST_CASE("active set examples") {
  Mat b(2, 2);
  b << 2, 1, 0, std::sqrt(3.0);
  const auto hex = make_state(Mat::Zero(2, 1), b);
  const auto all = contacts_of(hex);
  const std::span<const ContactIndex> list(all);
  const auto act = active_set(hex, list, 1e-9);
  CHECK(act.size() == 3);
  for (const auto& c : act) CHECK(c.is_self());
  CHECK(active_set(hex, list, std::numeric_limits<double>::infinity()).size() == all.size());
  const auto loose = jittered_hex(6, 1, 0.2, 0.0);
  const auto loose_contacts = contacts_of(loose);
  CHECK(active_set(loose, std::span<const ContactIndex>(loose_contacts), 0.05).empty());
}

TEST_CASE("rows of direct contacts ignore the cell velocity") {
  std::mt19937_64 gen(127);
  const auto s = jittered_hex(6, 8);
  const auto all = contacts_of(s);
  std::vector<ContactIndex> direct;
  for (const auto& c : all) {
    if (!c.z.any()) direct.push_back(c);
  }
  REQUIRE_FALSE(direct.empty());
  MotionVector<double> m{random_matrix(gen, 2, 6), Mat::Zero(2, 2)};
  const Mat op = motion_operator(s, std::span<const ContactIndex>(direct));
  const Vec base = op * m.flatten();
  m.A = random_matrix(gen, 2, 2);
  CHECK((op * m.flatten() - base).norm() <= 1e-14);
}

TEST_CASE("dilation gives |r|^2 on every row") {
  const auto s = harness::lattice_packing(2, 4, 1.0);
  const auto active = touching(s);
  REQUIRE(active.size() == 12);
  const MotionVector<double> dilation{s.positions(), Mat::Identity(2, 2)};
  const Vec rows = motion_operator(s, std::span<const ContactIndex>(active)) * dilation.flatten();
  for (Eigen::Index k = 0; k < rows.size(); ++k) CHECK(rows[k] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("hexagonal packing is periodically rigid") {
  for (int count : {1, 2, 4, 6}) {
    const auto s = harness::lattice_packing(2, count, 1.0);
    const auto active = touching(s);
    const auto res = is_periodically_rigid(s, std::span<const ContactIndex>(active));
    CHECK(res.rigid);
    CHECK(res.nontrivial_dim == 0);
    CHECK(res.nontrivial_dim_loose == 0);
  }
}

TEST_CASE("square packing has a shear flex") {
  const auto s = square_single();
  const auto active = touching(s);
  REQUIRE(active.size() == 2);
  const auto res = is_periodically_rigid(s, std::span<const ContactIndex>(active));
  CHECK_FALSE(res.rigid);
  CHECK(res.nontrivial_dim == 1);
  // The flex is the symmetric off-diagonal cell velocity.
  const auto m = MotionVector<double>::unflatten(res.motion_basis.col(0), 2, 1);
  CHECK(std::abs(m.A(0, 1)) == doctest::Approx(std::sqrt(0.5)));
  CHECK(m.A(0, 1) == doctest::Approx(m.A(1, 0)));
  CHECK(std::abs(m.A(0, 0)) <= 1e-12);
}

TEST_CASE("empty active set leaves every nontrivial motion free") {
  const auto s = jittered_hex(4, 3);
  const std::vector<ContactIndex> none;
  const auto res = is_periodically_rigid(s, std::span<const ContactIndex>(none));
  CHECK(res.nullity == 2 * 4 + 4);
  CHECK(res.nontrivial_dim == 2 * 4 + 4 - 3);
}

TEST_CASE("rigidity verdict is invariant under rotation and relabeling") {
  for (int count : {1, 4}) {
    const auto hex = harness::lattice_packing(2, count, 1.0);
    for (const auto& s : {hex, square_single()}) {
      const auto active = touching(s);
      const auto base = is_periodically_rigid(s, std::span<const ContactIndex>(active));
      const Mat q = rotation(0.7);
      const auto r = make_state(q * s.positions(), q * s.basis().matrix());
      const auto ra = touching(r);
      CHECK(ra.size() == active.size());
      CHECK(is_periodically_rigid(r, std::span<const ContactIndex>(ra)).nontrivial_dim == base.nontrivial_dim);
      Mat reversed = s.positions().rowwise().reverse();
      const auto p = make_state(reversed, s.basis().matrix());
      const auto pa = touching(p);
      CHECK(is_periodically_rigid(p, std::span<const ContactIndex>(pa)).nontrivial_dim == base.nontrivial_dim);
    }
  }
}

TEST_CASE("stress energy of a single pair") {
  Mat x(2, 2);
  x << -1, 1, 0, 0;
  const auto s = make_state(x, Mat::Identity(2, 2) * 10.0);
  const std::vector<ContactIndex> active{{0, 1, IntVector::Zero(2)}};
  const std::vector<double> omega{3.0};
  Mat u(2, 2);
  u << -1, 1, 0, 0;
  const MotionVector<double> m{u, Mat::Zero(2, 2)};
  CHECK(stress_energy(s, std::span<const ContactIndex>(active), std::span<const double>(omega), m) ==
        doctest::Approx(12.0));
  Mat slide(2, 2);
  slide << 0, 0, 1, -1;
  CHECK(stress_energy(s, std::span<const ContactIndex>(active), std::span<const double>(omega),
                      MotionVector<double>{slide, Mat::Zero(2, 2)}) == 0.0);
  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(stress_energy(s, std::span<const ContactIndex>(active), std::span<const double>(wrong), m), Error);
}

TEST_CASE("stress energy is a weighted sum of squares") {
  Mat x(2, 2);
  x << -1, 1, 0, 0;
  const auto s = make_state(x, Mat::Identity(2, 2) * 10.0);
  const std::vector<ContactIndex> active{{0, 1, IntVector::Zero(2)}};
  const std::span<const ContactIndex> act(active);
  Mat unit(2, 2);
  unit << -0.5, 0.5, 0, 0;
  const std::vector<double> one{1.0};
  const std::vector<double> zero{0.0};
  const MotionVector<double> m{unit, Mat::Zero(2, 2)};
  CHECK(stress_energy(s, act, std::span<const double>(one), m) == doctest::Approx(1.0));
  CHECK(stress_energy(s, act, std::span<const double>(zero), m) == 0.0);

  std::mt19937_64 gen(131);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto h = jittered_hex(6, seed);
    const auto contacts = contacts_of(h);
    const std::span<const ContactIndex> list(contacts);
    std::vector<double> omega;
    for (std::size_t k = 0; k < contacts.size(); ++k) omega.push_back(harness::uniform01(gen));
    const Mat triv = trivial_basis(h);
    for (Eigen::Index c = 0; c < triv.cols(); ++c) {
      const auto t = MotionVector<double>::unflatten(triv.col(c), 2, 6);
      CHECK(std::abs(stress_energy(h, list, std::span<const double>(omega), t)) <= 1e-18 * std::max(1.0, h.positions().squaredNorm()));
    }
    for (int k = 0; k < 10; ++k) {
      const MotionVector<double> r{random_matrix(gen, 2, 6), random_matrix(gen, 2, 2)};
      CHECK(stress_energy(h, list, std::span<const double>(omega), r) >= 0.0);
    }
  }
}

TEST_CASE("stress energy vanishes on first-order flexes") {
  std::mt19937_64 gen(109);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = jittered_hex(6, seed, 0.01, 0.005);
    const auto active = touching(s, 0.05);
    const std::span<const ContactIndex> act(active);
    const auto res = is_periodically_rigid(s, act);
    std::vector<double> omega;
    for (std::size_t k = 0; k < active.size(); ++k) omega.push_back(2 * harness::uniform01(gen) - 1);
    for (Eigen::Index c = 0; c < res.motion_basis.cols(); ++c) {
      const auto m = MotionVector<double>::unflatten(res.motion_basis.col(c), 2, 6);
      CHECK(std::abs(stress_energy(s, act, std::span<const double>(omega), m)) <= 1e-12);
    }
    if (res.nontrivial_dim > 0) {
      const auto pre = prestress_stable(s, act, std::span<const double>(omega));
      CHECK_FALSE(pre.stable);
      CHECK(std::abs(pre.min_eig) <= 1e-12);
    }
  }
}

TEST_CASE("prestress verdicts") {
  const auto sq = square_single();
  const auto active = touching(sq);
  const std::vector<double> pos{1.0, 1.0};
  const std::vector<double> neg{-1.0, -1.0};
  const auto a = prestress_stable(sq, std::span<const ContactIndex>(active), std::span<const double>(pos));
  CHECK_FALSE(a.stable);
  CHECK(std::abs(a.min_eig) <= 1e-12);
  const auto b = prestress_stable(sq, std::span<const ContactIndex>(active), std::span<const double>(neg));
  CHECK_FALSE(b.stable);
  CHECK(std::abs(b.min_eig) <= 1e-12);

  const auto hex = harness::lattice_packing(2, 4, 1.0);
  const auto hex_active = touching(hex);
  const std::vector<double> ones(hex_active.size(), 1.0);
  const auto c = prestress_stable(hex, std::span<const ContactIndex>(hex_active), std::span<const double>(ones));
  CHECK(c.stable);
  CHECK(std::isinf(c.min_eig));
}

TEST_CASE("multipliers from the barrier derivative") {
  Mat x(2, 3);
  const double s_plus = phi_stationary_slack(kParams);
  x << 0, std::sqrt(4 + kParams.delta), 0, 0, 0, std::sqrt(4 + s_plus);
  const auto s = make_state(x, Mat::Identity(2, 2) * 20.0);
  const std::vector<ContactIndex> pairs{{0, 1, IntVector::Zero(2)}, {0, 2, IntVector::Zero(2)}};
  const auto mu = recover_multipliers(s, std::span<const ContactIndex>(pairs), kParams);
  CHECK(mu.raw[0] == doctest::Approx(kParams.nu / kParams.delta));
  CHECK(std::abs(mu.raw[1]) <= 1e-12);

  BarrierParams<double> unit{1.0, 1.0};
  Mat y2(2, 2);
  y2 << 0, std::sqrt(6.0), 0, 0;
  const auto at_two = make_state(y2, Mat::Identity(2, 2) * 20.0);
  const std::vector<ContactIndex> single{{0, 1, IntVector::Zero(2)}};
  const auto plug = recover_multipliers(at_two, std::span<const ContactIndex>(single), unit);
  CHECK(plug.raw[0] == doctest::Approx(-0.5));
  CHECK(plug.clamped[0] == 0.0);

  std::mt19937_64 gen(113);
  for (int trial = 0; trial < 100; ++trial) {
    const double slack = kParams.delta + (s_plus - kParams.delta) * harness::uniform01(gen);
    CHECK(-phi(slack, kParams).d1 >= 0.0);
    const double above = s_plus + harness::uniform01(gen);
    Mat y(2, 2);
    y << 0, std::sqrt(4 + above), 0, 0;
    const auto t = make_state(y, Mat::Identity(2, 2) * 20.0);
    const std::vector<ContactIndex> one{{0, 1, IntVector::Zero(2)}};
    const auto m = recover_multipliers(t, std::span<const ContactIndex>(one), kParams);
    CHECK(m.raw[0] < 0.0);
    CHECK(m.clamped[0] == 0.0);
  }
}

TEST_CASE("KKT residual examples") {
  const auto sq = square_single();
  const std::vector<ContactIndex> none;
  const auto empty = kkt_residual(sq, std::span<const ContactIndex>(none), std::span<const double>());
  CHECK(empty.res_B == doctest::Approx(2 * std::sqrt(2.0)));
  CHECK(empty.res_x == 0.0);
  CHECK(empty.comp == 0.0);

  // grad_B s = 2 B z z^T = 4 e_k e_k^T balances grad V = 2 I with mu = 1/2.
  const auto active = touching(sq);
  const std::vector<double> half{0.5, 0.5};
  const auto balanced = kkt_residual(sq, std::span<const ContactIndex>(active), std::span<const double>(half));
  CHECK(balanced.res_B <= 1e-14);
  CHECK(balanced.comp == 0.0);

  Mat x(2, 2);
  x << 0, 2.1, 0, 0;
  const auto pair = make_state(x, Mat::Identity(2, 2) * 20.0);
  const std::vector<ContactIndex> one{{0, 1, IntVector::Zero(2)}};
  const std::vector<double> mu{2.0};
  const auto r = kkt_residual(pair, std::span<const ContactIndex>(one), std::span<const double>(mu));
  CHECK(r.comp == doctest::Approx(2.0 * (2.1 * 2.1 - 4)));
  CHECK(r.res_x == doctest::Approx(2.0 * 2 * 2.1 * std::sqrt(2.0)));
  CHECK(r.force_scale == doctest::Approx(2.0 * 2 * 2.1 * std::sqrt(2.0)));
}

TEST_CASE("LICQ on the square cell") {
  const auto sq = square_single();
  const auto active = touching(sq);
  CHECK(licq_sigma_min(sq, std::span<const ContactIndex>(active)) == doctest::Approx(4.0));
  const std::vector<ContactIndex> none;
  CHECK(std::isinf(licq_sigma_min(sq, std::span<const ContactIndex>(none))));
}
