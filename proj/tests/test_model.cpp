#include <cmath>
#include <complex>

#include "doctest.h"
#include "tdaqm/errors.hpp"
#include "tdaqm/model.hpp"
#include "tdaqm/rng.hpp"
#include "test_support.hpp"

using namespace tdaqm;
using tdaqm_test::reference_network;
using tdaqm_test::reference_sf_gains;
using tdaqm_test::reference_sfi_gains;

namespace {

// Independent evaluation of the three equilibrium closed forms.
OperatingPoint hand_operating_point(const NetworkParams& net) {
  OperatingPoint op;
  op.r0 = net.q_target / net.capacity + net.prop_delay;
  op.w0 = op.r0 * net.capacity / net.n_flows;
  op.p0 = 2.0 / (op.w0 * op.w0);
  return op;
}

}  // namespace

TEST_CASE("operating point matches the closed forms on the reference network") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto hand = hand_operating_point(net);
  CHECK(op.r0 == doctest::Approx(hand.r0).epsilon(1e-14));
  CHECK(op.w0 == doctest::Approx(hand.w0).epsilon(1e-14));
  CHECK(op.p0 == doctest::Approx(hand.p0).epsilon(1e-14));
  // Published rounded values: R0 = 0.246 s, W0 = 15 pkts, p0 = 0.008.
  CHECK(op.r0 == doctest::Approx(0.2467).epsilon(1e-3));
  CHECK(op.w0 == doctest::Approx(15.4167).epsilon(1e-3));
  CHECK(op.p0 == doctest::Approx(0.008415).epsilon(1e-3));
  // W0^2 p0 = 2 to machine precision.
  CHECK(std::abs(op.w0 * op.w0 * op.p0 - 2.0) < 8e-16 * 2.0);
}

TEST_CASE("empty target queue forces R0 = Tp") {
  auto net = reference_network();
  net.q_target = 0;
  const auto op = operating_point(net);
  CHECK(op.r0 == net.prop_delay);
}

TEST_CASE("doubling N halves W0 and quadruples p0") {
  auto net = reference_network();
  const auto op1 = operating_point(net);
  net.n_flows *= 2;
  const auto op2 = operating_point(net);
  CHECK(op2.w0 == doctest::Approx(op1.w0 / 2.0).epsilon(1e-12));
  CHECK(op2.p0 == doctest::Approx(op1.p0 * 4.0).epsilon(1e-12));
  CHECK(op2.r0 == doctest::Approx(op1.r0).epsilon(1e-14));
}

TEST_CASE("sub-packet equilibrium window is rejected with a diagnostic") {
  auto net = reference_network();
  net.n_flows = 2e4;  // W0 = R0 C / N drops far below one packet
  CHECK_THROWS_AS(operating_point(net), config_error);
  try {
    operating_point(net);
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("W0") != std::string::npos);
    CHECK(msg.find("20000") != std::string::npos);
  }
}

TEST_CASE("linearization reproduces the closed-form matrices") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto sys = linearize(net, op);

  // Hand evaluation of each entry at R0 = 0.246667, N = 60, C = 3750.
  const double r0 = op.r0;
  const double inv_r2c = 1.0 / (r0 * r0 * net.capacity);
  CHECK(sys.a(0, 0) == doctest::Approx(-net.n_flows * inv_r2c).epsilon(1e-12));
  CHECK(sys.a(0, 1) == doctest::Approx(-inv_r2c).epsilon(1e-12));
  CHECK(sys.a(1, 0) == doctest::Approx(net.n_flows / r0).epsilon(1e-12));
  CHECK(sys.a(1, 1) == doctest::Approx(-1.0 / r0).epsilon(1e-12));
  CHECK(sys.a_d(0, 0) == doctest::Approx(-net.n_flows * inv_r2c).epsilon(1e-12));
  CHECK(sys.a_d(0, 1) == doctest::Approx(inv_r2c).epsilon(1e-12));
  CHECK(sys.a_d(1, 0) == 0.0);
  CHECK(sys.a_d(1, 1) == 0.0);
  const double b1 =
      -net.capacity * net.capacity * r0 / (2.0 * net.n_flows * net.n_flows);
  CHECK(sys.b(0, 0) == doctest::Approx(b1).epsilon(1e-12));
  CHECK(sys.b(1, 0) == 0.0);

  // Rounded reference values.
  CHECK(sys.a(0, 0) == doctest::Approx(-0.263).epsilon(2e-3));
  CHECK(sys.a(1, 0) == doctest::Approx(243.2).epsilon(1e-3));
  CHECK(sys.b(0, 0) == doctest::Approx(-481.8).epsilon(1e-3));

  CHECK(sys.b_d(0, 0) == 0.0);
  CHECK(sys.b_d(1, 0) == 1.0);
  CHECK(sys.delay == op.r0);
}

TEST_CASE("A + Ad has an exactly zero (1,2) entry for any parameters") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    NetworkParams net;
    net.n_flows = 1 + std::floor(rng.uniform(1, 200));
    net.capacity = rng.uniform(100, 20000);
    net.prop_delay = rng.uniform(0.01, 1.0);
    net.buffer_size = rng.uniform(100, 2000);
    net.q_target = rng.uniform(0, net.buffer_size);
    OperatingPoint op;
    try {
      op = operating_point(net);
    } catch (const config_error&) {
      continue;  // infeasible random load
    }
    const auto sys = linearize(net, op);
    CHECK(sys.a(0, 1) + sys.a_d(0, 1) == 0.0);
  }
}

TEST_CASE("augmentation has the integrator block structure") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto sys = linearize(net, op);
  const auto aug = augment(sys);

  REQUIRE(aug.dim() == 3);
  CHECK(aug.a.topLeftCorner(2, 2) == sys.a);
  CHECK(aug.a(2, 0) == 0.0);
  CHECK(aug.a(2, 1) == 1.0);
  CHECK(aug.a(2, 2) == 0.0);
  CHECK(aug.a(0, 2) == 0.0);
  CHECK(aug.a(1, 2) == 0.0);
  // Ad zero-padded: last row and column all zero.
  CHECK(aug.a_d.topLeftCorner(2, 2) == sys.a_d);
  CHECK(aug.a_d.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(aug.a_d.col(2).cwiseAbs().maxCoeff() == 0.0);
  // B = [B; 0].
  CHECK(aug.b.topRows(2) == sys.b);
  CHECK(aug.b(2, 0) == 0.0);

  CHECK_THROWS_AS(augment(aug), config_error);
}

TEST_CASE("integral action kills the DC disturbance gain, plain feedback does not") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const double h = op.r0;

  // k3 != 0: |T(s)| -> 0 along the real axis.
  const auto sfi = reference_sfi_gains();
  double prev = 1e300;
  for (int k = 4; k <= 8; ++k) {
    const double s = std::pow(10.0, -k);
    const double mag = std::abs(disturbance_transfer(net, op, sfi, h, {s, 0}).value);
    CHECK(mag < 0.2 * prev);  // decreasing roughly linearly in s
    prev = mag;
  }
  CHECK(std::abs(disturbance_dc_gain(net, op, sfi, h)) < 1e-8);

  // k3 = 0: the limit settles to a nonzero constant.
  const auto sf = reference_sf_gains();
  const double t7 = disturbance_transfer(net, op, sf, h, {1e-7, 0}).value.real();
  const double t8 = disturbance_transfer(net, op, sf, h, {1e-8, 0}).value.real();
  CHECK(t7 == doctest::Approx(t8).epsilon(1e-4));
  CHECK(std::abs(t8) > 1e-3);
}

TEST_CASE("open-loop DC gain equals the algebraic steady state R0") {
  // With zero gains the queue's steady response to a unit rate step is
  // -(A+Ad)^{-1} Bd in the second coordinate, which reduces to R0.
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto zero = Gains::sf(0.0, 0.0);
  const double dc = disturbance_dc_gain(net, op, zero, op.r0);
  CHECK(dc == doctest::Approx(op.r0).epsilon(1e-6));

  const auto sys = linearize(net, op);
  const Eigen::Vector2d ss = -(sys.a + sys.a_d).inverse() * sys.b_d;
  CHECK(dc == doctest::Approx(ss(1)).epsilon(1e-6));
}

TEST_CASE("plain-gain DC limit matches the closed-loop algebraic steady state") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto sf = reference_sf_gains();
  const double dc = disturbance_dc_gain(net, op, sf, op.r0);

  const auto sys = linearize(net, op);
  const Eigen::Matrix2d m = sys.a + sys.a_d + sys.b * sf.k;
  const Eigen::Vector2d ss = -m.inverse() * sys.b_d;
  CHECK(dc == doctest::Approx(ss(1)).epsilon(1e-6));
  CHECK(dc > 0);  // cross traffic pushes the queue above target
}

TEST_CASE("evaluation at a characteristic root raises the near-pole flag") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto zero = Gains::sf(0.0, 0.0);
  const double h = op.r0;

  // Polish a root of the reported denominator with a test-local Newton, then
  // confirm the near-pole signal at that point.
  const auto den = [&](std::complex<double> s) {
    return disturbance_transfer(net, op, zero, h, s).denominator;
  };
  const std::complex<double> root = tdaqm_test::newton_root(den, {-0.3, 1.0});
  REQUIRE(std::abs(den(root)) < 1e-10);
  CHECK(disturbance_transfer(net, op, zero, h, root).near_pole);
  CHECK_FALSE(disturbance_transfer(net, op, zero, h, {1.0, 0.0}).near_pole);
}
