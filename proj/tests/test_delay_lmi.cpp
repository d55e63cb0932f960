#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "tdaqm/certificate_io.hpp"
#include "tdaqm/delay_lmi.hpp"
#include "tdaqm/errors.hpp"
#include "tdaqm/rng.hpp"
#include "test_support.hpp"

using namespace tdaqm;
using tdaqm_test::reference_network;
using tdaqm_test::reference_sf_gains;

namespace {

// Scalar xdot = -x(t-h); its true delay margin is pi/2 (a root crosses the
// axis at s = i when i + e^{-i h} = 0, i.e. h = pi/2).
TdsSystem scalar_delay_system() {
  TdsSystem sys;
  sys.a = Eigen::MatrixXd::Zero(1, 1);
  sys.a_d = Eigen::MatrixXd::Constant(1, 1, -1.0);
  sys.b = Eigen::MatrixXd::Zero(1, 1);
  sys.b_d = Eigen::MatrixXd::Ones(1, 1);
  sys.delay = 1.0;
  return sys;
}

LkParams scalar_lk(double p, double q, double r_val, double h, int r) {
  LkParams lk;
  lk.p = Eigen::MatrixXd::Constant(1, 1, p);
  lk.q = Eigen::MatrixXd::Identity(r, r) * q;
  lk.r_mat = Eigen::MatrixXd::Constant(1, 1, r_val);
  lk.h_m = h;
  lk.r = r;
  return lk;
}

}  // namespace

TEST_CASE("gamma has size (r+2)n and is exactly symmetric") {
  LkParams lk;
  lk.r = 1;
  lk.h_m = 0.5;
  lk.p = Eigen::MatrixXd::Identity(2, 2);
  lk.q = Eigen::MatrixXd::Identity(2, 2) * 0.3;
  lk.r_mat = Eigen::MatrixXd::Identity(2, 2) * 1.7;
  const auto g = build_gamma(lk, 2);
  REQUIRE(g.rows() == 6);
  REQUIRE(g.cols() == 6);
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);

  LkParams bad = lk;
  bad.q = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(build_gamma(bad, 2), config_error);
}

TEST_CASE("gamma for r=2, n=1 matches the hand expansion of the functional derivative") {
  // Hand expansion for xi = (xdot, x, x(t-h/2), x(t-h)) with scalar P, R and
  // Q = q I2: the bound reads
  //   (h/2) R xdot^2 + 2 P x xdot - (2/h) R (x - x_{h/2})^2
  //   + q (x^2 + x_{h/2}^2) - q (x_{h/2}^2 + x_h^2).
  const double p = 2.0, q = 3.0, rho = 5.0, h = 0.7;
  const auto g = build_gamma(scalar_lk(p, q, rho, h, 2), 1);
  REQUIRE(g.rows() == 4);
  Eigen::MatrixXd want(4, 4);
  want << h / 2.0 * rho, p, 0, 0,
          p, q - 2.0 / h * rho, 2.0 / h * rho, 0,
          0, 2.0 / h * rho, -2.0 / h * rho, 0,
          0, 0, 0, -q;
  CHECK((g - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gamma is linear in (P, Q, R)") {
  Rng rng(11);
  const int n = 2, r = 2;
  auto random_sym = [&](int size) {
    Eigen::MatrixXd m(size, size);
    for (int j = 0; j < size; ++j)
      for (int i = 0; i < size; ++i) m(i, j) = rng.normal();
    return Eigen::MatrixXd(0.5 * (m + m.transpose()));
  };
  for (int trial = 0; trial < 10; ++trial) {
    LkParams a, b, mix;
    a.r = b.r = mix.r = r;
    a.h_m = b.h_m = mix.h_m = 0.8;
    a.p = random_sym(n);
    a.q = random_sym(r * n);
    a.r_mat = random_sym(n);
    b.p = random_sym(n);
    b.q = random_sym(r * n);
    b.r_mat = random_sym(n);
    const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    mix.p = alpha * a.p + beta * b.p;
    mix.q = alpha * a.q + beta * b.q;
    mix.r_mat = alpha * a.r_mat + beta * b.r_mat;
    const Eigen::MatrixXd lhs = build_gamma(mix, n);
    const Eigen::MatrixXd rhs =
        alpha * build_gamma(a, n) + beta * build_gamma(b, n);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1 + rhs.norm()));
  }
}

TEST_CASE("constraint matrix holds Ad (or Ad + BK) in the last block") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto sys = linearize(net, op);

  const auto s_open = constraint_matrix(sys, 2);
  CHECK(s_open.rows() == 2);
  CHECK(s_open.cols() == 8);
  CHECK(s_open.block(0, 6, 2, 2) == sys.a_d);
  CHECK(s_open.block(0, 2, 2, 2) == sys.a);
  CHECK(s_open.block(0, 4, 2, 2).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd zero_gain = Eigen::MatrixXd::Zero(1, 2);
  CHECK(constraint_matrix(sys, 2, &zero_gain) == s_open);

  const Eigen::MatrixXd k = reference_sf_gains().k;
  const auto s_cl = constraint_matrix(sys, 2, &k);
  // Hand product: Ad(0,0) + B(0,0) k1 = -0.263 + (-481.8)(-2.372e-4).
  const double inv_r2c = 1.0 / (op.r0 * op.r0 * net.capacity);
  const double b1 =
      -net.capacity * net.capacity * op.r0 / (2.0 * net.n_flows * net.n_flows);
  const double want = -net.n_flows * inv_r2c + b1 * (-0.2372e-3);
  CHECK(s_cl(0, 6) == doctest::Approx(want).epsilon(1e-12));
  CHECK(s_cl(0, 6) == doctest::Approx(-0.149).epsilon(2e-3));
}

TEST_CASE("null-space basis is exact and full rank") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  const auto sys = linearize(net, op);
  for (int r : {1, 2, 3}) {
    const auto s = constraint_matrix(sys, r);
    const auto sp = null_space_basis(s);
    REQUIRE(sp.rows() == (r + 2) * 2);
    REQUIRE(sp.cols() == (r + 1) * 2);
    CHECK((s * sp).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sp);
    CHECK(lu.rank() == (r + 1) * 2);
  }

  // Scalar hand case: null space of [-1, a, b] is spanned by (a,1,0), (b,0,1).
  TdsSystem scalar;
  scalar.a = Eigen::MatrixXd::Constant(1, 1, 2.5);
  scalar.a_d = Eigen::MatrixXd::Constant(1, 1, -1.3);
  scalar.b = Eigen::MatrixXd::Zero(1, 1);
  scalar.b_d = Eigen::MatrixXd::Ones(1, 1);
  scalar.delay = 1.0;
  const auto sp = null_space_basis(constraint_matrix(scalar, 1));
  Eigen::MatrixXd want(3, 2);
  want << 2.5, -1.3, 1, 0, 0, 1;
  CHECK(sp == want);

  Eigen::MatrixXd not_canonical(1, 3);
  not_canonical << 1, 2.5, -1.3;
  CHECK_THROWS_AS(null_space_basis(not_canonical), config_error);
}

TEST_CASE("analysis certifies the scalar system below its margin and not above") {
  const auto sys = scalar_delay_system();
  SearchOptions opts;
  opts.seed = 42;

  const auto ok = analysis_feasible(sys, 1.0, 1, opts);
  CHECK(ok.verdict == Verdict::feasible);
  CHECK(ok.margin < 0);
  // Soundness: the oracle agrees wherever the certificate claims stability.
  for (double frac : {0.25, 0.5, 0.75, 1.0}) {
    const auto root = rightmost_root(sys.a, sys.a_d, frac * 1.0);
    CHECK(root.converged);
    CHECK(root.root.real() < 0);
  }

  // 1.6 s exceeds the true margin pi/2; no r may certify it.
  for (int r : {1, 2, 3}) {
    const auto bad = analysis_feasible(sys, 1.6, r, opts);
    CHECK(bad.verdict != Verdict::feasible);
  }
}

TEST_CASE("analysis reports infeasible when the zero-delay system is unstable") {
  TdsSystem sys = scalar_delay_system();
  sys.a = Eigen::MatrixXd::Constant(1, 1, 1.5);  // A + Ad = 0.5 > 0
  const auto cert = analysis_feasible(sys, 0.1, 1);
  CHECK(cert.verdict == Verdict::infeasible);
}

TEST_CASE("max stable delay: conservatism shrinks with r and never beats the oracle") {
  const auto sys = scalar_delay_system();
  const double pi_half = std::numbers::pi / 2.0;
  SearchOptions opts;
  opts.seed = 3;

  double prev = 0;
  for (int r : {1, 2, 3}) {
    const auto res = max_stable_delay(sys, r, 1e-4, 10.0, opts);
    CAPTURE(r);
    CHECK(res.h_max <= pi_half + 1e-9);
    CHECK(res.h_max >= prev - 2e-4);
    CHECK(res.cert.verdict == Verdict::feasible);
    prev = res.h_max;
  }
  // r = 1 recovers the classical bound sqrt(2) for this system.
  const auto r1 = max_stable_delay(sys, 1, 1e-4, 10.0, opts);
  CHECK(r1.h_max == doctest::Approx(std::sqrt(2.0)).epsilon(2e-3));
}

TEST_CASE("max stable delay grows to the cap when there is no delayed term") {
  TdsSystem sys;
  sys.a = Eigen::MatrixXd::Constant(1, 1, -1.0);
  sys.a_d = Eigen::MatrixXd::Zero(1, 1);
  sys.b = Eigen::MatrixXd::Zero(1, 1);
  sys.b_d = Eigen::MatrixXd::Ones(1, 1);
  sys.delay = 1.0;
  const auto res = max_stable_delay(sys, 1, 1e-3, 50.0);
  CHECK(res.h_max == 50.0);
}

TEST_CASE("max stable delay reports the zero-delay obstruction") {
  TdsSystem sys = scalar_delay_system();
  sys.a = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const auto res = max_stable_delay(sys, 1, 1e-3, 10.0);
  CHECK(res.h_max == 0.0);
  CHECK_FALSE(res.diagnostic.empty());
}

TEST_CASE("rightmost root: no delay term reduces to plain eigenvalues") {
  Eigen::MatrixXd a(2, 2);
  a << -3, 1, 0, -7;
  const auto res = rightmost_root(a, Eigen::MatrixXd::Zero(2, 2), 1.0);
  CHECK(res.converged);
  CHECK(res.root.real() == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(res.root.imag() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rightmost root of xdot = -x(t-1) matches the independent Newton oracle") {
  const auto sys = scalar_delay_system();
  const auto res = rightmost_root(sys.a, sys.a_d, 1.0);
  REQUIRE(res.converged);
  // Test-local oracle on s + e^{-s} = 0 from a coarse start.
  const auto oracle = tdaqm_test::newton_root(
      [](std::complex<double> s) { return s + std::exp(-s); }, {-0.3, 1.3});
  CHECK(std::abs(res.root - oracle) < 1e-6);
  CHECK(res.root.real() == doctest::Approx(-0.3181).epsilon(1e-3));
  CHECK(res.root.imag() == doctest::Approx(1.3372).epsilon(1e-3));
}

TEST_CASE("rightmost root at h = pi/2 sits on the imaginary axis") {
  const auto sys = scalar_delay_system();
  const auto res = rightmost_root(sys.a, sys.a_d, std::numbers::pi / 2.0);
  REQUIRE(res.converged);
  CHECK(std::abs(res.root.real()) < 1e-8);
  CHECK(res.root.imag() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("oracle delay margin finds pi/2 for the scalar system") {
  const auto sys = scalar_delay_system();
  const double margin = oracle_delay_margin(sys.a, sys.a_d, 1e-4, 10.0);
  CHECK(margin == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-3));
}

TEST_CASE("reference closed loop is certified at its own RTT delay") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  auto sys = linearize(net, op);
  sys.a_d += sys.b * reference_sf_gains().k;  // fold the gain

  const auto cert = analysis_feasible(sys, op.r0, 1);
  CHECK(cert.verdict == Verdict::feasible);
  const auto root = rightmost_root(sys.a, sys.a_d, op.r0);
  CHECK(root.converged);
  CHECK(root.root.real() < 0);
}

TEST_CASE("margin sweep stays monotone and below the oracle on the closed loop") {
  const auto net = reference_network();
  const auto op = operating_point(net);
  auto sys = linearize(net, op);
  sys.a_d += sys.b * reference_sf_gains().k;
  const double oracle = oracle_delay_margin(sys.a, sys.a_d, 1e-3, 20.0);
  CHECK(oracle > op.r0);  // the loop is stable well past its own RTT
  SearchOptions opts;
  opts.seed = 3;
  double prev = 0;
  for (int r : {1, 2}) {
    const auto res = max_stable_delay(sys, r, 1e-3, 10.0, opts);
    CHECK(res.h_max <= oracle + 1e-3);
    CHECK(res.h_max >= prev - 2e-3);
    prev = res.h_max;
  }
}

TEST_CASE("analysis certificates are reproducible under a fixed seed") {
  const auto sys = scalar_delay_system();
  SearchOptions opts;
  opts.seed = 99;
  const auto a = analysis_feasible(sys, 1.2, 1, opts);
  const auto b = analysis_feasible(sys, 1.2, 1, opts);
  CHECK(a.verdict == b.verdict);
  CHECK(a.margin == b.margin);
  CHECK(a.lk.p == b.lk.p);
  CHECK(a.lk.q == b.lk.q);
  CHECK(a.lk.r_mat == b.lk.r_mat);
  CHECK(certificate_to_text(a) == certificate_to_text(b));
}
