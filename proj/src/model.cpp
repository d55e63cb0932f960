#include "tdaqm/model.hpp"

#include <cmath>
#include <sstream>

#include "tdaqm/errors.hpp"

namespace tdaqm {

void NetworkParams::validate() const {
  std::ostringstream err;
  if (!(n_flows >= 1)) err << "n_flows must be >= 1 (got " << n_flows << ")";
  else if (!(capacity > 0)) err << "capacity must be > 0 (got " << capacity << ")";
  else if (!(prop_delay >= 0)) err << "prop_delay must be >= 0 (got " << prop_delay << ")";
  else if (!(q_target >= 0 && q_target <= buffer_size))
    err << "q_target must lie in [0, buffer_size] (got " << q_target << " with buffer "
        << buffer_size << ")";
  if (!err.str().empty()) throw config_error("network: " + err.str());
}

void TdsSystem::validate() const {
  const auto n = a.rows();
  if (a.cols() != n || a_d.rows() != n || a_d.cols() != n || b.rows() != n ||
      b_d.rows() != n || b_d.cols() != 1)
    throw config_error("system matrices are dimensionally inconsistent");
  if (!(delay > 0)) throw config_error("system delay must be > 0");
}

OperatingPoint operating_point(const NetworkParams& params) {
  params.validate();
  OperatingPoint op;
  op.r0 = params.q_target / params.capacity + params.prop_delay;
  if (!(op.r0 > 0)) throw config_error("operating point: R0 = q0/C + Tp is zero");
  op.w0 = op.r0 * params.capacity / params.n_flows;
  op.p0 = 2.0 / (op.w0 * op.w0);
  if (op.w0 < 1.0) {
    std::ostringstream msg;
    msg << "operating point: equilibrium window W0 = R0*C/N = " << op.w0
        << " packets is below one packet for N=" << params.n_flows << ", C=" << params.capacity
        << ", Tp=" << params.prop_delay << ", q0=" << params.q_target
        << "; the fluid model is invalid at this load";
    throw config_error(msg.str());
  }
  if (op.p0 > 1.0) {
    std::ostringstream msg;
    msg << "operating point: equilibrium drop probability p0 = 2/W0^2 = " << op.p0
        << " exceeds 1 (W0 = " << op.w0 << ")";
    throw config_error(msg.str());
  }
  return op;
}

TdsSystem linearize(const NetworkParams& params, const OperatingPoint& op) {
  params.validate();
  const double n = params.n_flows;
  const double c = params.capacity;
  const double r0 = op.r0;
  const double inv_r2c = 1.0 / (r0 * r0 * c);  // 1/(R0^2 C)

  TdsSystem sys;
  sys.a.resize(2, 2);
  sys.a << -n * inv_r2c, -inv_r2c,
            n / r0,      -1.0 / r0;
  sys.a_d.resize(2, 2);
  sys.a_d << -n * inv_r2c, inv_r2c,
              0.0,         0.0;
  sys.b.resize(2, 1);
  sys.b << -c * c * r0 / (2.0 * n * n),
            0.0;
  sys.b_d.resize(2, 1);
  sys.b_d << 0.0, 1.0;
  sys.delay = r0;
  return sys;
}

TdsSystem augment(const TdsSystem& sys) {
  if (sys.dim() != 2)
    throw config_error("augment expects the 2-state linearized TCP system");
  TdsSystem aug;
  aug.a = Eigen::MatrixXd::Zero(3, 3);
  aug.a.topLeftCorner(2, 2) = sys.a;
  aug.a(2, 1) = 1.0;  // z3dot = dq
  aug.a_d = Eigen::MatrixXd::Zero(3, 3);
  aug.a_d.topLeftCorner(2, 2) = sys.a_d;
  aug.b = Eigen::MatrixXd::Zero(3, sys.inputs());
  aug.b.topRows(2) = sys.b;
  aug.b_d = Eigen::MatrixXd::Zero(3, 1);
  aug.b_d(1, 0) = 1.0;
  aug.delay = sys.delay;
  return aug;
}

DisturbanceGain disturbance_transfer(const NetworkParams& params,
                                     const OperatingPoint& op, const Gains& gains,
                                     double h, std::complex<double> s) {
  const double n = params.n_flows;
  const double c = params.capacity;
  const double r0 = op.r0;
  const double k1 = gains.k1();
  const double k2 = gains.k2();
  const double k3 = gains.k3();

  const std::complex<double> ehs = std::exp(-h * s);
  DisturbanceGain g;
  g.a_s = -(r0 * c * c / (2.0 * n * n)) * ehs;
  // The window equation reads sW = -(N/R0^2C)(1+e^{-hs})W - (1/R0^2C)(1-e^{-hs})Q
  // + a(s)(k1 W + k2 Q + k3 Q/s), so the gain terms enter with -a(s)k on the
  // left-hand side once W is isolated.
  g.b_s = s + (n / (r0 * r0 * c)) * (1.0 + ehs) - g.a_s * k1;
  g.numerator = s * g.b_s;
  g.denominator = (s + 1.0 / r0) * s * g.b_s +
                  (n / r0) * ((s / (r0 * r0 * c)) * (1.0 - ehs) -
                              g.a_s * (s * k2 + k3));
  g.near_pole = std::abs(g.denominator) < 1e-12 * std::max(1.0, std::abs(g.numerator));
  g.value = g.numerator / g.denominator;
  return g;
}

double disturbance_dc_gain(const NetworkParams& params, const OperatingPoint& op,
                           const Gains& gains, double h) {
  // Evaluate on the real axis at s = 10^-4 .. 10^-8 and extrapolate the linear
  // trend pairwise; the last extrapolant is the s -> 0 limit.
  double prev_s = 1e-4;
  double prev_t = disturbance_transfer(params, op, gains, h, {prev_s, 0.0}).value.real();
  double extrap = prev_t;
  for (int k = 5; k <= 8; ++k) {
    const double cur_s = std::pow(10.0, -k);
    const double cur_t =
        disturbance_transfer(params, op, gains, h, {cur_s, 0.0}).value.real();
    extrap = (prev_s * cur_t - cur_s * prev_t) / (prev_s - cur_s);
    prev_s = cur_s;
    prev_t = cur_t;
  }
  return extrap;
}

}  // namespace tdaqm
