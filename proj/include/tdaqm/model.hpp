#pragma once

#include <Eigen/Dense>
#include <complex>

#include "tdaqm/gains.hpp"

namespace tdaqm {

/// Physical description of the bottleneck: N homogeneous TCP sessions sharing
/// one router. Units are packets and seconds throughout.
struct NetworkParams {
  double n_flows = 60;       // N, TCP sessions
  double capacity = 3750;    // C, packets/second
  double prop_delay = 0.2;   // Tp, seconds
  double q_target = 175;     // q0, packets
  double buffer_size = 800;  // packets

  void validate() const;
};

/// Equilibrium of the fluid model: window W0, drop probability p0, RTT R0.
struct OperatingPoint {
  double w0 = 0;  // packets
  double p0 = 0;  // probability
  double r0 = 0;  // seconds
};

/// Time-delay state space  xdot = A x + Ad x(t-h) + B u(t-h) + Bd d.
struct TdsSystem {
  Eigen::MatrixXd a;    // n x n
  Eigen::MatrixXd a_d;  // n x n
  Eigen::MatrixXd b;    // n x m
  Eigen::MatrixXd b_d;  // n x 1
  double delay = 0;     // h, seconds

  int dim() const { return static_cast<int>(a.rows()); }
  int inputs() const { return static_cast<int>(b.cols()); }
  void validate() const;
};

/// One evaluation of the disturbance-to-queue transfer function.
struct DisturbanceGain {
  std::complex<double> value{0, 0};  // T(s)
  std::complex<double> a_s{0, 0};
  std::complex<double> b_s{0, 0};
  std::complex<double> numerator{0, 0};
  std::complex<double> denominator{0, 0};
  bool near_pole = false;
};

/// Equilibrium from the three closed forms R0 = q0/C + Tp, W0 = R0*C/N,
/// p0 = 2/W0^2. Rejects loads where the per-flow window drops below one
/// packet (the fluid model is meaningless there).
OperatingPoint operating_point(const NetworkParams& params);

/// Linearized TCP/queue dynamics about the operating point, with the delay
/// frozen at h = R0 and Bd = [0 1]^T.
TdsSystem linearize(const NetworkParams& params, const OperatingPoint& op);

/// Appends an integrator state z3 with z3dot = dq to the 2-state system,
/// giving the 3-state plant used for integral-action synthesis. State order
/// is (dW, dq, u).
TdsSystem augment(const TdsSystem& sys);

/// Closed-loop transfer function T(s) from the cross-traffic rate d to the
/// queue deviation dq, under p = p0 + k1 dW + k2 dq + k3 int(dq).
DisturbanceGain disturbance_transfer(const NetworkParams& params,
                                     const OperatingPoint& op,
                                     const Gains& gains, double h,
                                     std::complex<double> s);

/// s -> 0 limit of T(s), estimated by small-s evaluation with Richardson
/// extrapolation. Zero iff k3 != 0 (the integral action kills the DC error).
double disturbance_dc_gain(const NetworkParams& params, const OperatingPoint& op,
                           const Gains& gains, double h);

}  // namespace tdaqm
