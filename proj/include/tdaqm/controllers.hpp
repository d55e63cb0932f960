#pragma once

#include <string>

#include "tdaqm/gains.hpp"
#include "tdaqm/model.hpp"

namespace tdaqm {

enum class AqmKind { sf, sfi_cwnd, sfi_aggflow, pi, red };

AqmKind aqm_kind_from_string(const std::string& s);
const char* to_string(AqmKind k);

struct RedParams {
  double min_th = 150;        // packets
  double max_th = 200;        // packets
  double p_max = 0.1;         // probability at max_th
  double ewma_weight = 0.002; // averaging weight per sample

  void validate(double buffer_size) const;
};

/// One concrete AQM configuration for a simulation run.
struct AqmConfig {
  AqmKind kind = AqmKind::sfi_cwnd;
  Gains gains;               // SF / SFI flavors
  double pi_a = 1.822e-5;    // probability per packet
  double pi_b = 1.816e-5;
  double pi_freq = 160;      // Hz
  RedParams red;

  void validate(const NetworkParams& net) const;
};

/// Mutable controller state, advanced by the simulation loop.
struct AqmState {
  double integral_acc = 0;  // packets*seconds
  double prev_dq = 0;       // packets
  double prev_p = 0;        // probability
  double ewma_q = 0;        // packets
  double last_update = 0;   // seconds
};

/// Static state feedback: p = clamp(p0 + k1 dW + k2 dq, 0, 1).
double sf_probability(double d_w, double d_q, const Gains& gains, double p0);

/// Dynamic state feedback with integral action. The accumulator advances by
/// the trapezoidal rule over dt and freezes while the unclamped probability
/// is saturated (anti-windup).
double sfi_probability(double d_w, double d_q, AqmState& state,
                       const Gains& gains, double p0, double dt);

/// Incremental PI: p_k = p_{k-1} + a dq_k - b dq_{k-1}, clamped. Call at the
/// controller's own sampling period only.
double pi_update(double d_q, AqmState& state, double a, double b, double period);

/// RED: EWMA queue average, zero below min_th, linear ramp to p_max at
/// max_th, one above.
double red_probability(double q_inst, AqmState& state, const RedParams& params,
                       double dt);

/// Congestion-window estimate from the aggregate incoming rate:
/// W_hat = rate * rtt / N.
double estimate_window(double agg_rate, double rtt, double n_flows);

}  // namespace tdaqm
