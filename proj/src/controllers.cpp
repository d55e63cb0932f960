#include "tdaqm/controllers.hpp"

#include <algorithm>
#include <cmath>

#include "tdaqm/errors.hpp"

namespace tdaqm {

namespace {

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

AqmKind aqm_kind_from_string(const std::string& s) {
  if (s == "SF") return AqmKind::sf;
  if (s == "SFI_cwnd") return AqmKind::sfi_cwnd;
  if (s == "SFI_aggflow") return AqmKind::sfi_aggflow;
  if (s == "PI") return AqmKind::pi;
  if (s == "RED") return AqmKind::red;
  throw config_error("unknown AQM kind '" + s +
                     "' (expected SF, SFI_cwnd, SFI_aggflow, PI or RED)");
}

const char* to_string(AqmKind k) {
  switch (k) {
    case AqmKind::sf: return "SF";
    case AqmKind::sfi_cwnd: return "SFI_cwnd";
    case AqmKind::sfi_aggflow: return "SFI_aggflow";
    case AqmKind::pi: return "PI";
    case AqmKind::red: return "RED";
  }
  return "?";
}

void RedParams::validate(double buffer_size) const {
  if (!(min_th >= 0 && min_th < max_th && max_th <= buffer_size))
    throw config_error("red: thresholds must satisfy 0 <= min_th < max_th <= buffer");
  if (!(p_max > 0 && p_max <= 1)) throw config_error("red: p_max must be in (0, 1]");
  if (!(ewma_weight > 0 && ewma_weight <= 1))
    throw config_error("red: ewma_weight must be in (0, 1]");
}

void AqmConfig::validate(const NetworkParams& net) const {
  switch (kind) {
    case AqmKind::sf:
      gains.validate();
      if (gains.flavor != Gains::Flavor::plain)
        throw config_error("SF needs a plain (k1, k2) gain");
      break;
    case AqmKind::sfi_cwnd:
    case AqmKind::sfi_aggflow:
      gains.validate();
      if (gains.flavor != Gains::Flavor::integral)
        throw config_error("SFI needs an integral (k1, k2, k3) gain");
      break;
    case AqmKind::pi:
      if (!(pi_freq > 0)) throw config_error("pi: sampling frequency must be > 0");
      if (!std::isfinite(pi_a) || !std::isfinite(pi_b))
        throw config_error("pi: coefficients must be finite");
      break;
    case AqmKind::red:
      red.validate(net.buffer_size);
      break;
  }
}

double sf_probability(double d_w, double d_q, const Gains& gains, double p0) {
  return clamp01(p0 + gains.k1() * d_w + gains.k2() * d_q);
}

double sfi_probability(double d_w, double d_q, AqmState& state,
                       const Gains& gains, double p0, double dt) {
  const double raw =
      p0 + gains.k1() * d_w + gains.k2() * d_q + gains.k3() * state.integral_acc;
  // Anti-windup: only accumulate while the unclamped output is a usable
  // probability.
  if (raw >= 0.0 && raw <= 1.0)
    state.integral_acc += 0.5 * dt * (state.prev_dq + d_q);
  state.prev_dq = d_q;
  const double p = clamp01(p0 + gains.k1() * d_w + gains.k2() * d_q +
                           gains.k3() * state.integral_acc);
  state.prev_p = p;
  return p;
}

double pi_update(double d_q, AqmState& state, double a, double b, double period) {
  const double p = clamp01(state.prev_p + a * d_q - b * state.prev_dq);
  state.prev_dq = d_q;
  state.prev_p = p;
  state.last_update += period;
  return p;
}

double red_probability(double q_inst, AqmState& state, const RedParams& params,
                       double /*dt*/) {
  state.ewma_q += params.ewma_weight * (q_inst - state.ewma_q);
  const double avg = state.ewma_q;
  double p = 0.0;
  if (avg >= params.max_th)
    p = 1.0;
  else if (avg > params.min_th)
    p = params.p_max * (avg - params.min_th) / (params.max_th - params.min_th);
  state.prev_p = p;
  return p;
}

double estimate_window(double agg_rate, double rtt, double n_flows) {
  if (!(agg_rate >= 0)) throw config_error("estimate_window: rate must be >= 0");
  if (!(rtt > 0)) throw config_error("estimate_window: rtt must be > 0");
  return agg_rate * rtt / n_flows;
}

}  // namespace tdaqm
