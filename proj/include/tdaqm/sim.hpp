#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tdaqm/controllers.hpp"
#include "tdaqm/model.hpp"

namespace tdaqm {

/// One piecewise-constant cross-traffic segment, active on [t_start, t_end).
struct DisturbanceSegment {
  double t_start = 0;
  double t_end = 0;
  double rate = 0;  // packets/second
};

enum class ModelKind { nonlinear, linear };

struct InitialCondition {
  double w = 0;  // packets
  double q = 0;  // packets
  double p = 0;  // probability
};

struct Scenario {
  NetworkParams network;
  AqmConfig aqm;
  double duration = 140;  // seconds
  double dt = 1e-3;       // seconds
  std::vector<DisturbanceSegment> disturbance;
  std::optional<InitialCondition> init;  // default: constant at equilibrium
  ModelKind model = ModelKind::nonlinear;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Uniformly sampled simulation output, one row per integration step.
struct Trace {
  std::vector<double> t, w, q, p, d, rtt, w_hat, agg_rate;

  std::size_t size() const { return t.size(); }
};

/// Sum of the active segment rates at time t (zero outside all segments).
double disturbance_signal(const std::vector<DisturbanceSegment>& schedule,
                          double t);

/// Integrates the nonlinear fluid model (state-dependent delay R(t)) with a
/// fixed-step RK4 and linear history interpolation for the lagged terms.
Trace simulate(const Scenario& scn);

/// Integrates the linearized model in delta coordinates with the delay frozen
/// at h = R0; the trace reports absolute quantities.
Trace simulate_linear(const Scenario& scn);

/// Dispatch on scn.model.
Trace run_scenario(const Scenario& scn);

struct PeriodStats {
  double mean = 0;
  double stddev = 0;  // population convention
  double cv2 = 0;     // (stddev/mean)^2
  std::size_t count = 0;
};

/// Queue statistics over the Before / During / After windows induced by the
/// disturbance schedule, with settle_margin seconds trimmed from each window
/// start. Absent (empty) windows stay disengaged rather than reporting zeros.
struct StatsReport {
  std::optional<PeriodStats> before, during, after;
  double settle_margin = 5;
};

StatsReport periodic_stats(const Trace& trace,
                           const std::vector<DisturbanceSegment>& schedule,
                           double settle_margin = 5.0);

}  // namespace tdaqm
