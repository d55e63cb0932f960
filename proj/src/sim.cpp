#include "tdaqm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tdaqm/errors.hpp"
#include "tdaqm/log.hpp"

namespace tdaqm {

namespace {

constexpr double kMinWindow = 0.1;  // packets; fluid model floor

}  // namespace

void Scenario::validate() const {
  network.validate();
  aqm.validate(network);
  if (!(dt > 0)) throw config_error("scenario: dt must be > 0");
  if (!(duration > 0)) throw config_error("scenario: duration must be > 0");
  std::vector<DisturbanceSegment> seg = disturbance;
  std::sort(seg.begin(), seg.end(), [](const auto& a, const auto& b) {
    return a.t_start < b.t_start;
  });
  double prev_end = 0;
  bool first = true;
  for (const auto& s : seg) {
    if (!(s.t_start >= 0 && s.t_end > s.t_start && s.t_end <= duration))
      throw config_error("scenario: disturbance segment outside [0, duration]");
    if (!first && s.t_start < prev_end)
      throw config_error("scenario: disturbance segments overlap");
    prev_end = std::max(prev_end, s.t_end);
    first = false;
  }
  if (init) {
    if (!(init->w > 0 && init->q >= 0 && init->q <= network.buffer_size &&
          init->p >= 0 && init->p <= 1))
      throw config_error("scenario: initial state out of range");
  }
}

double disturbance_signal(const std::vector<DisturbanceSegment>& schedule,
                          double t) {
  double total = 0;
  for (const auto& s : schedule)
    if (t >= s.t_start && t < s.t_end) total += s.rate;
  return total;
}

namespace {

// Sampled history with constant pre-start values and linear interpolation.
// Delayed lookups always trail the integration front by several steps (the
// dt <= Tp/10 guard), so the interpolation never reads past stored data.
class History {
 public:
  History(double dt, double initial, std::size_t reserve)
      : dt_(dt), initial_(initial) {
    values_.reserve(reserve);
  }

  void push(double v) { values_.push_back(v); }

  double at(double t) const {
    if (t <= 0) return initial_;
    const double pos = t / dt_;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= values_.size()) return values_.back();
    const double frac = pos - static_cast<double>(i0);
    return values_[i0] + frac * (values_[i0 + 1] - values_[i0]);
  }

 private:
  double dt_;
  double initial_;
  std::vector<double> values_;
};

struct ControllerDriver {
  const Scenario& scn;
  const OperatingPoint op;
  AqmState state;
  double next_pi_tick = 0;
  double pi_period = 0;

  explicit ControllerDriver(const Scenario& s, const OperatingPoint& o,
                            double p_init, double q_init)
      : scn(s), op(o) {
    state.prev_p = p_init;
    state.ewma_q = q_init;
    state.prev_dq = q_init - s.network.q_target;
    if (s.aqm.kind == AqmKind::pi) pi_period = 1.0 / s.aqm.pi_freq;
  }

  // Drop probability applied at time t. dt_since_last is 0 on the first call.
  double update(double t, double w, double q, double w_hat, double dt_since_last) {
    const double d_q = q - scn.network.q_target;
    switch (scn.aqm.kind) {
      case AqmKind::sf:
        return sf_probability(w - op.w0, d_q, scn.aqm.gains, op.p0);
      case AqmKind::sfi_cwnd:
        return sfi_probability(w - op.w0, d_q, state, scn.aqm.gains, op.p0,
                               dt_since_last);
      case AqmKind::sfi_aggflow:
        return sfi_probability(w_hat - op.w0, d_q, state, scn.aqm.gains, op.p0,
                               dt_since_last);
      case AqmKind::pi: {
        double p = state.prev_p;
        while (t >= next_pi_tick - 1e-12) {
          p = pi_update(d_q, state, scn.aqm.pi_a, scn.aqm.pi_b, pi_period);
          next_pi_tick += pi_period;
        }
        return p;
      }
      case AqmKind::red:
        return red_probability(q, state, scn.aqm.red, dt_since_last);
    }
    return op.p0;
  }
};

void check_finite(double w, double q, double t) {
  if (!std::isfinite(w) || !std::isfinite(q)) {
    std::ostringstream msg;
    msg << "simulation state became non-finite at t = " << t << " s";
    throw numerical_error(msg.str());
  }
}

void reserve_trace(Trace& tr, std::size_t n) {
  tr.t.reserve(n);
  tr.w.reserve(n);
  tr.q.reserve(n);
  tr.p.reserve(n);
  tr.d.reserve(n);
  tr.rtt.reserve(n);
  tr.w_hat.reserve(n);
  tr.agg_rate.reserve(n);
}

}  // namespace

Trace simulate(const Scenario& scn) {
  scn.validate();
  if (scn.model != ModelKind::nonlinear)
    throw config_error("simulate expects the nonlinear model");
  if (scn.dt > scn.network.prop_delay / 10.0)
    throw config_error(
        "dt must not exceed prop_delay/10: the delayed-term lookup would be "
        "under-resolved");

  const OperatingPoint op = operating_point(scn.network);
  const double n_flows = scn.network.n_flows;
  const double cap = scn.network.capacity;
  const double tp = scn.network.prop_delay;
  const double buffer = scn.network.buffer_size;
  const double dt = scn.dt;

  const double w_init = scn.init ? scn.init->w : op.w0;
  const double q_init = scn.init ? scn.init->q : scn.network.q_target;
  const double p_init = scn.init ? scn.init->p : op.p0;

  const auto steps = static_cast<std::size_t>(std::llround(scn.duration / dt));
  History hw(dt, w_init, steps + 2);
  History hq(dt, q_init, steps + 2);
  History hp(dt, p_init, steps + 2);

  ControllerDriver ctl(scn, op, p_init, q_init);
  Trace tr;
  reserve_trace(tr, steps + 1);

  const auto rtt_of = [&](double q) { return q / cap + tp; };
  const auto rhs = [&](double t, double w, double q, double* dw, double* dq) {
    const double r = rtt_of(q);
    const double lag = t - r;
    const double w_d = hw.at(lag);
    const double q_d = hq.at(lag);
    const double p_d = hp.at(lag);
    const double r_d = rtt_of(q_d);
    *dw = 1.0 / r - (w * w_d / (2.0 * r_d)) * p_d;
    *dq = n_flows * w / r - cap + disturbance_signal(scn.disturbance, t);
  };

  double w = w_init;
  double q = q_init;
  long clamp_events = 0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double rtt = rtt_of(q);
    const double agg_rate = n_flows * w / rtt;
    const double w_hat = estimate_window(agg_rate, rtt, n_flows);
    const double p = ctl.update(t, w, q, w_hat, k == 0 ? 0.0 : dt);

    hw.push(w);
    hq.push(q);
    hp.push(p);
    tr.t.push_back(t);
    tr.w.push_back(w);
    tr.q.push_back(q);
    tr.p.push_back(p);
    tr.d.push_back(disturbance_signal(scn.disturbance, t));
    tr.rtt.push_back(rtt);
    tr.w_hat.push_back(w_hat);
    tr.agg_rate.push_back(agg_rate);

    if (k == steps) break;

    double k1w, k1q, k2w, k2q, k3w, k3q, k4w, k4q;
    rhs(t, w, q, &k1w, &k1q);
    rhs(t + 0.5 * dt, w + 0.5 * dt * k1w, q + 0.5 * dt * k1q, &k2w, &k2q);
    rhs(t + 0.5 * dt, w + 0.5 * dt * k2w, q + 0.5 * dt * k2q, &k3w, &k3q);
    rhs(t + dt, w + dt * k3w, q + dt * k3q, &k4w, &k4q);
    w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    check_finite(w, q, t + dt);

    if (w < kMinWindow) {
      w = kMinWindow;
      ++clamp_events;
    }
    if (q < 0) {
      q = 0;
      ++clamp_events;
    } else if (q > buffer) {
      q = buffer;
      ++clamp_events;
    }
  }
  if (clamp_events > 0) {
    std::ostringstream msg;
    msg << "nonlinear simulation clamped the state " << clamp_events
        << " time(s) (queue to [0, buffer] or window to " << kMinWindow << ")";
    log_info(msg.str());
  }
  return tr;
}

Trace simulate_linear(const Scenario& scn) {
  scn.validate();
  if (scn.model != ModelKind::linear)
    throw config_error("simulate_linear expects the linear model");
  if (scn.dt > scn.network.prop_delay / 10.0)
    throw config_error(
        "dt must not exceed prop_delay/10: the delayed-term lookup would be "
        "under-resolved");

  const OperatingPoint op = operating_point(scn.network);
  const TdsSystem sys = linearize(scn.network, op);
  const double h = sys.delay;
  const double a11 = sys.a(0, 0), a12 = sys.a(0, 1), a21 = sys.a(1, 0),
               a22 = sys.a(1, 1);
  const double ad11 = sys.a_d(0, 0), ad12 = sys.a_d(0, 1);
  const double b1 = sys.b(0, 0);
  const double cap = scn.network.capacity;
  const double tp = scn.network.prop_delay;
  const double buffer = scn.network.buffer_size;
  const double n_flows = scn.network.n_flows;
  const double dt = scn.dt;

  const double w_init = scn.init ? scn.init->w : op.w0;
  const double q_init = scn.init ? scn.init->q : scn.network.q_target;
  const double p_init = scn.init ? scn.init->p : op.p0;
  const double dw_init = w_init - op.w0;
  const double dq_init = q_init - scn.network.q_target;

  const auto steps = static_cast<std::size_t>(std::llround(scn.duration / dt));
  History hdw(dt, dw_init, steps + 2);
  History hdq(dt, dq_init, steps + 2);
  History hu(dt, p_init - op.p0, steps + 2);

  ControllerDriver ctl(scn, op, p_init, q_init);
  Trace tr;
  reserve_trace(tr, steps + 1);

  const auto rhs = [&](double t, double dw, double dq, double* ddw,
                       double* ddq) {
    const double lag = t - h;
    const double dw_d = hdw.at(lag);
    const double dq_d = hdq.at(lag);
    const double u_d = hu.at(lag);
    *ddw = a11 * dw + a12 * dq + ad11 * dw_d + ad12 * dq_d + b1 * u_d;
    *ddq = a21 * dw + a22 * dq + disturbance_signal(scn.disturbance, t);
  };

  double dw = dw_init;
  double dq = dq_init;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w_abs = op.w0 + dw;
    const double q_abs = scn.network.q_target + dq;
    const double q_rep = std::clamp(q_abs, 0.0, buffer);
    const double w_rep = std::max(w_abs, 0.0);
    const double rtt = q_rep / cap + tp;
    const double agg_rate = n_flows * w_rep / rtt;
    const double w_hat = estimate_window(agg_rate, rtt, n_flows);
    // The controller sees the pure delta coordinates; only the trace clamps.
    const double p = ctl.update(t, op.w0 + dw, scn.network.q_target + dq,
                                op.w0 + dw, k == 0 ? 0.0 : dt);

    hdw.push(dw);
    hdq.push(dq);
    hu.push(p - op.p0);
    tr.t.push_back(t);
    tr.w.push_back(w_rep);
    tr.q.push_back(q_rep);
    tr.p.push_back(p);
    tr.d.push_back(disturbance_signal(scn.disturbance, t));
    tr.rtt.push_back(rtt);
    tr.w_hat.push_back(w_hat);
    tr.agg_rate.push_back(agg_rate);

    if (k == steps) break;

    double k1w, k1q, k2w, k2q, k3w, k3q, k4w, k4q;
    rhs(t, dw, dq, &k1w, &k1q);
    rhs(t + 0.5 * dt, dw + 0.5 * dt * k1w, dq + 0.5 * dt * k1q, &k2w, &k2q);
    rhs(t + 0.5 * dt, dw + 0.5 * dt * k2w, dq + 0.5 * dt * k2q, &k3w, &k3q);
    rhs(t + dt, dw + dt * k3w, dq + dt * k3q, &k4w, &k4q);
    dw += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    dq += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    check_finite(dw, dq, t + dt);
  }
  return tr;
}

Trace run_scenario(const Scenario& scn) {
  return scn.model == ModelKind::nonlinear ? simulate(scn) : simulate_linear(scn);
}

namespace {

std::optional<PeriodStats> window_stats(const Trace& tr, double from, double to) {
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr.t[i] >= from && tr.t[i] < to) {
      sum += tr.q[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  PeriodStats st;
  st.count = count;
  st.mean = sum / static_cast<double>(count);
  double acc = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr.t[i] >= from && tr.t[i] < to) {
      const double d = tr.q[i] - st.mean;
      acc += d * d;
    }
  }
  st.stddev = std::sqrt(acc / static_cast<double>(count));
  st.cv2 = st.mean != 0 ? (st.stddev / st.mean) * (st.stddev / st.mean) : 0.0;
  return st;
}

}  // namespace

StatsReport periodic_stats(const Trace& trace,
                           const std::vector<DisturbanceSegment>& schedule,
                           double settle_margin) {
  if (trace.size() == 0) throw config_error("periodic_stats: empty trace");
  StatsReport rep;
  rep.settle_margin = settle_margin;
  const double t_end = trace.t.back();
  const double inf = std::numeric_limits<double>::infinity();
  if (schedule.empty()) {
    rep.before = window_stats(trace, settle_margin, inf);
    return rep;
  }
  double d_start = schedule.front().t_start;
  double d_end = schedule.front().t_end;
  for (const auto& s : schedule) {
    d_start = std::min(d_start, s.t_start);
    d_end = std::max(d_end, s.t_end);
  }
  rep.before = window_stats(trace, settle_margin, d_start);
  rep.during = window_stats(trace, d_start + settle_margin, d_end);
  rep.after = window_stats(trace, d_end + settle_margin, t_end + 1.0);
  return rep;
}

}  // namespace tdaqm
