#include "tdaqm/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "tdaqm/errors.hpp"
#include "tdaqm/log.hpp"
#include "tdaqm/rng.hpp"

namespace tdaqm {

namespace {

constexpr double kEpsPd = 1e-8;
constexpr double kEpsMarginRel = 1e-9;

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

double lambda_max(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

Gains SynthesisCertificate::gains() const {
  Gains g;
  if (k.rows() != 1 || (k.cols() != 2 && k.cols() != 3))
    throw config_error("certificate gain is not a 2- or 3-state AQM gain");
  g.flavor = k.cols() == 2 ? Gains::Flavor::plain : Gains::Flavor::integral;
  g.k = k;
  return g;
}

Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         double control_weight) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  const Eigen::MatrixXd rinv =
      Eigen::MatrixXd::Identity(m, m) / control_weight;
  Eigen::MatrixXd ham(2 * n, 2 * n);
  ham.topLeftCorner(n, n) = a;
  ham.topRightCorner(n, n) = -b * rinv * b.transpose();
  ham.bottomLeftCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
  ham.bottomRightCorner(n, n) = -a.transpose();

  Eigen::EigenSolver<Eigen::MatrixXd> es(ham);
  if (es.info() != Eigen::Success)
    throw numerical_error("Hamiltonian eigen decomposition failed");
  Eigen::MatrixXcd basis(2 * n, n);
  int count = 0;
  for (int i = 0; i < 2 * n && count < n; ++i) {
    if (es.eigenvalues()(i).real() < 0) basis.col(count++) = es.eigenvectors().col(i);
  }
  if (count != n)
    throw numerical_error("Hamiltonian has no n-dimensional stable subspace");
  const Eigen::MatrixXcd u = basis.topRows(n);
  const Eigen::MatrixXcd v = basis.bottomRows(n);
  const Eigen::MatrixXcd pc = v * u.fullPivLu().inverse();
  Eigen::MatrixXd p = pc.real();
  p = 0.5 * (p + p.transpose()).eval();
  if (!p.allFinite()) throw numerical_error("Riccati solution is not finite");
  return -rinv * b.transpose() * p;
}

// ---------------------------------------------------------------------------
// Alternation machinery. The decision tuple (P, Q, R, X) enters the form
// Gamma + XS + S^T X^T linearly, so each half of the alternation is convex;
// P, Q, R are kept positive definite through square-root factors plus a
// ridge, and the tuple is renormalized to unit scale every step (feasibility
// is scale-invariant, X scales linearly, the factors with sqrt).
// ---------------------------------------------------------------------------

namespace {

struct SynFactors {
  Eigen::MatrixXd lp, lq, lr, x;
};

double syn_scale(const SynFactors& f) {
  const double np = (f.lp * f.lp.transpose()).norm();
  const double nq = (f.lq * f.lq.transpose()).norm();
  const double nr = (f.lr * f.lr.transpose()).norm();
  return std::max({np, nq, nr, f.x.norm()});
}

void syn_normalize(SynFactors& f, int n, int rn, int xrows) {
  double s = syn_scale(f);
  if (!std::isfinite(s) || s <= 1e-300) {
    f.lp = Eigen::MatrixXd::Identity(n, n);
    f.lq = Eigen::MatrixXd::Identity(rn, rn);
    f.lr = Eigen::MatrixXd::Identity(n, n);
    f.x = Eigen::MatrixXd::Zero(xrows, n);
    s = syn_scale(f);
  }
  f.lp /= std::sqrt(s);
  f.lq /= std::sqrt(s);
  f.lr /= std::sqrt(s);
  f.x /= s;
}

struct SynEval {
  LkParams lk;
  Eigen::MatrixXd x;
  double fval = std::numeric_limits<double>::infinity();
  double form_norm = 0;
  Eigen::VectorXd top_vec;
};

SynEval syn_assemble(const SynFactors& f, const Eigen::MatrixXd& s_mat,
                     double h_m, int r, int n) {
  SynEval e;
  e.lk.r = r;
  e.lk.h_m = h_m;
  e.lk.p = f.lp * f.lp.transpose() + kEpsPd * Eigen::MatrixXd::Identity(n, n);
  e.lk.q = f.lq * f.lq.transpose() +
           kEpsPd * Eigen::MatrixXd::Identity(r * n, r * n);
  e.lk.r_mat = f.lr * f.lr.transpose() + kEpsPd * Eigen::MatrixXd::Identity(n, n);
  e.x = f.x;
  Eigen::MatrixXd form = build_gamma(e.lk, n);
  const Eigen::MatrixXd xs = f.x * s_mat;
  form += xs + xs.transpose();
  form = 0.5 * (form + form.transpose()).eval();
  e.form_norm = form.norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(form);
  e.fval = es.eigenvalues().maxCoeff();
  e.top_vec = es.eigenvectors().col(es.eigenvalues().size() - 1);
  return e;
}

SynFactors syn_gradient(const SynEval& e, const SynFactors& f,
                        const Eigen::MatrixXd& s_mat, double h_m, int r, int n) {
  const Eigen::VectorXd& u = e.top_vec;  // form acts on xi-space directly
  const Eigen::VectorXd u0 = u.segment(0, n);
  const Eigen::VectorXd u1 = u.segment(n, n);
  const Eigen::VectorXd u2 = u.segment(2 * n, n);
  const Eigen::VectorXd du = u1 - u2;
  const Eigen::VectorXd ut = u.segment(n, r * n);
  const Eigen::VectorXd uh = u.segment(2 * n, r * n);
  const double rr = static_cast<double>(r);

  const Eigen::MatrixXd gp = u0 * u1.transpose() + u1 * u0.transpose();
  const Eigen::MatrixXd gr =
      (h_m / rr) * (u0 * u0.transpose()) - (rr / h_m) * (du * du.transpose());
  const Eigen::MatrixXd gq = ut * ut.transpose() - uh * uh.transpose();

  SynFactors g;
  g.lp = 2.0 * gp * f.lp;
  g.lq = 2.0 * gq * f.lq;
  g.lr = 2.0 * gr * f.lr;
  g.x = 2.0 * u * (s_mat * u).transpose();
  return g;
}

// A few backtracking descent steps on (P, Q, R, X) with K (hence S) fixed.
void lmi_phase(SynFactors& f, SynEval& cur, const Eigen::MatrixXd& s_mat,
               double h_m, int r, int n, int steps, double& step) {
  const int xrows = (r + 2) * n;
  for (int it = 0; it < steps; ++it) {
    const SynFactors g = syn_gradient(cur, f, s_mat, h_m, r, n);
    const double gnorm2 = g.lp.squaredNorm() + g.lq.squaredNorm() +
                          g.lr.squaredNorm() + g.x.squaredNorm();
    if (gnorm2 < 1e-28) return;
    bool accepted = false;
    double t = step;
    for (int bt = 0; bt < 24 && !accepted; ++bt) {
      SynFactors cand{f.lp - t * g.lp, f.lq - t * g.lq, f.lr - t * g.lr,
                      f.x - t * g.x};
      syn_normalize(cand, n, r * n, xrows);
      SynEval ce = syn_assemble(cand, s_mat, h_m, r, n);
      if (std::isfinite(ce.fval) && ce.fval < cur.fval - 1e-4 * t * gnorm2) {
        f = cand;
        cur = ce;
        accepted = true;
        step = std::min(t * 2.0, 1e3);
      } else {
        t *= 0.5;
      }
    }
    if (!accepted) {
      const double t2 = 0.01 / std::sqrt(std::max(gnorm2, 1e-24));
      SynFactors cand{f.lp - t2 * g.lp, f.lq - t2 * g.lq, f.lr - t2 * g.lr,
                      f.x - t2 * g.x};
      syn_normalize(cand, n, r * n, xrows);
      SynEval ce = syn_assemble(cand, s_mat, h_m, r, n);
      if (!std::isfinite(ce.fval)) return;
      f = cand;
      cur = ce;
    }
  }
}

// A few descent steps on K with (P, Q, R, X) fixed. Returns the updated S.
void gain_phase(Eigen::MatrixXd& k, Eigen::MatrixXd& s_mat, SynEval& cur,
                const SynFactors& f, const TdsSystem& sys, double h_m, int r,
                int n, int steps, double reg) {
  for (int it = 0; it < steps; ++it) {
    const Eigen::VectorXd& u = cur.top_vec;
    const Eigen::VectorXd u_last = u.segment((r + 1) * n, n);
    const Eigen::VectorXd xv = f.x.transpose() * u;
    Eigen::MatrixXd gk =
        2.0 * sys.b.transpose() * xv * u_last.transpose() + 2.0 * reg * k;
    const double gnorm2 = gk.squaredNorm();
    if (gnorm2 < 1e-30) return;
    const double fcur = cur.fval + reg * k.squaredNorm();
    bool accepted = false;
    double t = 0.5;
    for (int bt = 0; bt < 30 && !accepted; ++bt) {
      const Eigen::MatrixXd kc = k - t * gk;
      const Eigen::MatrixXd sc = constraint_matrix(sys, r, &kc);
      SynEval ce = syn_assemble(f, sc, h_m, r, n);
      const double fc = ce.fval + reg * kc.squaredNorm();
      if (std::isfinite(fc) && fc < fcur - 1e-4 * t * gnorm2) {
        k = kc;
        s_mat = sc;
        cur = ce;
        accepted = true;
      } else {
        t *= 0.5;
      }
    }
    if (!accepted) return;
  }
}

// Finsler direction: with S_perp^T Gamma S_perp < 0, some sigma makes
// Gamma - sigma S^T S negative definite; X = -(sigma/2) S^T is then a
// strictly feasible slack. Keeps doubling sigma while the margin still
// deepens so the alternation starts from a well-interior point.
std::optional<Eigen::MatrixXd> finsler_lift(const Eigen::MatrixXd& gamma,
                                            const Eigen::MatrixXd& s_mat) {
  const Eigen::MatrixXd sts = s_mat.transpose() * s_mat;
  double sigma = std::max(1.0, gamma.norm() / std::max(sts.norm(), 1e-300));
  double best = std::numeric_limits<double>::infinity();
  double best_sigma = sigma;
  for (int i = 0; i < 80; ++i) {
    const double lm = lambda_max(gamma - sigma * sts);
    if (lm < best) {
      if (best < 0 && lm > 1.25 * best) break;  // converged (both negative)
      best = lm;
      best_sigma = sigma;
    } else if (best < 0) {
      break;
    }
    sigma *= 2.0;
  }
  if (best >= 0) return std::nullopt;
  return Eigen::MatrixXd(-(best_sigma / 2.0) * s_mat.transpose());
}

// Osborne-style diagonal balancing of |A| + |Ad_closed|: the raw TCP/AQM
// coordinates mix packets with probabilities (five orders of magnitude), and
// the matrix-inequality search conditions much better on the balanced state.
Eigen::VectorXd balance_scales(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& ad) {
  const int n = static_cast<int>(a.rows());
  const Eigen::MatrixXd m = a.cwiseAbs() + ad.cwiseAbs();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  for (int sweep = 0; sweep < 30; ++sweep) {
    for (int i = 0; i < n; ++i) {
      double row = 0, col = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        row += m(i, j) * d(j) / d(i);
        col += m(j, i) * d(i) / d(j);
      }
      if (row > 0 && col > 0) d(i) *= std::sqrt(row / col);
      d(i) = std::clamp(d(i), 1e-8, 1e8);
    }
  }
  return d;
}

struct SynCandidate {
  Eigen::MatrixXd k;
  LkParams lk;
  Eigen::MatrixXd x;
  double margin = 0;
  double abscissa = 0;  // oracle rightmost root real part at h_m
  std::complex<double> root{0, 0};
  int restart = 0;
};

}  // namespace

SynthesisCertificate synthesize_gain(const TdsSystem& sys, double h_m, int r,
                                     const SynthesisOptions& opts) {
  sys.validate();
  if (!(h_m > 0)) throw config_error("h_m must be positive");
  if (r < 1) throw config_error("r must be >= 1");
  const int n = sys.dim();
  const int m = sys.inputs();

  SynthesisCertificate cert;
  cert.h_m = h_m;
  cert.r = r;
  cert.dim = n;
  cert.inputs = m;
  cert.k = Eigen::MatrixXd::Zero(m, n);

  // Zero-delay stabilizing seeds (LQR sweep over the control weight, plus
  // K = 0 when the open loop is already stable at zero delay).
  const Eigen::MatrixXd m0 = sys.a + sys.a_d;
  std::vector<Eigen::MatrixXd> seeds;
  if (spectral_abscissa(m0) < 0) seeds.push_back(Eigen::MatrixXd::Zero(m, n));
  for (double rho = 1e-2; rho <= 1e12; rho *= 1e2) {
    try {
      const Eigen::MatrixXd k0 = lqr_gain(m0, sys.b, rho);
      if (k0.allFinite() && spectral_abscissa(m0 + sys.b * k0) < 0)
        seeds.push_back(k0);
    } catch (const numerical_error&) {
      // this weight failed; other seeds may still work
    }
  }
  if (seeds.empty()) {
    cert.verdict = Verdict::infeasible;
    log_info("synthesize: no zero-delay stabilizing seed found");
    return cert;
  }

  double seed_scale = 0;
  for (const auto& s : seeds) seed_scale = std::max(seed_scale, s.norm());
  if (seed_scale <= 0) seed_scale = 1e-6;

  Rng rng(opts.seed);
  std::vector<SynCandidate> candidates;
  const int restarts = std::max(1, opts.restarts);
  for (int restart = 0; restart < restarts; ++restart) {
    Rng child = rng.fork(static_cast<std::uint64_t>(restart));
    Eigen::MatrixXd k = seeds[restart % seeds.size()];
    if (restart >= static_cast<int>(seeds.size())) {
      for (int j = 0; j < k.cols(); ++j)
        for (int i = 0; i < k.rows(); ++i)
          k(i, j) += 0.25 * seed_scale * child.normal();
    }
    if (spectral_abscissa(m0 + sys.b * k) >= 0) continue;
    // Delay stability of the seed loop is necessary; skip hopeless seeds
    // before spending the feasibility budget.
    {
      const RootResult seed_root = rightmost_root(sys.a, sys.a_d + sys.b * k, h_m);
      if (seed_root.root.real() >= 0) continue;
    }

    // Work in balanced coordinates x' = D^{-1} x for this seed's closed loop.
    const Eigen::VectorXd d = balance_scales(sys.a, sys.a_d + sys.b * k);
    const Eigen::VectorXd dinv = d.cwiseInverse();
    TdsSystem bal = sys;
    bal.a = dinv.asDiagonal() * sys.a * d.asDiagonal();
    bal.a_d = dinv.asDiagonal() * sys.a_d * d.asDiagonal();
    bal.b = dinv.asDiagonal() * sys.b;
    Eigen::MatrixXd kb = k * d.asDiagonal();

    // Analysis certificate for the balanced closed loop, then the Finsler
    // lift to a strictly feasible slack.
    TdsSystem closed = bal;
    closed.a_d = bal.a_d + bal.b * kb;
    SearchOptions aopts;
    aopts.restarts = opts.analysis_restarts;
    aopts.iters = opts.analysis_iters;
    aopts.seed = child.next_u64();
    const StabilityCertificate acert = analysis_feasible(closed, h_m, r, aopts);
    if (acert.verdict != Verdict::feasible) continue;

    Eigen::MatrixXd s_mat = constraint_matrix(bal, r, &kb);
    const auto x0 = finsler_lift(build_gamma(acert.lk, n), s_mat);
    if (!x0.has_value()) continue;

    SynFactors f;
    {
      Eigen::LLT<Eigen::MatrixXd> lp(acert.lk.p), lq(acert.lk.q), lr(acert.lk.r_mat);
      if (lp.info() != Eigen::Success || lq.info() != Eigen::Success ||
          lr.info() != Eigen::Success)
        continue;
      f.lp = lp.matrixL();
      f.lq = lq.matrixL();
      f.lr = lr.matrixL();
      f.x = *x0;
    }
    syn_normalize(f, n, r * n, (r + 2) * n);
    SynEval cur = syn_assemble(f, s_mat, h_m, r, n);

    double step = 0.25;
    double last_f = cur.fval;
    int stale = 0;
    const double reg = opts.gain_reg * std::max(cur.form_norm, 1e-12);
    for (int round = 0; round < opts.rounds; ++round) {
      lmi_phase(f, cur, s_mat, h_m, r, n, 4, step);
      gain_phase(kb, s_mat, cur, f, bal, h_m, r, n, 3, reg);
      if (cur.fval > last_f - 1e-6 * std::abs(last_f) - 1e-15) {
        if (++stale >= 10) break;
      } else {
        stale = 0;
      }
      last_f = cur.fval;
    }
    if (!(cur.fval < 0)) continue;

    // Map the solution back to the original coordinates
    // (P = D^{-1} P' D^{-1} blockwise, X = T^{-1} X' D^{-1}) and polish the
    // margin there, where the certificate must stand on its own.
    k = kb * dinv.asDiagonal();
    SynFactors forig;
    forig.lp = dinv.asDiagonal() * f.lp;
    forig.lr = dinv.asDiagonal() * f.lr;
    forig.lq = f.lq;
    for (int blk = 0; blk < r; ++blk)
      forig.lq.middleRows(blk * n, n) =
          dinv.asDiagonal() * f.lq.middleRows(blk * n, n);
    forig.x = f.x * dinv.asDiagonal();
    for (int blk = 0; blk < r + 2; ++blk)
      forig.x.middleRows(blk * n, n) =
          dinv.asDiagonal() * forig.x.middleRows(blk * n, n);
    Eigen::MatrixXd s_orig = constraint_matrix(sys, r, &k);
    syn_normalize(forig, n, r * n, (r + 2) * n);
    SynEval fin = syn_assemble(forig, s_orig, h_m, r, n);
    double polish_step = 0.25;
    lmi_phase(forig, fin, s_orig, h_m, r, n, 60, polish_step);
    fin = syn_assemble(forig, s_orig, h_m, r, n);

    // Validation: exact eigenvalue recheck of the assembled inequality, PD of
    // the functional matrices, the Finsler-implied analysis condition, and
    // the characteristic-root oracle at h_m and h_m/2.
    const double eps_margin = kEpsMarginRel * fin.form_norm;
    if (!(fin.fval < -eps_margin)) continue;
    if (min_eigenvalue(fin.lk.p) <= 0 || min_eigenvalue(fin.lk.q) <= 0 ||
        min_eigenvalue(fin.lk.r_mat) <= 0)
      continue;
    if (evaluate_margin(fin.lk, sys, &k) >= 0) continue;
    const Eigen::MatrixXd ad_cl = sys.a_d + sys.b * k;
    const RootResult root_full = rightmost_root(sys.a, ad_cl, h_m);
    const RootResult root_half = rightmost_root(sys.a, ad_cl, h_m / 2.0);
    if (!root_full.converged || root_full.root.real() >= 0) continue;
    if (!root_half.converged || root_half.root.real() >= 0) continue;

    SynCandidate cand;
    cand.k = k;
    cand.lk = fin.lk;
    cand.x = fin.x;
    cand.margin = fin.fval;
    cand.abscissa = root_full.root.real();
    cand.root = root_full.root;
    cand.restart = restart;
    candidates.push_back(std::move(cand));
  }

  if (candidates.empty()) {
    cert.verdict = Verdict::undecided;
    return cert;
  }
  // Deterministic merge: deepest closed-loop spectral abscissa wins, ties go
  // to the lowest restart index (candidates are already in restart order).
  const auto best = std::min_element(
      candidates.begin(), candidates.end(),
      [](const SynCandidate& a, const SynCandidate& b) {
        return a.abscissa < b.abscissa;
      });
  cert.k = best->k;
  cert.lk = best->lk;
  cert.slack = best->x;
  cert.margin = best->margin;
  cert.oracle_root = best->root;
  cert.verdict = Verdict::feasible;
  return cert;
}

ClosedLoopCheck verify_closed_loop(const TdsSystem& sys, const Eigen::MatrixXd& k,
                                   double h_m, int r, const SearchOptions& opts) {
  sys.validate();
  if (k.rows() != sys.inputs() || k.cols() != sys.dim())
    throw config_error("gain dimensions do not match the system");
  TdsSystem closed = sys;
  closed.a_d = sys.a_d + sys.b * k;
  ClosedLoopCheck out;
  out.certificate = analysis_feasible(closed, h_m, r, opts);
  out.oracle = rightmost_root(closed.a, closed.a_d, h_m);
  return out;
}

ClosedLoopCheck verify_closed_loop(const TdsSystem& sys, const Gains& gains,
                                   double h_m, int r, const SearchOptions& opts) {
  gains.validate();
  return verify_closed_loop(sys, Eigen::MatrixXd(gains.k), h_m, r, opts);
}

double synthesis_margin(const SynthesisCertificate& cert, const TdsSystem& sys) {
  const int n = sys.dim();
  const Eigen::MatrixXd s_mat = constraint_matrix(sys, cert.r, &cert.k);
  Eigen::MatrixXd form = build_gamma(cert.lk, n);
  const Eigen::MatrixXd xs = cert.slack * s_mat;
  form += xs + xs.transpose();
  form = 0.5 * (form + form.transpose()).eval();
  return lambda_max(form);
}

}  // namespace tdaqm
