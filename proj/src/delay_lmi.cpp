#include "tdaqm/delay_lmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "tdaqm/errors.hpp"
#include "tdaqm/log.hpp"
#include "tdaqm/rng.hpp"

namespace tdaqm {

namespace {

// Positive-definiteness ridge (after unit normalization of the factors) and
// strictness slack relative to the assembled form's norm.
constexpr double kEpsPd = 1e-8;
constexpr double kEpsMarginRel = 1e-9;

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::feasible: return "feasible";
    case Verdict::infeasible: return "infeasible";
    case Verdict::undecided: return "undecided";
  }
  return "undecided";
}

void LkParams::validate(int n) const {
  if (r < 1) throw config_error("discretization step r must be >= 1");
  if (!(h_m > 0)) throw config_error("delay bound h_m must be > 0");
  if (p.rows() != n || p.cols() != n || r_mat.rows() != n || r_mat.cols() != n ||
      q.rows() != static_cast<long>(r) * n || q.cols() != static_cast<long>(r) * n)
    throw config_error("LK parameter dimensions do not match the system");
}

Eigen::MatrixXd build_gamma(const LkParams& lk, int n) {
  lk.validate(n);
  const int r = lk.r;
  const double h = lk.h_m;
  const double rr = static_cast<double>(r);
  const int size = (r + 2) * n;

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(size, size);
  // Coupling blocks from the P term and the Jensen bound on the first
  // sub-interval's R integral; everything else in this summand is zero.
  g.block(0, 0, n, n) = (h / rr) * lk.r_mat;
  g.block(0, n, n, n) = lk.p;
  g.block(n, 0, n, n) = lk.p;
  g.block(n, n, n, n) = -(rr / h) * lk.r_mat;
  g.block(n, 2 * n, n, n) = (rr / h) * lk.r_mat;
  g.block(2 * n, n, n, n) = (rr / h) * lk.r_mat;
  g.block(2 * n, 2 * n, n, n) += -(rr / h) * lk.r_mat;
  // +Q over the r newest sub-states (x(t) .. x(t-(r-1)h/r)).
  g.block(n, n, r * n, r * n) += lk.q;
  // -Q over the r oldest sub-states (x(t-h/r) .. x(t-h)).
  g.block(2 * n, 2 * n, r * n, r * n) -= lk.q;
  return g;
}

Eigen::MatrixXd constraint_matrix(const TdsSystem& sys, int r,
                                  const Eigen::MatrixXd* gain) {
  sys.validate();
  if (r < 1) throw config_error("discretization step r must be >= 1");
  const int n = sys.dim();
  Eigen::MatrixXd ad_eff = sys.a_d;
  if (gain != nullptr) {
    if (gain->rows() != sys.inputs() || gain->cols() != n)
      throw config_error("gain must be m x n for the constraint matrix");
    ad_eff += sys.b * (*gain);
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, (r + 2) * n);
  s.block(0, 0, n, n) = -Eigen::MatrixXd::Identity(n, n);
  s.block(0, n, n, n) = sys.a;
  s.block(0, (r + 1) * n, n, n) = ad_eff;
  return s;
}

Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& s_mat) {
  const int n = static_cast<int>(s_mat.rows());
  const int total = static_cast<int>(s_mat.cols());
  if (n < 1 || total % n != 0 || total < 2 * n)
    throw config_error("constraint matrix has unexpected shape");
  const Eigen::MatrixXd lead =
      s_mat.leftCols(n) + Eigen::MatrixXd::Identity(n, n);
  if (lead.cwiseAbs().maxCoeff() != 0.0)
    throw config_error("constraint matrix lacks the canonical leading -I block");
  const int cols = total - n;
  Eigen::MatrixXd sp(total, cols);
  sp.topRows(n) = s_mat.rightCols(cols);
  sp.bottomRows(cols) = Eigen::MatrixXd::Identity(cols, cols);
  return sp;
}

double evaluate_margin(const LkParams& lk, const TdsSystem& sys,
                       const Eigen::MatrixXd* gain) {
  const int n = sys.dim();
  const Eigen::MatrixXd s = constraint_matrix(sys, lk.r, gain);
  const Eigen::MatrixXd sp = null_space_basis(s);
  const Eigen::MatrixXd gamma = build_gamma(lk, n);
  Eigen::MatrixXd w = sp.transpose() * gamma * sp;
  w = 0.5 * (w + w.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  return es.eigenvalues().maxCoeff();
}

// ---------------------------------------------------------------------------
// Feasibility search.
//
// The decision variables (P, Q, R) enter Gamma linearly, so
// lambda_max(S_perp^T Gamma S_perp) is convex in them; positive definiteness
// is enforced without constraints by the square-root parametrization
// P = Lp Lp^T + eps I (and likewise Q, R). Since feasibility is invariant
// under uniform scaling, the factors are renormalized each iteration and the
// objective is driven down by gradient steps with Armijo backtracking
// (falling back to small subgradient steps at nonsmooth points). Any claimed
// certificate is re-verified afterwards by an exact eigenvalue computation.
// ---------------------------------------------------------------------------

namespace {

struct Factors {
  Eigen::MatrixXd lp, lq, lr;
};

double factor_scale(const Factors& f) {
  const double np = (f.lp * f.lp.transpose()).norm();
  const double nq = (f.lq * f.lq.transpose()).norm();
  const double nr = (f.lr * f.lr.transpose()).norm();
  return std::max({np, nq, nr});
}

void normalize_factors(Factors& f, int n, int rn) {
  double s = factor_scale(f);
  if (!std::isfinite(s) || s <= 1e-300) {
    f.lp = Eigen::MatrixXd::Identity(n, n);
    f.lq = Eigen::MatrixXd::Identity(rn, rn);
    f.lr = Eigen::MatrixXd::Identity(n, n);
    s = factor_scale(f);
  }
  const double inv = 1.0 / std::sqrt(s);
  f.lp *= inv;
  f.lq *= inv;
  f.lr *= inv;
}

struct EvalPoint {
  LkParams lk;
  double fval = std::numeric_limits<double>::infinity();
  double gamma_norm = 0;
  Eigen::VectorXd top_vec;
};

EvalPoint assemble_eval(const Factors& f, const Eigen::MatrixXd& sperp,
                        double h_m, int r, int n) {
  EvalPoint e;
  e.lk.r = r;
  e.lk.h_m = h_m;
  e.lk.p = f.lp * f.lp.transpose() + kEpsPd * Eigen::MatrixXd::Identity(n, n);
  e.lk.q = f.lq * f.lq.transpose() +
           kEpsPd * Eigen::MatrixXd::Identity(r * n, r * n);
  e.lk.r_mat = f.lr * f.lr.transpose() + kEpsPd * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd gamma = build_gamma(e.lk, n);
  e.gamma_norm = gamma.norm();
  Eigen::MatrixXd w = sperp.transpose() * gamma * sperp;
  w = 0.5 * (w + w.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  e.fval = es.eigenvalues().maxCoeff();
  e.top_vec = es.eigenvectors().col(es.eigenvalues().size() - 1);
  return e;
}

Factors gradient_at(const EvalPoint& e, const Factors& f,
                    const Eigen::MatrixXd& sperp, double h_m, int r, int n) {
  const Eigen::VectorXd u = sperp * e.top_vec;
  const Eigen::VectorXd u0 = u.segment(0, n);
  const Eigen::VectorXd u1 = u.segment(n, n);
  const Eigen::VectorXd u2 = u.segment(2 * n, n);
  const Eigen::VectorXd du = u1 - u2;
  const Eigen::VectorXd ut = u.segment(n, r * n);      // newest r sub-states
  const Eigen::VectorXd uh = u.segment(2 * n, r * n);  // oldest r sub-states
  const double rr = static_cast<double>(r);

  const Eigen::MatrixXd gp = u0 * u1.transpose() + u1 * u0.transpose();
  const Eigen::MatrixXd gr =
      (h_m / rr) * (u0 * u0.transpose()) - (rr / h_m) * (du * du.transpose());
  const Eigen::MatrixXd gq = ut * ut.transpose() - uh * uh.transpose();

  Factors g;
  g.lp = 2.0 * gp * f.lp;
  g.lq = 2.0 * gq * f.lq;
  g.lr = 2.0 * gr * f.lr;
  return g;
}

EvalPoint descend(Factors f, const Eigen::MatrixXd& sperp, double h_m, int r,
                  int n, int iters) {
  normalize_factors(f, n, r * n);
  EvalPoint cur = assemble_eval(f, sperp, h_m, r, n);
  EvalPoint best = cur;
  double step = 0.25;
  for (int it = 0; it < iters; ++it) {
    const Factors g = gradient_at(cur, f, sperp, h_m, r, n);
    const double gnorm2 =
        g.lp.squaredNorm() + g.lq.squaredNorm() + g.lr.squaredNorm();
    const double gnorm = std::sqrt(gnorm2);
    if (gnorm < 1e-14) break;

    bool accepted = false;
    double t = step;
    for (int bt = 0; bt < 28 && !accepted; ++bt) {
      Factors cand{f.lp - t * g.lp, f.lq - t * g.lq, f.lr - t * g.lr};
      normalize_factors(cand, n, r * n);
      EvalPoint ce = assemble_eval(cand, sperp, h_m, r, n);
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
      // lambda_max is nonsmooth where eigenvalues cross; nudge along the
      // subgradient with a diminishing step and keep going.
      const double t2 = 0.02 / ((1.0 + it / 25.0) * std::max(gnorm, 1e-12));
      Factors cand{f.lp - t2 * g.lp, f.lq - t2 * g.lq, f.lr - t2 * g.lr};
      normalize_factors(cand, n, r * n);
      EvalPoint ce = assemble_eval(cand, sperp, h_m, r, n);
      if (!std::isfinite(ce.fval)) break;
      f = cand;
      cur = ce;
    }
    if (cur.fval < best.fval) best = cur;
    if (it > 40 && best.fval < -2e-3 * best.gamma_norm) break;
  }
  return best;
}

Factors factors_from_lk(const LkParams& lk) {
  Factors f;
  Eigen::LLT<Eigen::MatrixXd> lp(lk.p), lq(lk.q), lr(lk.r_mat);
  if (lp.info() == Eigen::Success && lq.info() == Eigen::Success &&
      lr.info() == Eigen::Success) {
    f.lp = lp.matrixL();
    f.lq = lq.matrixL();
    f.lr = lr.matrixL();
  } else {
    f.lp = lk.p.diagonal().cwiseMax(kEpsPd).cwiseSqrt().asDiagonal();
    f.lq = lk.q.diagonal().cwiseMax(kEpsPd).cwiseSqrt().asDiagonal();
    f.lr = lk.r_mat.diagonal().cwiseMax(kEpsPd).cwiseSqrt().asDiagonal();
  }
  return f;
}

// Solve M^T P + P M = -I for the zero-delay Lyapunov seed; identity fallback.
Eigen::MatrixXd lyapunov_matrix(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec(M^T P) = (I (x) M^T) vec(P); vec(P M) = (M^T (x) I) vec(P).
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        sys(j * n + i, j * n + k) += m(k, i);  // (M^T)_{ik} P_{kj}
        sys(j * n + i, k * n + i) += m(k, j);  // P_{ik} M_{kj}
      }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n * n);
  for (int i = 0; i < n; ++i) rhs(i * n + i) = -1.0;
  const Eigen::VectorXd sol = sys.colPivHouseholderQr().solve(rhs);
  Eigen::MatrixXd p(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) p(i, j) = sol(j * n + i);
  p = 0.5 * (p + p.transpose()).eval();
  if (!p.allFinite() || min_eigenvalue(p) <= 0)
    return Eigen::MatrixXd::Identity(n, n);
  return p / p.norm();
}

// Seeds follow the geometry of the zero-delay Lyapunov solution: the system
// states can span several orders of magnitude (packets vs probabilities), and
// isotropic Q, R seeds bury the small-scale directions. Q and R start as
// multiples of P (block-replicated for Q), which keeps the anisotropy
// consistent across the three matrices.
std::vector<Factors> structured_seeds(const TdsSystem& sys, int r, double h_m) {
  const int n = sys.dim();
  const Eigen::MatrixXd p = lyapunov_matrix(sys.a + sys.a_d);
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  const Eigen::MatrixXd lp =
      llt.info() == Eigen::Success
          ? Eigen::MatrixXd(llt.matrixL())
          : Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd lq_unit = Eigen::MatrixXd::Zero(r * n, r * n);
  for (int b = 0; b < r; ++b) lq_unit.block(b * n, b * n, n, n) = lp;

  const double hs = std::min(1.0, h_m);
  const double weights[][2] = {{0.25, 0.25},      {0.02, 0.02}, {1.0, 1.0},
                               {0.02, 1.0},       {1.0, 0.02},  {0.25, 0.25 * hs},
                               {0.02, 0.02 * hs}};
  std::vector<Factors> seeds;
  for (const auto& w : weights) {
    Factors f;
    f.lp = lp;
    f.lq = std::sqrt(w[0]) * lq_unit;
    f.lr = std::sqrt(w[1]) * lp;
    seeds.push_back(std::move(f));
  }
  return seeds;
}

Factors random_seed(Rng& rng, const std::vector<Factors>& base, int n, int r) {
  auto jitter = [&rng](const Eigen::MatrixXd& l, double scale) {
    Eigen::MatrixXd g(l.rows(), l.cols());
    for (long j = 0; j < g.cols(); ++j)
      for (long i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
    return Eigen::MatrixXd(
        l * (Eigen::MatrixXd::Identity(l.cols(), l.cols()) + scale * g));
  };
  const Factors& ref =
      base[rng.next_u64() % static_cast<std::uint64_t>(base.size())];
  Factors f;
  f.lp = jitter(ref.lp, 0.3);
  f.lq = std::exp(rng.normal()) * jitter(ref.lq, 0.3);
  f.lr = std::exp(rng.normal()) * jitter(ref.lr, 0.3);
  if (f.lp.rows() != n || f.lq.rows() != r * n) return ref;
  return f;
}

}  // namespace

double spectral_abscissa(const Eigen::MatrixXd& m) {
  return m.eigenvalues().real().maxCoeff();
}

StabilityCertificate analysis_feasible(const TdsSystem& sys, double h_m, int r,
                                       const SearchOptions& opts) {
  sys.validate();
  if (!(h_m > 0)) throw config_error("h_m must be positive");
  if (r < 1) throw config_error("r must be >= 1");
  const int n = sys.dim();

  StabilityCertificate cert;
  cert.h_m = h_m;
  cert.r = r;
  cert.dim = n;

  // Necessary condition: the zero-delay system A + Ad must be Hurwitz.
  if (spectral_abscissa(sys.a + sys.a_d) >= 0) {
    cert.verdict = Verdict::infeasible;
    cert.lk.r = r;
    cert.lk.h_m = h_m;
    cert.lk.p = Eigen::MatrixXd::Identity(n, n);
    cert.lk.q = Eigen::MatrixXd::Identity(r * n, r * n);
    cert.lk.r_mat = Eigen::MatrixXd::Identity(n, n);
    cert.margin = evaluate_margin(cert.lk, sys);
    return cert;
  }

  const Eigen::MatrixXd s = constraint_matrix(sys, r);
  const Eigen::MatrixXd sperp = null_space_basis(s);

  Rng rng(opts.seed);
  const std::vector<Factors> seeds = structured_seeds(sys, r, h_m);
  EvalPoint best;
  bool have = false;
  const int restarts = std::max(1, opts.restarts);
  for (int restart = 0; restart < restarts; ++restart) {
    Factors f0;
    int slot = restart;
    if (opts.warm_start != nullptr) {
      if (restart == 0)
        f0 = factors_from_lk(*opts.warm_start);
      --slot;
    }
    if (opts.warm_start == nullptr || restart > 0) {
      if (slot < static_cast<int>(seeds.size())) {
        f0 = seeds[static_cast<std::size_t>(slot)];
      } else {
        Rng child = rng.fork(static_cast<std::uint64_t>(restart));
        f0 = random_seed(child, seeds, n, r);
      }
    }
    EvalPoint e = descend(f0, sperp, h_m, r, n, opts.iters);
    if (!have || e.fval < best.fval) {
      best = e;
      have = true;
    }
    if (best.fval < -2e-3 * best.gamma_norm) break;
  }

  // Exact recheck on the stored matrices, independent of the optimizer's
  // bookkeeping.
  cert.lk = best.lk;
  cert.margin = evaluate_margin(cert.lk, sys);
  const double gamma_norm = build_gamma(cert.lk, n).norm();
  const double eps_margin = kEpsMarginRel * gamma_norm;
  const bool pd = min_eigenvalue(cert.lk.p) > 0 && min_eigenvalue(cert.lk.q) > 0 &&
                  min_eigenvalue(cert.lk.r_mat) > 0;
  cert.verdict = (cert.margin < -eps_margin && pd) ? Verdict::feasible
                                                   : Verdict::undecided;
  return cert;
}

MarginResult max_stable_delay(const TdsSystem& sys, int r, double tol, double cap,
                              const SearchOptions& opts) {
  sys.validate();
  if (!(tol > 0)) throw config_error("bisection tolerance must be > 0");
  MarginResult res;
  if (spectral_abscissa(sys.a + sys.a_d) >= 0) {
    res.h_max = 0;
    res.diagnostic = "system is unstable at zero delay; no delay margin exists";
    res.cert.verdict = Verdict::infeasible;
    return res;
  }

  LkParams warm;
  bool have_warm = false;
  StabilityCertificate best_cert;
  auto certify = [&](double h) {
    SearchOptions local = opts;
    local.warm_start = have_warm ? &warm : nullptr;
    StabilityCertificate c = analysis_feasible(sys, h, r, local);
    if (c.verdict == Verdict::feasible) {
      warm = c.lk;
      have_warm = true;
      best_cert = c;
    }
    return c.verdict == Verdict::feasible;
  };

  double lo = std::max(tol, 1e-3);
  int shrink = 0;
  while (!certify(lo)) {
    lo *= 0.125;
    if (++shrink > 4 || lo < 1e-9) {
      res.h_max = 0;
      res.diagnostic =
          "no certificate found even for vanishing delay; search budget or "
          "conditioning issue";
      res.cert.verdict = Verdict::undecided;
      return res;
    }
  }

  double hi = lo;
  while (hi < cap) {
    const double next = std::min(2.0 * hi, cap);
    if (certify(next)) {
      lo = next;
      hi = next;
    } else {
      hi = next;
      break;
    }
  }
  if (lo >= cap) {
    res.h_max = cap;
    res.cert = best_cert;
    res.diagnostic = "certified up to the search cap (delay-independent regime)";
    return res;
  }

  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (certify(mid))
      lo = mid;
    else
      hi = mid;
  }
  res.h_max = lo;
  res.cert = best_cert;
  return res;
}

// ---------------------------------------------------------------------------
// Characteristic-root oracle.
// ---------------------------------------------------------------------------

namespace {

// Chebyshev collocation differentiation matrix on [-1, 1] with nodes
// x_j = cos(j pi / N), negative-sum diagonal for stability.
Eigen::MatrixXd cheb_diff_matrix(int order, Eigen::VectorXd& nodes) {
  const int np = order + 1;
  nodes.resize(np);
  const double pi = 3.14159265358979323846;
  for (int j = 0; j < np; ++j) nodes(j) = std::cos(pi * j / order);
  Eigen::VectorXd c(np);
  for (int j = 0; j < np; ++j)
    c(j) = ((j == 0 || j == order) ? 2.0 : 1.0) * ((j % 2 == 0) ? 1.0 : -1.0);
  Eigen::MatrixXd d(np, np);
  for (int i = 0; i < np; ++i) {
    double rowsum = 0;
    for (int j = 0; j < np; ++j) {
      if (i == j) continue;
      d(i, j) = (c(i) / c(j)) / (nodes(i) - nodes(j));
      rowsum += d(i, j);
    }
    d(i, i) = -rowsum;
  }
  return d;
}

struct Candidate {
  std::complex<double> lambda;
  Eigen::VectorXcd v0;
};

// Eigenvalues of the collocation approximation of the DDE generator on
// [-h, 0]; node 0 carries the dynamics row, interior nodes the derivative of
// the interpolant. Returns the rightmost few candidates with their value at
// theta = 0 as eigenvector seeds.
std::vector<Candidate> discretization_candidates(const Eigen::MatrixXd& a,
                                                 const Eigen::MatrixXd& a_d,
                                                 double h, int order,
                                                 int take) {
  const int n = static_cast<int>(a.rows());
  Eigen::VectorXd x;
  const Eigen::MatrixXd d = cheb_diff_matrix(order, x);
  const Eigen::MatrixXd dtheta = (2.0 / h) * d;  // theta = h (x - 1) / 2
  const int np = order + 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(np * n, np * n);
  m.block(0, 0, n, n) = a;
  m.block(0, order * n, n, n) += a_d;
  for (int j = 1; j < np; ++j)
    for (int k = 0; k < np; ++k)
      m.block(j * n, k * n, n, n) =
          dtheta(j, k) * Eigen::MatrixXd::Identity(n, n);

  Eigen::EigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw numerical_error("eigen decomposition of the collocation matrix failed");

  std::vector<int> idx(np * n);
  for (int i = 0; i < np * n; ++i) idx[i] = i;
  const auto& vals = es.eigenvalues();
  std::sort(idx.begin(), idx.end(), [&](int i, int j) {
    return vals(i).real() > vals(j).real();
  });
  std::vector<Candidate> out;
  for (int i : idx) {
    if (vals(i).imag() < -1e-9) continue;  // keep one of each conjugate pair
    Candidate c;
    c.lambda = vals(i);
    c.v0 = es.eigenvectors().col(i).head(n);
    if (c.v0.norm() < 1e-12) continue;
    out.push_back(std::move(c));
    if (static_cast<int>(out.size()) >= take) break;
  }
  return out;
}

struct Refined {
  std::complex<double> s{0, 0};
  bool ok = false;
};

// Newton on the nonlinear eigenproblem (sI - A - Ad e^{-sh}) v = 0 with the
// normalization c^H v = 1, solving the bordered Jacobian each step.
Refined newton_refine(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                      double h, std::complex<double> s0,
                      const Eigen::VectorXcd& v0) {
  const int n = static_cast<int>(a.rows());
  Refined out;
  Eigen::VectorXcd v = v0 / v0.norm();
  const Eigen::RowVectorXcd c = v.adjoint();
  std::complex<double> s = s0;
  const double scale = a.norm() + a_d.norm() + std::abs(s0) + 1.0;

  for (int it = 0; it < 60; ++it) {
    const std::complex<double> e = std::exp(-s * h);
    Eigen::MatrixXcd t = s * Eigen::MatrixXcd::Identity(n, n) -
                         a.cast<std::complex<double>>() -
                         e * a_d.cast<std::complex<double>>();
    const Eigen::VectorXcd f = t * v;
    const Eigen::MatrixXcd tp = Eigen::MatrixXcd::Identity(n, n) +
                                (h * e) * a_d.cast<std::complex<double>>();
    Eigen::MatrixXcd jac(n + 1, n + 1);
    jac.topLeftCorner(n, n) = t;
    jac.topRightCorner(n, 1) = tp * v;
    jac.bottomLeftCorner(1, n) = c;
    jac(n, n) = 0;
    Eigen::VectorXcd rhs(n + 1);
    rhs.head(n) = -f;
    rhs(n) = -(c * v)(0, 0) + 1.0;
    const Eigen::VectorXcd delta = jac.colPivHouseholderQr().solve(rhs);
    if (!delta.allFinite()) return out;
    v += delta.head(n);
    s += delta(n);
    if (std::abs(delta(n)) < 1e-12 * (1.0 + std::abs(s))) {
      const std::complex<double> e2 = std::exp(-s * h);
      const Eigen::MatrixXcd t2 = s * Eigen::MatrixXcd::Identity(n, n) -
                                  a.cast<std::complex<double>>() -
                                  e2 * a_d.cast<std::complex<double>>();
      const double res = (t2 * v).norm() / std::max(1e-300, v.norm());
      out.ok = res < 1e-8 * scale;
      out.s = s;
      return out;
    }
  }
  return out;
}

std::complex<double> canonical_root(std::complex<double> z) {
  return {z.real(), std::abs(z.imag())};
}

Refined rightmost_at_order(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                           double h, int order) {
  const auto candidates = discretization_candidates(a, a_d, h, order, 12);
  Refined best;
  for (const auto& cand : candidates) {
    const Refined r = newton_refine(a, a_d, h, cand.lambda, cand.v0);
    if (r.ok && (!best.ok || r.s.real() > best.s.real())) best = r;
  }
  if (!best.ok && !candidates.empty()) {
    best.s = candidates.front().lambda;  // raw estimate, flagged unrefined
    best.ok = false;
  }
  return best;
}

}  // namespace

RootResult rightmost_root(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                          double h) {
  if (a.rows() != a.cols() || a_d.rows() != a_d.cols() || a.rows() != a_d.rows())
    throw config_error("rightmost_root expects square matrices of equal size");
  if (!(h > 0)) throw config_error("rightmost_root requires h > 0");

  RootResult result;
  if (a_d.norm() == 0.0) {
    const Eigen::VectorXcd vals = a.eigenvalues();
    int best = 0;
    for (int i = 1; i < vals.size(); ++i)
      if (vals(i).real() > vals(best).real()) best = i;
    result.root = canonical_root(vals(best));
    result.converged = true;
    return result;
  }

  Refined prev = rightmost_at_order(a, a_d, h, 24);
  int order = 24;
  while (order < 768) {
    const int next = order * 2;
    const Refined cur = rightmost_at_order(a, a_d, h, next);
    if (prev.ok && cur.ok &&
        std::abs(canonical_root(cur.s) - canonical_root(prev.s)) <= 1e-6) {
      result.root = canonical_root(cur.s);
      result.converged = true;
      result.n_cheb = next;
      return result;
    }
    prev = cur;
    order = next;
  }
  result.root = canonical_root(prev.s);
  result.converged = false;
  result.n_cheb = order;
  return result;
}

double oracle_delay_margin(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                           double tol, double cap) {
  if (spectral_abscissa(a + a_d) >= 0) return 0;
  if (a_d.norm() == 0.0) return spectral_abscissa(a) < 0 ? cap : 0;

  const auto stable_at = [&](double h) {
    return rightmost_root(a, a_d, h).root.real() < 0;
  };
  double lo = 0;
  double hi = std::min(1e-3, cap);
  while (stable_at(hi)) {
    lo = hi;
    if (hi >= cap) return cap;
    hi = std::min(hi * 4.0, cap);
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (stable_at(mid))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace tdaqm
