#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>

#include "tdaqm/model.hpp"

namespace tdaqm {

/// Parameters of the discretized Lyapunov-Krasovskii functional: P, R are
/// n x n, Q is rn x rn (all symmetric positive definite), h_m the delay bound
/// and r the number of sub-intervals the delay is split into.
struct LkParams {
  Eigen::MatrixXd p;      // n x n
  Eigen::MatrixXd q;      // rn x rn
  Eigen::MatrixXd r_mat;  // n x n
  double h_m = 0;
  int r = 1;

  void validate(int n) const;
};

enum class Verdict { feasible, infeasible, undecided };
const char* to_string(Verdict v);

/// Delay-dependent stability certificate: the functional parameters plus the
/// achieved margin lambda_max of the projected quadratic form (< 0 when
/// feasible).
struct StabilityCertificate {
  LkParams lk;
  double margin = 0;
  Verdict verdict = Verdict::undecided;
  double h_m = 0;
  int r = 1;
  int dim = 0;
};

/// Quadratic form Gamma acting on the extended vector
/// xi = (xdot, x(t), x(t-h/r), ..., x(t-h)), size (r+2)n. Assembled as the
/// three-term sum from the functional's derivative: the P/R coupling block,
/// plus Q on the newest r sub-states, minus Q on the oldest r sub-states.
Eigen::MatrixXd build_gamma(const LkParams& lk, int n);

/// Constraint S with S xi = 0 encoding the dynamics:
/// S = [-I, A, 0, Ad] or, with a gain, [-I, A, 0, Ad + B K].
Eigen::MatrixXd constraint_matrix(const TdsSystem& sys, int r,
                                  const Eigen::MatrixXd* gain = nullptr);

/// Closed-form right null-space basis of S, exploiting the leading -I block:
/// S_perp = [M; I] with M the trailing blocks of S. Satisfies S*S_perp = 0
/// exactly and has full column rank.
Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& s_mat);

/// Exact lambda_max of S_perp^T Gamma S_perp for given functional parameters;
/// the quantity the feasibility search minimizes and the certificate pins.
double evaluate_margin(const LkParams& lk, const TdsSystem& sys,
                       const Eigen::MatrixXd* gain = nullptr);

struct SearchOptions {
  int restarts = 8;
  int iters = 400;
  std::uint64_t seed = 1;
  const LkParams* warm_start = nullptr;
};

/// Searches for functional parameters certifying stability for all delays
/// h <= h_m. Feasible verdicts are re-verified by a direct eigenvalue
/// computation on the assembled matrices. "undecided" means the budget ran
/// out, never instability; "infeasible" is returned only when the necessary
/// condition (A + Ad Hurwitz) fails.
StabilityCertificate analysis_feasible(const TdsSystem& sys, double h_m, int r,
                                       const SearchOptions& opts = {});

struct MarginResult {
  double h_max = 0;
  StabilityCertificate cert;
  std::string diagnostic;
};

/// Largest certified delay bound, bisected to tolerance tol over the
/// feasibility predicate. The returned h_max is always backed by a verified
/// certificate; growth stops at `cap` for delay-independent cases.
MarginResult max_stable_delay(const TdsSystem& sys, int r, double tol = 1e-4,
                              double cap = 100.0, const SearchOptions& opts = {});

struct RootResult {
  std::complex<double> root{0, 0};
  bool converged = false;
  int n_cheb = 0;
};

/// Rightmost characteristic root of det(sI - A - Ad e^{-sh}) = 0, via
/// spectral (Chebyshev collocation) discretization of the solution-operator
/// generator followed by Newton refinement on the characteristic function.
/// `converged` is false when doubling the collocation order still moves the
/// candidate by more than 1e-6.
RootResult rightmost_root(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                          double h);

/// max Re(eig(M)) for a plain matrix.
double spectral_abscissa(const Eigen::MatrixXd& m);

/// True delay margin measured with the characteristic-root oracle: the h at
/// which the rightmost root crosses the imaginary axis (bisection to tol).
/// Returns `cap` when no crossing is found below it, 0 when already unstable
/// at vanishing delay.
double oracle_delay_margin(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                           double tol = 1e-4, double cap = 100.0);

}  // namespace tdaqm
