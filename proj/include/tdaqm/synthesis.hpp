#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>

#include "tdaqm/delay_lmi.hpp"
#include "tdaqm/gains.hpp"
#include "tdaqm/model.hpp"

namespace tdaqm {

struct SynthesisOptions {
  int restarts = 8;
  int rounds = 200;          // alternation rounds per restart
  std::uint64_t seed = 1;
  double gain_reg = 1e-6;    // light penalty on ||K|| in the K phase
  int analysis_restarts = 3; // inner feasibility budget per restart
  int analysis_iters = 400;
};

/// Result of the slack-variable synthesis: gain K, functional parameters,
/// slack X and the achieved margin lambda_max(Gamma + XS + S^T X^T).
struct SynthesisCertificate {
  Eigen::MatrixXd k;      // m x n
  LkParams lk;
  Eigen::MatrixXd slack;  // (r+2)n x n
  double margin = 0;
  Verdict verdict = Verdict::undecided;
  double h_m = 0;
  int r = 1;
  int dim = 0;
  int inputs = 1;
  std::complex<double> oracle_root{0, 0};  // rightmost closed-loop root at h_m

  /// Maps K onto the AQM gain type (1x2 plain, 1x3 integral).
  Gains gains() const;
};

/// State-feedback design through the bilinear condition
/// Gamma + XS + S^T X^T < 0 with S = [-I, A, 0, Ad + BK]: alternation between
/// the convex (P,Q,R,X) half and the convex K half, seeded by zero-delay
/// LQR gains and a Finsler lift of an analysis certificate. Every feasible
/// verdict is validated by an exact eigenvalue recheck and by the rightmost
/// characteristic root of the closed loop at h_m and h_m/2.
SynthesisCertificate synthesize_gain(const TdsSystem& sys, double h_m, int r,
                                     const SynthesisOptions& opts = {});

struct ClosedLoopCheck {
  StabilityCertificate certificate;
  RootResult oracle;  // rightmost root at h = h_m
};

/// Folds K into the delayed matrix and runs the delay-dependent analysis,
/// reporting the characteristic-root oracle alongside.
ClosedLoopCheck verify_closed_loop(const TdsSystem& sys, const Gains& gains,
                                   double h_m, int r,
                                   const SearchOptions& opts = {});
ClosedLoopCheck verify_closed_loop(const TdsSystem& sys, const Eigen::MatrixXd& k,
                                   double h_m, int r,
                                   const SearchOptions& opts = {});

/// Re-assembles Gamma + XS + S^T X^T from a stored certificate and returns
/// its lambda_max; must reproduce cert.margin.
double synthesis_margin(const SynthesisCertificate& cert, const TdsSystem& sys);

/// Continuous-time LQR gain for (A, B) with state cost I and control cost
/// control_weight * I, via the Hamiltonian eigenvector method. Used to seed
/// the synthesis with a zero-delay stabilizing gain.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         double control_weight);

}  // namespace tdaqm
