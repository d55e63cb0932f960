#pragma once

#include <Eigen/Dense>

#include "tdaqm/errors.hpp"

namespace tdaqm {

/// Feedback gain row vector K. Plain flavor is the static state feedback
/// p = p0 + k1*dW + k2*dq; integral flavor adds k3 on the accumulated queue
/// error (dynamic state feedback).
struct Gains {
  enum class Flavor { plain, integral };

  Flavor flavor = Flavor::plain;
  Eigen::MatrixXd k;  // 1 x 2 (plain) or 1 x 3 (integral)

  static Gains sf(double k1, double k2) {
    Gains g;
    g.flavor = Flavor::plain;
    g.k.resize(1, 2);
    g.k << k1, k2;
    return g;
  }

  static Gains sfi(double k1, double k2, double k3) {
    Gains g;
    g.flavor = Flavor::integral;
    g.k.resize(1, 3);
    g.k << k1, k2, k3;
    return g;
  }

  double k1() const { return k(0, 0); }
  double k2() const { return k(0, 1); }
  double k3() const { return flavor == Flavor::integral ? k(0, 2) : 0.0; }
  int dim() const { return static_cast<int>(k.cols()); }

  void validate() const {
    const int want = flavor == Flavor::plain ? 2 : 3;
    if (k.rows() != 1 || k.cols() != want)
      throw config_error("gain vector has wrong shape for its flavor");
    if (!k.allFinite()) throw config_error("gain vector has non-finite entries");
  }
};

}  // namespace tdaqm
