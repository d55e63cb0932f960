#pragma once

#include <complex>
#include <functional>

#include "tdaqm/model.hpp"

namespace tdaqm_test {

// Reference network configuration used across the suite (bottleneck of
// 15 Mb/s with 500-byte packets, 60 sessions, 175-packet target).
inline tdaqm::NetworkParams reference_network() {
  tdaqm::NetworkParams net;
  net.n_flows = 60;
  net.capacity = 3750;
  net.prop_delay = 0.2;
  net.q_target = 175;
  net.buffer_size = 800;
  return net;
}

// Published gain sets for this configuration.
inline tdaqm::Gains reference_sf_gains() {
  return tdaqm::Gains::sf(-0.2372e-3, 0.0429e-3);
}
inline tdaqm::Gains reference_sfi_gains() {
  return tdaqm::Gains::sfi(0.9385e-4, 0.5717e-4, 0.3559e-4);
}

// Test-local complex Newton iteration, independent of the library's root
// machinery. Derivative by central differences.
inline std::complex<double> newton_root(
    const std::function<std::complex<double>(std::complex<double>)>& f,
    std::complex<double> s0, int iters = 80) {
  std::complex<double> s = s0;
  const double step = 1e-7;
  for (int i = 0; i < iters; ++i) {
    const std::complex<double> fs = f(s);
    const std::complex<double> df =
        (f(s + step) - f(s - step)) / std::complex<double>(2 * step, 0);
    const std::complex<double> delta = fs / df;
    s -= delta;
    if (std::abs(delta) < 1e-14 * (1.0 + std::abs(s))) break;
  }
  return s;
}

}  // namespace tdaqm_test
