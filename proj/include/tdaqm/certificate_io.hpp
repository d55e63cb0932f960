#pragma once

#include <optional>
#include <string>

#include "tdaqm/delay_lmi.hpp"
#include "tdaqm/synthesis.hpp"

namespace tdaqm {

/// Exact (17 significant digits) decimal rendering; round-trips any double.
std::string format_exact(double v);

std::string certificate_to_text(const StabilityCertificate& cert);
std::string certificate_to_text(const SynthesisCertificate& cert);

struct ParsedCertificate {
  std::string type;  // "analysis" | "synthesis"
  std::optional<StabilityCertificate> analysis;
  std::optional<SynthesisCertificate> synthesis;
};

ParsedCertificate parse_certificate_text(const std::string& text);

}  // namespace tdaqm
