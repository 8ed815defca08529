#pragma once

#include <string>

#include "ncens/calibration.hpp"
#include "ncens/ensemble.hpp"
#include "ncens/nn.hpp"

namespace ncens {

// JSON schemas are versioned; current version is 1 throughout.

std::string params_to_json(const NetworkParams& params);
NetworkParams params_from_json(const std::string& text);

std::string ensemble_to_json(const Ensemble& ensemble);
Ensemble ensemble_from_json(const std::string& text);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

std::string read_file(const std::string& path);

// Write-temp-then-rename so partial output never lands at the target path.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace ncens
