#pragma once

#include <string>

#include "ncens/calibration.hpp"

namespace ncens {

// Standalone SVG with two panels: per-bin prediction counts, and per-bin
// accuracy vs confidence bars. No external assets.
std::string render_report_svg(const EvaluationReport& report);

}  // namespace ncens
