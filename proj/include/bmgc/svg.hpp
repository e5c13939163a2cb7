#pragma once

#include <string>
#include <vector>

#include "bmgc/eval.hpp"
#include "bmgc/train.hpp"

namespace bmgc {

// Two-panel accuracy/loss curves over epochs (train + validation).
std::string curves_svg(const std::vector<EpochRecord>& history);

// Confusion-matrix heatmap with genre-labeled axes.
std::string heatmap_svg(const EvalReport& report);

}  // namespace bmgc
