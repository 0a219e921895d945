#pragma once

#include <string>
#include <vector>

#include "wafl/loss.hpp"

namespace wafl {

struct GradcheckRow {
    std::string name;
    std::size_t points = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Central finite-difference checks of every analytic gradient: the three loss
/// kinds over a probability grid, two realignment layers, and a full model bundle.
std::vector<GradcheckRow> run_gradcheck(const ACAConfig& aca = {});

/// |a - n| / max(|a|, |n|), zero when both vanish.
double relative_error(double analytic, double numeric) noexcept;

}  // namespace wafl
