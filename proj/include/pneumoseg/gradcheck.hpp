#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pneumoseg {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Central-difference verification (double precision, h = 1e-5) of every
// backward rule: one entry per op plus a sampled end-to-end check through a
// thin full network. Writes one line per check to `log` when given.
std::vector<GradCheckResult> run_gradcheck(std::ostream* log = nullptr);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace pneumoseg
