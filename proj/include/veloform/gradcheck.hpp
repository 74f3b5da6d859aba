#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace veloform {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_pass() const;
};

struct GradCheckOptions {
    int probes = 100;
    std::uint64_t seed = 2024;
    // Fault injection for tests: the named term's analytic gradient is scaled
    // by (1 + corrupt_scale) before comparison.
    std::string corrupt_term;
    double corrupt_scale = 0.0;
};

// Finite-difference verification of every differential operator (first
// derivatives at 1e-4 relative, the Laplacian cross-mode at 1e-3) and of
// every loss term's parameter gradient (directional probes at 1e-3 relative)
// on a small probe network.
GradCheckReport run_gradient_checks(const GradCheckOptions& opts = {});

}  // namespace veloform
