#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcir/trainer.hpp"

namespace rcir {

struct GradCheckReport {
    std::string label;
    int checked = 0;
    double max_rel_err = 0.0;  // |analytic - fd| / max(|analytic|, |fd|)
    bool pass = false;
};

struct GradCheckSettings {
    std::vector<int> batch_sizes{2, 3, 4};
    int query_count = 3;
    int embed_dim = 4;
    int hidden_dim = 4;
    int image_size = 16;
    double fd_epsilon = 1e-4;
    double rel_tol = 1e-3;
    double abs_floor = 1e-7;
    std::uint64_t seed = 7;
};

// Central finite-difference validation of every parameter gradient of every
// loss term (robust, soft discriminative, causal consistency, and the
// weighted total) through the full composer. A parameter passes when the
// difference to the central finite difference is under abs_floor or the
// relative error is under rel_tol.
std::vector<GradCheckReport> run_gradient_suite(const GradCheckSettings& settings = {});

bool gradient_suite_passed(const std::vector<GradCheckReport>& reports);

}  // namespace rcir
