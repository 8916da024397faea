#pragma once

#include <string>
#include <vector>

#include "mdcvae/nn.hpp"

namespace mdcvae {

struct SuiteResult {
    std::string name;
    GradCheckReport report;
};

// Finite-difference validation of the analytic gradients on toy shapes:
// the item VAE t-step, and the user VAE b-step in both tie modes, with
// frozen reparameterization noise and dropout off.
std::vector<SuiteResult> run_gradient_suites(std::uint64_t seed);

}  // namespace mdcvae
