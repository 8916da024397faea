#pragma once

#include <stdexcept>
#include <string>

namespace mdcvae {

// Bad hyperparameters, malformed run configs, invalid op arguments.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable, malformed, or inconsistent input data and model files.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, failed gradient checks and the like.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mdcvae
