#pragma once

#include <string>
#include <vector>

#include "mdcvae/trainer.hpp"

namespace mdcvae {

// Flat key=value run configuration: training hyperparameters plus data paths.
struct RunConfig {
    TrainConfig train;
    std::string interactions_path;
    std::string features_path;
    std::string split_path;
    std::string out_dir = "out";
    std::vector<std::size_t> m_list = {20, 40, 100};
    std::size_t n_cold = 0;
};

// Parses "key = value" lines ('#' comments allowed). Unknown keys are
// rejected; keys left at defaults are reported in one stderr notice.
RunConfig load_run_config(const std::string& path);

// Applies one key/value; returns false when the key is unknown.
bool apply_run_kv(RunConfig& cfg, const std::string& key, const std::string& value);
bool apply_train_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

std::vector<std::size_t> parse_size_list(const std::string& s);
std::string join_size_list(const std::vector<std::size_t>& v);

}  // namespace mdcvae
