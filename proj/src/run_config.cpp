#include "mdcvae/run_config.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mdcvae/errors.hpp"

namespace mdcvae {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

double to_double(const std::string& key, const std::string& v) {
    double out;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw config_error("bad float for " + key + ": " + v);
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw config_error("bad integer for " + key + ": " + v);
    return out;
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
    std::int64_t out;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw config_error("bad integer for " + key + ": " + v);
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("bad bool for " + key + ": " + v);
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::string tok;
    std::stringstream ss(s);
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(static_cast<std::size_t>(to_u64("list entry", tok)));
    }
    return out;
}

std::string join_size_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

bool apply_train_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "mode") cfg.mode = parse_tie_mode(value);
    else if (key == "k_u") cfg.k_u = to_u64(key, value);
    else if (key == "k_v") cfg.k_v = to_u64(key, value);
    else if (key == "uae_hidden_dims") cfg.uae_hidden_dims = parse_size_list(value);
    else if (key == "item_vae_hidden_dims") cfg.item_vae_hidden_dims = parse_size_list(value);
    else if (key == "lambda_v") cfg.lambda_v = to_double(key, value);
    else if (key == "lambda_w") cfg.lambda_w = to_double(key, value);
    else if (key == "lambda_x") cfg.lambda_x = to_double(key, value);
    else if (key == "content_likelihood") cfg.content_likelihood = parse_content_likelihood(value);
    else if (key == "beta_max") cfg.beta_max = to_double(key, value);
    else if (key == "beta_anneal_steps") cfg.beta_anneal_steps = to_i64(key, value);
    else if (key == "epochs") cfg.epochs = to_u64(key, value);
    else if (key == "batch_users") cfg.batch_users = to_u64(key, value);
    else if (key == "batch_items") cfg.batch_items = to_u64(key, value);
    else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
    else if (key == "dropout") cfg.dropout = to_double(key, value);
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "pretrain_epochs") cfg.pretrain_epochs = to_u64(key, value);
    else if (key == "normalize_input") cfg.normalize_input = to_bool(key, value);
    else if (key == "content_enabled") cfg.content_enabled = to_bool(key, value);
    else return false;
    return true;
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::string out;
    out += "mode=" + to_string(cfg.mode) + "\n";
    out += "k_u=" + std::to_string(cfg.k_u) + "\n";
    out += "k_v=" + std::to_string(cfg.k_v) + "\n";
    out += "uae_hidden_dims=" + join_size_list(cfg.uae_hidden_dims) + "\n";
    out += "item_vae_hidden_dims=" + join_size_list(cfg.item_vae_hidden_dims) + "\n";
    out += "lambda_v=" + fmt_double(cfg.lambda_v) + "\n";
    out += "lambda_w=" + fmt_double(cfg.lambda_w) + "\n";
    out += "lambda_x=" + fmt_double(cfg.lambda_x) + "\n";
    out += "content_likelihood=" + to_string(cfg.content_likelihood) + "\n";
    out += "beta_max=" + fmt_double(cfg.beta_max) + "\n";
    out += "beta_anneal_steps=" + std::to_string(cfg.beta_anneal_steps) + "\n";
    out += "epochs=" + std::to_string(cfg.epochs) + "\n";
    out += "batch_users=" + std::to_string(cfg.batch_users) + "\n";
    out += "batch_items=" + std::to_string(cfg.batch_items) + "\n";
    out += "learning_rate=" + fmt_double(cfg.learning_rate) + "\n";
    out += "dropout=" + fmt_double(cfg.dropout) + "\n";
    out += "seed=" + std::to_string(cfg.seed) + "\n";
    out += "pretrain_epochs=" + std::to_string(cfg.pretrain_epochs) + "\n";
    out += "normalize_input=" + std::string(cfg.normalize_input ? "true" : "false") + "\n";
    out += "content_enabled=" + std::string(cfg.content_enabled ? "true" : "false") + "\n";
    return out;
}

bool apply_run_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (apply_train_kv(cfg.train, key, value)) return true;
    if (key == "interactions") cfg.interactions_path = value;
    else if (key == "features") cfg.features_path = value;
    else if (key == "split") cfg.split_path = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "m_list") cfg.m_list = parse_size_list(value);
    else if (key == "n_cold") cfg.n_cold = to_u64(key, value);
    else return false;
    return true;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open config file: " + path);

    static const char* kAllKeys[] = {
        "mode",          "k_u",          "k_v",        "uae_hidden_dims",
        "item_vae_hidden_dims",          "lambda_v",   "lambda_w",
        "lambda_x",      "content_likelihood",         "beta_max",
        "beta_anneal_steps",             "epochs",     "batch_users",
        "batch_items",   "learning_rate", "dropout",   "seed",
        "pretrain_epochs", "normalize_input", "content_enabled",
        "interactions",  "features",     "split",      "out_dir",
        "m_list",        "n_cold",
    };

    RunConfig cfg;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (!apply_run_kv(cfg, key, value))
            throw config_error(path + ":" + std::to_string(line_no) + ": unknown key: " + key);
        seen.insert(key);
    }

    std::string defaulted;
    for (const char* key : kAllKeys)
        if (!seen.count(key)) defaulted += defaulted.empty() ? key : std::string(", ") + key;
    if (!defaulted.empty())
        std::cerr << "[config] " << path << ": using defaults for: " << defaulted << "\n";
    return cfg;
}

}  // namespace mdcvae
