// mdcvae: hybrid VAE recommender workflows behind one binary.
// Subcommands: prepare, synth, train, eval, sweep, coldstart, add-items,
// recommend, gradcheck. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "mdcvae/data.hpp"
#include "mdcvae/errors.hpp"
#include "mdcvae/eval.hpp"
#include "mdcvae/gradcheck.hpp"
#include "mdcvae/kernels.hpp"
#include "mdcvae/predictor.hpp"
#include "mdcvae/run_config.hpp"
#include "mdcvae/trainer.hpp"

namespace fs = std::filesystem;
using namespace mdcvae;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

// All file outputs go through write-temp-then-rename.
void write_atomic(const std::string& path, const std::function<void(const std::string&)>& writer) {
    const std::string tmp = path + ".tmp";
    writer(tmp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw data_error("cannot move output into place: " + path);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    write_atomic(path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw data_error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw data_error("write failed: " + tmp);
    });
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        double v;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size())
            throw config_error("bad float list entry: " + tok);
        out.push_back(v);
    }
    return out;
}

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<double> lambda_v;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_users;
    std::optional<std::string> out_dir;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file (key = value lines)");
        cmd->add_option("--seed", seed, "master seed; every random stage derives from it");
        cmd->add_option("--mode", mode, "tie mode: normal|symmetric");
        cmd->add_option("--lambda-v", lambda_v, "mutual regularization strength");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-users", batch_users, "users per training batch");
        cmd->add_option("--out", out_dir, "output directory");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);
        if (seed) cfg.train.seed = *seed;
        if (mode) cfg.train.mode = parse_tie_mode(*mode);
        if (lambda_v) cfg.train.lambda_v = *lambda_v;
        if (epochs) cfg.train.epochs = *epochs;
        if (batch_users) cfg.train.batch_users = *batch_users;
        if (out_dir) cfg.out_dir = *out_dir;
        return cfg;
    }
};

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw data_error("cannot create output directory: " + dir);
}

UserSplit resolve_split(const RunConfig& cfg, const InteractionSet& inter) {
    if (!cfg.split_path.empty()) return load_split(cfg.split_path, inter.num_users);
    return split_users(inter, SplitRatios{}, cfg.train.seed);
}

std::string metrics_jsonl(const std::vector<MetricReport>& reports, std::size_t split_index) {
    std::string out;
    for (const auto& r : reports) out += metric_jsonl_line(split_index, r) + "\n";
    return out;
}

int cmd_prepare(const CommonFlags& common, const std::string& interactions,
                const std::string& features, const std::string& ratios) {
    RunConfig cfg = common.resolve();
    if (!interactions.empty()) cfg.interactions_path = interactions;
    if (!features.empty()) cfg.features_path = features;
    if (cfg.interactions_path.empty()) throw config_error("prepare: --interactions is required");

    const InteractionSet inter = load_interactions(cfg.interactions_path);
    if (inter.num_duplicates)
        std::cerr << "[prepare] collapsed " << inter.num_duplicates << " duplicate pairs\n";
    if (!cfg.features_path.empty()) load_features(cfg.features_path, inter.num_items);

    auto parts = parse_size_list(ratios);
    if (parts.size() != 3) throw config_error("prepare: --ratios needs three integers");
    SplitRatios r{static_cast<unsigned>(parts[0]), static_cast<unsigned>(parts[1]),
                  static_cast<unsigned>(parts[2])};
    const UserSplit split = split_users(inter, r, cfg.train.seed);

    ensure_out_dir(cfg.out_dir);
    write_atomic(cfg.out_dir + "/interactions.tsv",
                 [&](const std::string& p) { write_interactions(p, inter); });
    write_atomic(cfg.out_dir + "/user_id_map.tsv",
                 [&](const std::string& p) { write_id_map(p, inter.user_external_ids); });
    write_atomic(cfg.out_dir + "/item_id_map.tsv",
                 [&](const std::string& p) { write_id_map(p, inter.item_external_ids); });
    write_atomic(cfg.out_dir + "/split.tsv", [&](const std::string& p) { write_split(p, split); });

    const LongTailStats stats = density_stats(build_rating_matrix(inter));
    std::string csv = "percentile,interactions\n";
    for (auto [q, c] : stats.percentiles)
        csv += fmt_double(q) + "," + std::to_string(c) + "\n";
    write_text_atomic(cfg.out_dir + "/long_tail.csv", csv);

    std::cout << "users " << inter.num_users << ", items " << inter.num_items << ", pairs "
              << inter.pairs.size() << ", density " << fmt_double(inter.density()) << "\n"
              << "split sizes " << split.train_users.size() << "/" << split.val_users.size()
              << "/" << split.test_users.size() << "\n";
    return 0;
}

int cmd_synth(const CommonFlags& common, const SyntheticConfig& synth_in,
              double subsample_density) {
    RunConfig cfg = common.resolve();
    SyntheticConfig scfg = synth_in;
    scfg.seed = cfg.train.seed;
    SyntheticData data = gen_synthetic(scfg);
    if (subsample_density > 0)
        data.interactions =
            subsample_interactions(data.interactions, subsample_density, scfg.seed);

    ensure_out_dir(cfg.out_dir);
    write_atomic(cfg.out_dir + "/interactions.tsv",
                 [&](const std::string& p) { write_interactions(p, data.interactions); });
    write_atomic(cfg.out_dir + "/features.txt",
                 [&](const std::string& p) { write_features(p, data.features); });
    std::string users_csv, items_csv;
    for (std::size_t u = 0; u < data.user_clusters.size(); ++u)
        users_csv += std::to_string(u) + "\t" + std::to_string(data.user_clusters[u]) + "\n";
    for (std::size_t j = 0; j < data.item_clusters.size(); ++j)
        items_csv += std::to_string(j) + "\t" + std::to_string(data.item_clusters[j]) + "\n";
    write_text_atomic(cfg.out_dir + "/user_clusters.tsv", users_csv);
    write_text_atomic(cfg.out_dir + "/item_clusters.tsv", items_csv);

    std::cout << "synthetic: users " << data.interactions.num_users << ", items "
              << data.interactions.num_items << ", pairs " << data.interactions.pairs.size()
              << ", density " << fmt_double(data.interactions.density()) << "\n";
    return 0;
}

int run_training(const RunConfig& cfg, const RatingMatrix& matrix, const FeatureMatrix& features,
                 const UserSplit& split, std::optional<TrainResult>& out) {
    out.emplace(train(cfg.train, matrix, features, split));
    TrainResult& result = *out;
    ensure_out_dir(cfg.out_dir);
    write_atomic(cfg.out_dir + "/model.ckpt",
                 [&](const std::string& p) { save_checkpoint(result.model, p); });
    write_atomic(cfg.out_dir + "/history.csv",
                 [&](const std::string& p) { write_history_csv(p, result.history); });
    if (result.history.diverged) {
        std::cerr << "[train] non-finite loss; wrote the last good checkpoint\n";
        return 3;
    }
    if (!result.history.epochs.empty()) {
        const auto& best = result.history.epochs[result.history.best_epoch - 1];
        std::cout << "best epoch " << result.history.best_epoch << ": recall@20 "
                  << fmt_double(best.val_recall20) << ", recall@40 "
                  << fmt_double(best.val_recall40) << ", ndcg@100 "
                  << fmt_double(best.val_ndcg100) << "\n";
    }
    return 0;
}

int cmd_train(const CommonFlags& common, const std::string& interactions,
              const std::string& features, const std::string& split_path) {
    RunConfig cfg = common.resolve();
    if (!interactions.empty()) cfg.interactions_path = interactions;
    if (!features.empty()) cfg.features_path = features;
    if (!split_path.empty()) cfg.split_path = split_path;
    if (cfg.interactions_path.empty()) throw config_error("train: --interactions is required");

    const InteractionSet inter = load_interactions(cfg.interactions_path);
    FeatureMatrix fm;
    if (!cfg.features_path.empty()) fm = load_features(cfg.features_path, inter.num_items);
    const UserSplit split = resolve_split(cfg, inter);

    ensure_out_dir(cfg.out_dir);
    if (cfg.split_path.empty())
        write_atomic(cfg.out_dir + "/split.tsv",
                     [&](const std::string& p) { write_split(p, split); });

    std::optional<TrainResult> result;
    return run_training(cfg, build_rating_matrix(inter), fm, split, result);
}

int cmd_eval(const CommonFlags& common, const std::vector<std::string>& checkpoints,
             const std::string& interactions, const std::vector<std::string>& split_paths,
             const std::string& m_list) {
    RunConfig cfg = common.resolve();
    if (!interactions.empty()) cfg.interactions_path = interactions;
    if (!m_list.empty()) cfg.m_list = parse_size_list(m_list);
    if (checkpoints.empty()) throw config_error("eval: --checkpoint is required");
    if (cfg.interactions_path.empty()) throw config_error("eval: --interactions is required");
    if (!split_paths.empty() && split_paths.size() != checkpoints.size())
        throw config_error("eval: need one --split per --checkpoint");

    const InteractionSet inter = load_interactions(cfg.interactions_path);
    const RatingMatrix matrix = build_rating_matrix(inter);

    EvalOptions opts;
    opts.recall_ms = cfg.m_list;
    opts.ndcg_ms = cfg.m_list;

    std::vector<std::vector<MetricReport>> all_reports;
    std::string jsonl;
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        const Model model = load_checkpoint(checkpoints[k]);
        UserSplit split;
        if (!split_paths.empty())
            split = load_split(split_paths[k], inter.num_users);
        else if (!cfg.split_path.empty())
            split = load_split(cfg.split_path, inter.num_users);
        else
            split = split_users(inter, SplitRatios{}, model.config.seed);
        opts.seed = derive_seed(model.config.seed, SeedStream::holdout);
        auto reports = evaluate_in_matrix(model, matrix, split.test_users, opts);
        jsonl += metrics_jsonl(reports, k);
        all_reports.push_back(std::move(reports));
    }
    if (all_reports.size() > 1) {
        for (std::size_t r = 0; r < all_reports.front().size(); ++r) {
            std::vector<MetricReport> column;
            for (const auto& rep : all_reports) column.push_back(rep[r]);
            jsonl += metric_jsonl_line(aggregate(column)) + "\n";
        }
    }

    ensure_out_dir(cfg.out_dir);
    write_text_atomic(cfg.out_dir + "/metrics.jsonl", jsonl);
    std::cout << jsonl;
    return 0;
}

int cmd_sweep(const CommonFlags& common, const std::string& interactions,
              const std::string& features, const std::string& split_path,
              const std::string& lambda_grid_str, const std::string& hidden_grid_str,
              std::size_t n_cold) {
    RunConfig cfg = common.resolve();
    if (!interactions.empty()) cfg.interactions_path = interactions;
    if (!features.empty()) cfg.features_path = features;
    if (!split_path.empty()) cfg.split_path = split_path;
    if (cfg.interactions_path.empty()) throw config_error("sweep: --interactions is required");
    if (cfg.features_path.empty()) throw config_error("sweep: --features is required");

    const auto lambda_grid = parse_double_list(lambda_grid_str);
    const auto hidden_grid = parse_size_list(hidden_grid_str);
    const InteractionSet inter = load_interactions(cfg.interactions_path);
    const FeatureMatrix fm = load_features(cfg.features_path, inter.num_items);
    const UserSplit split = resolve_split(cfg, inter);

    const auto rows = sweep(cfg.train, hidden_grid, lambda_grid, inter, fm, split, n_cold);

    std::string csv = "hidden,lambda_v,val_recall20,val_recall40,val_ndcg100,val_score";
    if (n_cold > 0) csv += ",ni_recall20,ci_recall20,ni_ndcg100,ci_ndcg100";
    csv += "\n";
    for (const auto& row : rows) {
        csv += std::to_string(row.config.k_v) + "," + fmt_double(row.config.lambda_v) + "," +
               fmt_double(row.val_recall20) + "," + fmt_double(row.val_recall40) + "," +
               fmt_double(row.val_ndcg100) + "," + fmt_double(row.val_score);
        if (n_cold > 0)
            csv += "," + fmt_double(row.ni_recall20) + "," + fmt_double(row.ci_recall20) + "," +
                   fmt_double(row.ni_ndcg100) + "," + fmt_double(row.ci_ndcg100);
        csv += "\n";
    }
    ensure_out_dir(cfg.out_dir);
    write_text_atomic(cfg.out_dir + "/sweep.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_coldstart(const CommonFlags& common, const std::string& interactions,
                  const std::string& features, const std::string& split_path, std::size_t n_cold,
                  const std::string& m_list) {
    RunConfig cfg = common.resolve();
    if (!interactions.empty()) cfg.interactions_path = interactions;
    if (!features.empty()) cfg.features_path = features;
    if (!split_path.empty()) cfg.split_path = split_path;
    if (n_cold > 0) cfg.n_cold = n_cold;
    if (!m_list.empty()) cfg.m_list = parse_size_list(m_list);
    if (cfg.interactions_path.empty()) throw config_error("coldstart: --interactions is required");
    if (cfg.features_path.empty()) throw config_error("coldstart: --features is required");
    if (cfg.n_cold == 0) throw config_error("coldstart: --n-cold must be positive");

    const InteractionSet inter = load_interactions(cfg.interactions_path);
    const FeatureMatrix fm = load_features(cfg.features_path, inter.num_items);
    const UserSplit split = resolve_split(cfg, inter);
    const ColdPartition part = mark_cold_items(inter, cfg.n_cold, cfg.train.seed);

    std::optional<TrainResult> result;
    const int rc = run_training(cfg, part.train_matrix, fm, split, result);
    if (rc != 0) return rc;

    EvalOptions opts;
    opts.seed = derive_seed(cfg.train.seed, SeedStream::holdout);
    opts.recall_ms = cfg.m_list;
    opts.ndcg_ms = cfg.m_list;
    const auto reports = coldstart_eval(result->model, part, split.test_users, opts);
    const std::string jsonl = metrics_jsonl(reports, 0);
    write_text_atomic(cfg.out_dir + "/metrics.jsonl", jsonl);
    std::cout << jsonl;
    return 0;
}

int cmd_add_items(const CommonFlags& common, const std::string& checkpoint,
                  const std::string& new_features, const std::string& interactions,
                  const std::string& split_path, const std::string& m_list) {
    RunConfig cfg = common.resolve();
    if (!m_list.empty()) cfg.m_list = parse_size_list(m_list);
    if (checkpoint.empty()) throw config_error("add-items: --checkpoint is required");
    if (new_features.empty()) throw config_error("add-items: --new-features is required");

    const Model base = load_checkpoint(checkpoint);
    const FeatureMatrix nf = load_features(new_features);
    const Model extended = extend_items(base, nf);

    ensure_out_dir(cfg.out_dir);
    write_atomic(cfg.out_dir + "/model_extended.ckpt",
                 [&](const std::string& p) { save_checkpoint(extended, p); });
    std::cout << "catalog " << base.num_items() << " -> " << extended.num_items() << " items\n";

    if (!interactions.empty()) {
        const InteractionSet inter = load_interactions(interactions);
        if (inter.num_items > extended.num_items())
            throw data_error("add-items: interactions reference items beyond the extended catalog");
        RatingMatrix matrix =
            build_rating_matrix(inter.pairs, inter.num_users, extended.num_items());
        UserSplit split;
        if (!split_path.empty())
            split = load_split(split_path, inter.num_users);
        else
            split = split_users(inter, SplitRatios{}, extended.config.seed);
        EvalOptions opts;
        opts.seed = derive_seed(extended.config.seed, SeedStream::holdout);
        opts.recall_ms = cfg.m_list;
        opts.ndcg_ms = cfg.m_list;
        const auto reports = evaluate_in_matrix(extended, matrix, split.test_users, opts);
        const std::string jsonl = metrics_jsonl(reports, 0);
        write_text_atomic(cfg.out_dir + "/metrics.jsonl", jsonl);
        std::cout << jsonl;
    }
    return 0;
}

int cmd_recommend(const CommonFlags& common, const std::string& checkpoint,
                  const std::string& history_path, std::size_t m, const std::string& out_file) {
    if (checkpoint.empty()) throw config_error("recommend: --checkpoint is required");
    if (history_path.empty()) throw config_error("recommend: --history is required");
    (void)common;

    const Model model = load_checkpoint(checkpoint);
    const auto histories = load_user_histories(history_path, model.num_items());

    std::string out;
    for (const auto& [user, items] : histories) {
        const Ranking r = recommend(model, items, m);
        out += std::to_string(user) + "\t";
        for (std::size_t t = 0; t < r.items.size(); ++t) {
            if (t) out += ',';
            out += std::to_string(r.items[t]) + ":" + fmt_double(r.scores[t]);
        }
        out += "\n";
    }
    if (out_file.empty() || out_file == "-")
        std::cout << out;
    else
        write_text_atomic(out_file, out);
    return 0;
}

int cmd_gradcheck(const CommonFlags& common) {
    RunConfig cfg = common.resolve();
    const auto results = run_gradient_suites(cfg.train.seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << r.name << ": max_rel_err " << fmt_double(r.report.max_rel_err) << " over "
                  << r.report.coords_checked << " coords -> "
                  << (r.report.pass ? "pass" : "FAIL") << "\n";
        if (!r.report.pass) {
            std::cerr << "  worst: " << r.report.worst_coord << "\n";
            all_pass = false;
        }
    }
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mdcvae: mutually regularized dual-VAE hybrid recommender"};
    app.require_subcommand(1);

    std::string kernels = "auto";
    app.add_option("--kernels", kernels, "kernel backend: auto|scalar|avx2")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    int rc = 0;
    std::function<int()> action;

    // prepare
    {
        auto* cmd = app.add_subcommand("prepare", "ingest interactions, split users, emit manifests");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto interactions = std::make_shared<std::string>();
        auto features = std::make_shared<std::string>();
        auto ratios = std::make_shared<std::string>("8,1,1");
        cmd->add_option("--interactions", *interactions, "user<TAB>item interaction file");
        cmd->add_option("--features", *features, "item features file (validated against catalog)");
        cmd->add_option("--ratios", *ratios, "train,val,test user split ratios")
            ->capture_default_str();
        cmd->callback([&, common, interactions, features, ratios]() {
            action = [=]() { return cmd_prepare(*common, *interactions, *features, *ratios); };
        });
    }

    // synth
    {
        auto* cmd = app.add_subcommand("synth", "generate a clustered synthetic dataset");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto scfg = std::make_shared<SyntheticConfig>();
        auto subsample = std::make_shared<double>(0.0);
        cmd->add_option("--users", scfg->n_users, "number of users")->capture_default_str();
        cmd->add_option("--items", scfg->n_items, "number of items")->capture_default_str();
        cmd->add_option("--clusters", scfg->n_clusters, "number of clusters")->capture_default_str();
        cmd->add_option("--s-dim", scfg->s_dim, "feature dimension")->capture_default_str();
        cmd->add_option("--sparsity", scfg->sparsity, "in-cluster interaction fraction")
            ->capture_default_str();
        cmd->add_option("--noise", scfg->noise, "feature noise / redirect rate")
            ->capture_default_str();
        cmd->add_option("--subsample-density", *subsample,
                        "subsample interactions down to this density (0 = off)")
            ->capture_default_str();
        cmd->callback([&, common, scfg, subsample]() {
            action = [=]() { return cmd_synth(*common, *scfg, *subsample); };
        });
    }

    // train
    {
        auto* cmd = app.add_subcommand("train", "alternating b-step/t-step training");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto interactions = std::make_shared<std::string>();
        auto features = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        cmd->add_option("--interactions", *interactions, "interaction file");
        cmd->add_option("--features", *features, "item features file");
        cmd->add_option("--split", *split, "split manifest from prepare (derived when absent)");
        cmd->callback([&, common, interactions, features, split]() {
            action = [=]() { return cmd_train(*common, *interactions, *features, *split); };
        });
    }

    // eval
    {
        auto* cmd = app.add_subcommand("eval", "fold-in metrics for trained checkpoints");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto checkpoints = std::make_shared<std::vector<std::string>>();
        auto interactions = std::make_shared<std::string>();
        auto splits = std::make_shared<std::vector<std::string>>();
        auto m_list = std::make_shared<std::string>();
        cmd->add_option("--checkpoint", *checkpoints, "checkpoint path (repeat for aggregation)");
        cmd->add_option("--interactions", *interactions, "interaction file");
        cmd->add_option("--split", *splits, "split manifest per checkpoint");
        cmd->add_option("--m-list", *m_list, "comma-separated M cutoffs (default 20,40,100)");
        cmd->callback([&, common, checkpoints, interactions, splits, m_list]() {
            action = [=]() {
                return cmd_eval(*common, *checkpoints, *interactions, *splits, *m_list);
            };
        });
    }

    // sweep
    {
        auto* cmd = app.add_subcommand("sweep", "grid sweep over lambda_v and hidden size");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto interactions = std::make_shared<std::string>();
        auto features = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        auto lambda_grid = std::make_shared<std::string>("0.1,1,2,5,10");
        auto hidden_grid = std::make_shared<std::string>("");
        auto n_cold = std::make_shared<std::size_t>(0);
        cmd->add_option("--interactions", *interactions, "interaction file");
        cmd->add_option("--features", *features, "item features file");
        cmd->add_option("--split", *split, "split manifest");
        cmd->add_option("--lambda-v-grid", *lambda_grid, "lambda_v grid")->capture_default_str();
        cmd->add_option("--hidden-grid", *hidden_grid, "hidden sizes (empty = config value)");
        cmd->add_option("--n-cold", *n_cold, "cold items per grid point (0 = in-matrix sweep)")
            ->capture_default_str();
        cmd->callback([&, common, interactions, features, split, lambda_grid, hidden_grid,
                       n_cold]() {
            action = [=]() {
                return cmd_sweep(*common, *interactions, *features, *split, *lambda_grid,
                                 *hidden_grid, *n_cold);
            };
        });
    }

    // coldstart
    {
        auto* cmd = app.add_subcommand("coldstart", "cold-item partition, retrain, NI/CI metrics");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto interactions = std::make_shared<std::string>();
        auto features = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        auto n_cold = std::make_shared<std::size_t>(0);
        auto m_list = std::make_shared<std::string>();
        cmd->add_option("--interactions", *interactions, "interaction file");
        cmd->add_option("--features", *features, "item features file");
        cmd->add_option("--split", *split, "split manifest");
        cmd->add_option("--n-cold", *n_cold, "number of items to mark cold");
        cmd->add_option("--m-list", *m_list, "comma-separated M cutoffs");
        cmd->callback([&, common, interactions, features, split, n_cold, m_list]() {
            action = [=]() {
                return cmd_coldstart(*common, *interactions, *features, *split, *n_cold, *m_list);
            };
        });
    }

    // add-items
    {
        auto* cmd = app.add_subcommand("add-items",
                                       "extend the catalog with content-surrogate weights");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto checkpoint = std::make_shared<std::string>();
        auto new_features = std::make_shared<std::string>();
        auto interactions = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>();
        auto m_list = std::make_shared<std::string>();
        cmd->add_option("--checkpoint", *checkpoint, "trained symmetric-mode checkpoint");
        cmd->add_option("--new-features", *new_features, "features of the arriving items");
        cmd->add_option("--interactions", *interactions,
                        "optional interactions over the extended catalog for re-evaluation");
        cmd->add_option("--split", *split, "split manifest for the re-evaluation");
        cmd->add_option("--m-list", *m_list, "comma-separated M cutoffs");
        cmd->callback([&, common, checkpoint, new_features, interactions, split, m_list]() {
            action = [=]() {
                return cmd_add_items(*common, *checkpoint, *new_features, *interactions, *split,
                                     *m_list);
            };
        });
    }

    // recommend
    {
        auto* cmd = app.add_subcommand("recommend", "top-M recommendations from a history file");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        auto checkpoint = std::make_shared<std::string>();
        auto history = std::make_shared<std::string>();
        auto m = std::make_shared<std::size_t>(20);
        auto out_file = std::make_shared<std::string>("-");
        cmd->add_option("--checkpoint", *checkpoint, "trained checkpoint");
        cmd->add_option("--history", *history,
                        "user<TAB>item lines; item ids are catalog-internal");
        cmd->add_option("--m", *m, "recommendations per user")->capture_default_str();
        cmd->add_option("--out-file", *out_file, "output path ('-' = stdout)")
            ->capture_default_str();
        cmd->callback([&, common, checkpoint, history, m, out_file]() {
            action = [=]() { return cmd_recommend(*common, *checkpoint, *history, *m, *out_file); };
        });
    }

    // gradcheck
    {
        auto* cmd = app.add_subcommand("gradcheck", "finite-difference gradient suites");
        auto common = std::make_shared<CommonFlags>();
        common->attach(cmd);
        cmd->callback([&, common]() { action = [=]() { return cmd_gradcheck(*common); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (kernels == "scalar") kern::force_backend(kern::Backend::scalar);
        if (kernels == "avx2") kern::force_backend(kern::Backend::avx2);
        rc = action ? action() : 1;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}
