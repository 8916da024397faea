#include "mdcvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mdcvae/errors.hpp"
#include "mdcvae/rng.hpp"

namespace mdcvae {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

bool parse_int64(std::string_view tok, std::int64_t& out) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
}

bool parse_double(std::string_view tok, double& out) {
    // from_chars<double> exists in this toolchain; fall back aside not needed.
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
}

std::vector<std::string_view> tokenize(std::string_view line);

}  // namespace

std::vector<std::pair<std::int64_t, std::vector<ItemId>>> load_user_histories(
    const std::string& path, std::size_t num_items) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open history file: " + path);
    std::map<std::int64_t, std::vector<ItemId>> by_user;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        std::int64_t u, j;
        if (toks.size() != 2 || !parse_int64(toks[0], u) || !parse_int64(toks[1], j))
            throw data_error(path + ":" + std::to_string(line_no) +
                             ": expected \"user<TAB>item\" with decimal integers");
        if (j < 0 || j >= static_cast<std::int64_t>(num_items))
            throw data_error(path + ":" + std::to_string(line_no) + ": item " +
                             std::to_string(j) + " outside the catalog of " +
                             std::to_string(num_items));
        by_user[u].push_back(static_cast<ItemId>(j));
    }
    std::vector<std::pair<std::int64_t, std::vector<ItemId>>> out;
    for (auto& [u, items] : by_user) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
        out.emplace_back(u, std::move(items));
    }
    return out;
}

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) toks.push_back(line.substr(start, i - start));
    }
    return toks;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    return out;
}

}  // namespace

InteractionSet load_interactions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open interactions file: " + path);

    // A canonical dump carries its shape in a leading comment; ids are then
    // already dense and are not re-compacted, so never-interacted catalog
    // items survive a round-trip.
    std::int64_t declared_users = -1, declared_items = -1;

    std::vector<std::pair<std::int64_t, std::int64_t>> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            std::int64_t u, j;
            if (line_no == 1 &&
                std::sscanf(line.c_str(), "# users=%ld items=%ld", &u, &j) == 2) {
                declared_users = u;
                declared_items = j;
            }
            continue;
        }
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        std::int64_t u, j;
        if (toks.size() != 2 || !parse_int64(toks[0], u) || !parse_int64(toks[1], j))
            throw data_error(path + ":" + std::to_string(line_no) +
                             ": expected \"user<TAB>item\" with decimal integers");
        raw.emplace_back(u, j);
    }
    if (raw.empty()) throw data_error(path + ": no interactions found");

    if (declared_users >= 0) {
        InteractionSet out;
        out.num_users = static_cast<std::size_t>(declared_users);
        out.num_items = static_cast<std::size_t>(declared_items);
        out.pairs.reserve(raw.size());
        for (auto& [u, j] : raw) {
            if (u < 0 || u >= declared_users || j < 0 || j >= declared_items)
                throw data_error(path + ": id outside the declared catalog shape");
            out.pairs.emplace_back(static_cast<UserId>(u), static_cast<ItemId>(j));
        }
        std::sort(out.pairs.begin(), out.pairs.end());
        const std::size_t before = out.pairs.size();
        out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end()), out.pairs.end());
        out.num_duplicates = before - out.pairs.size();
        std::vector<char> covered(out.num_users, 0);
        for (const auto& [u, j] : out.pairs) {
            (void)j;
            covered[u] = 1;
        }
        for (std::size_t u = 0; u < out.num_users; ++u)
            if (!covered[u])
                throw data_error(path + ": user " + std::to_string(u) +
                                 " in the declared shape has no interactions");
        out.user_external_ids.resize(out.num_users);
        out.item_external_ids.resize(out.num_items);
        for (std::size_t i = 0; i < out.num_users; ++i)
            out.user_external_ids[i] = static_cast<std::int64_t>(i);
        for (std::size_t i = 0; i < out.num_items; ++i)
            out.item_external_ids[i] = static_cast<std::int64_t>(i);
        return out;
    }

    std::vector<std::int64_t> users, items;
    users.reserve(raw.size());
    items.reserve(raw.size());
    for (auto& [u, j] : raw) {
        users.push_back(u);
        items.push_back(j);
    }
    auto compact = [](std::vector<std::int64_t>& ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    };
    compact(users);
    compact(items);
    auto rank = [](const std::vector<std::int64_t>& ids, std::int64_t v) {
        return static_cast<std::uint32_t>(std::lower_bound(ids.begin(), ids.end(), v) - ids.begin());
    };

    InteractionSet out;
    out.num_users = users.size();
    out.num_items = items.size();
    out.user_external_ids = users;
    out.item_external_ids = items;
    out.pairs.reserve(raw.size());
    for (auto& [u, j] : raw) out.pairs.emplace_back(rank(users, u), rank(items, j));
    std::sort(out.pairs.begin(), out.pairs.end());
    const std::size_t before = out.pairs.size();
    out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end()), out.pairs.end());
    out.num_duplicates = before - out.pairs.size();
    return out;
}

void write_interactions(const std::string& path, const InteractionSet& inter) {
    auto out = open_out(path);
    out << "# users=" << inter.num_users << " items=" << inter.num_items << '\n';
    for (const auto& [u, j] : inter.pairs) out << u << '\t' << j << '\n';
}

void write_id_map(const std::string& path, const std::vector<std::int64_t>& external_ids) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < external_ids.size(); ++i)
        out << external_ids[i] << '\t' << i << '\n';
}

RatingMatrix build_rating_matrix(std::span<const std::pair<UserId, ItemId>> pairs,
                                 std::size_t num_users, std::size_t num_items) {
    RatingMatrix m;
    m.num_users = num_users;
    m.num_items = num_items;
    m.row_offsets.assign(num_users + 1, 0);
    for (const auto& [u, j] : pairs) {
        (void)j;
        ++m.row_offsets[u + 1];
    }
    for (std::size_t i = 0; i < num_users; ++i) m.row_offsets[i + 1] += m.row_offsets[i];
    m.col_indices.resize(pairs.size());
    std::vector<std::size_t> cursor(m.row_offsets.begin(), m.row_offsets.end() - 1);
    for (const auto& [u, j] : pairs) m.col_indices[cursor[u]++] = j;
    for (std::size_t i = 0; i < num_users; ++i)
        std::sort(m.col_indices.begin() + m.row_offsets[i], m.col_indices.begin() + m.row_offsets[i + 1]);
    return m;
}

RatingMatrix build_rating_matrix(const InteractionSet& inter) {
    return build_rating_matrix(inter.pairs, inter.num_users, inter.num_items);
}

FeatureMatrix load_features(const std::string& path, std::size_t expected_items) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open features file: " + path);

    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&](std::string& dst) {
        while (std::getline(in, dst)) {
            ++line_no;
            if (!tokenize(dst).empty()) return true;
        }
        return false;
    };

    if (!next_line(line)) throw data_error(path + ": missing \"J S\" header");
    auto head = tokenize(line);
    std::int64_t j64, s64;
    if (head.size() != 2 || !parse_int64(head[0], j64) || !parse_int64(head[1], s64) || j64 < 0 || s64 <= 0)
        throw data_error(path + ":" + std::to_string(line_no) + ": bad \"J S\" header");
    const auto items = static_cast<std::size_t>(j64);
    const auto dim = static_cast<std::size_t>(s64);
    if (expected_items && items != expected_items)
        throw data_error(path + ": feature rows " + std::to_string(items) +
                         " do not match catalog size " + std::to_string(expected_items));

    FeatureMatrix fm;
    fm.values = Matrix(items, dim);
    if (items == 0) return fm;

    if (!next_line(line)) throw data_error(path + ": truncated after header");
    auto first = tokenize(line);
    const bool triplet_mode = first.size() == 3 && dim != 3;

    auto check_value = [&](double v, std::size_t r, std::size_t c) {
        if (!std::isfinite(v))
            throw data_error(path + ": non-finite value at item " + std::to_string(r) +
                             ", feature " + std::to_string(c));
    };

    if (triplet_mode) {
        auto consume = [&](std::span<const std::string_view> toks) {
            std::int64_t r, c;
            double v;
            if (toks.size() != 3 || !parse_int64(toks[0], r) || !parse_int64(toks[1], c) ||
                !parse_double(toks[2], v))
                throw data_error(path + ":" + std::to_string(line_no) + ": bad triplet line");
            if (r < 0 || r >= j64 || c < 0 || c >= s64)
                throw data_error(path + ":" + std::to_string(line_no) + ": triplet index out of range");
            check_value(v, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            fm.values(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
        };
        consume(first);
        while (next_line(line)) consume(tokenize(line));
    } else {
        std::size_t r = 0;
        auto consume = [&](std::span<const std::string_view> toks) {
            if (toks.size() != dim)
                throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(dim) + " values, got " + std::to_string(toks.size()));
            for (std::size_t c = 0; c < dim; ++c) {
                double v;
                if (!parse_double(toks[c], v))
                    throw data_error(path + ":" + std::to_string(line_no) + ": bad float");
                check_value(v, r, c);
                fm.values(r, c) = v;
            }
            ++r;
        };
        consume(first);
        while (r < items) {
            if (!next_line(line))
                throw data_error(path + ": truncated, got " + std::to_string(r) + " of " +
                                 std::to_string(items) + " rows");
            consume(tokenize(line));
        }
    }
    return fm;
}

void write_features(const std::string& path, const FeatureMatrix& fm) {
    auto out = open_out(path);
    out << fm.num_items() << ' ' << fm.feature_dim() << '\n';
    for (std::size_t r = 0; r < fm.num_items(); ++r) {
        const double* row = fm.values.row(r);
        for (std::size_t c = 0; c < fm.feature_dim(); ++c) {
            if (c) out << ' ';
            out << fmt_double(row[c]);
        }
        out << '\n';
    }
}

UserSplit split_users(const InteractionSet& inter, SplitRatios ratios, std::uint64_t seed) {
    const std::size_t total = ratios.train + ratios.val + ratios.test;
    if (total == 0) throw config_error("split ratios sum to zero");
    if (inter.num_users < 10)
        throw config_error("need at least 10 users to split, have " +
                           std::to_string(inter.num_users));

    std::vector<UserId> ids(inter.num_users);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<UserId>(i);
    Rng rng(derive_seed(seed, SeedStream::user_split));
    rng.shuffle(ids);

    const std::size_t n = ids.size();
    std::size_t n_train = n * ratios.train / total;
    const std::size_t n_val = n * ratios.val / total;
    const std::size_t n_test = n * ratios.test / total;
    n_train += n - (n_train + n_val + n_test);  // remainder goes to train

    UserSplit split;
    split.seed = seed;
    split.train_users.assign(ids.begin(), ids.begin() + n_train);
    split.val_users.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test_users.assign(ids.begin() + n_train + n_val, ids.end());
    std::sort(split.train_users.begin(), split.train_users.end());
    std::sort(split.val_users.begin(), split.val_users.end());
    std::sort(split.test_users.begin(), split.test_users.end());
    return split;
}

void write_split(const std::string& path, const UserSplit& split) {
    auto out = open_out(path);
    out << "# seed=" << split.seed << '\n';
    for (UserId u : split.train_users) out << u << "\ttrain\n";
    for (UserId u : split.val_users) out << u << "\tval\n";
    for (UserId u : split.test_users) out << u << "\ttest\n";
}

UserSplit load_split(const std::string& path, std::size_t num_users) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open split manifest: " + path);
    UserSplit split;
    std::string line;
    std::size_t line_no = 0;
    std::set<UserId> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        std::int64_t u;
        if (toks.size() != 2 || !parse_int64(toks[0], u) || u < 0 ||
            u >= static_cast<std::int64_t>(num_users))
            throw data_error(path + ":" + std::to_string(line_no) + ": bad split line");
        const auto uid = static_cast<UserId>(u);
        if (!seen.insert(uid).second)
            throw data_error(path + ":" + std::to_string(line_no) + ": duplicate user");
        if (toks[1] == "train")
            split.train_users.push_back(uid);
        else if (toks[1] == "val")
            split.val_users.push_back(uid);
        else if (toks[1] == "test")
            split.test_users.push_back(uid);
        else
            throw data_error(path + ":" + std::to_string(line_no) + ": unknown role");
    }
    if (seen.size() != num_users)
        throw data_error(path + ": split covers " + std::to_string(seen.size()) + " of " +
                         std::to_string(num_users) + " users");
    std::sort(split.train_users.begin(), split.train_users.end());
    std::sort(split.val_users.begin(), split.val_users.end());
    std::sort(split.test_users.begin(), split.test_users.end());
    return split;
}

FoldInPair holdout_items(UserId user, std::span<const ItemId> row, double fraction,
                         std::uint64_t seed) {
    if (row.empty()) throw config_error("holdout_items: empty interaction row");
    FoldInPair pair;
    pair.user_id = user;
    if (row.size() == 1) {
        pair.input_items.assign(row.begin(), row.end());
        return pair;  // single interaction: no holdout, excluded from averages
    }
    std::size_t h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(row.size())));
    h = std::max<std::size_t>(h, 1);
    h = std::min(h, row.size() - 1);

    std::vector<ItemId> shuffled(row.begin(), row.end());
    Rng rng(derive_seed(seed ^ (0x517cc1b727220a95ULL * (user + 1)), SeedStream::holdout));
    rng.shuffle(shuffled);
    pair.holdout_items.assign(shuffled.begin(), shuffled.begin() + h);
    pair.input_items.assign(shuffled.begin() + h, shuffled.end());
    std::sort(pair.holdout_items.begin(), pair.holdout_items.end());
    std::sort(pair.input_items.begin(), pair.input_items.end());
    return pair;
}

ColdPartition mark_cold_items(const InteractionSet& inter, std::size_t n_cold,
                              std::uint64_t seed) {
    if (n_cold == 0 || n_cold >= inter.num_items)
        throw config_error("n_cold must be in (0, num_items), got " + std::to_string(n_cold));

    std::vector<ItemId> ids(inter.num_items);
    for (std::size_t j = 0; j < ids.size(); ++j) ids[j] = static_cast<ItemId>(j);
    Rng rng(derive_seed(seed, SeedStream::cold_items));
    rng.shuffle(ids);
    ids.resize(n_cold);
    std::sort(ids.begin(), ids.end());

    std::vector<char> is_cold(inter.num_items, 0);
    for (ItemId j : ids) is_cold[j] = 1;

    ColdPartition part;
    part.cold_item_ids = std::move(ids);
    std::vector<std::pair<UserId, ItemId>> kept;
    kept.reserve(inter.pairs.size());
    for (const auto& p : inter.pairs) {
        if (is_cold[p.second])
            part.removed_pairs.push_back(p);
        else
            kept.push_back(p);
    }
    part.train_matrix = build_rating_matrix(kept, inter.num_users, inter.num_items);
    return part;
}

LongTailStats density_stats(const RatingMatrix& mat, std::span<const double> percentile_qs) {
    static constexpr double kDefaultQs[] = {25, 50, 75, 90, 95, 99};
    if (percentile_qs.empty()) percentile_qs = kDefaultQs;

    LongTailStats stats;
    stats.per_item_counts.assign(mat.num_items, 0);
    for (ItemId j : mat.col_indices) ++stats.per_item_counts[j];
    stats.total_interactions = mat.nnz();
    stats.density = mat.num_users && mat.num_items
                        ? static_cast<double>(mat.nnz()) /
                              (static_cast<double>(mat.num_users) * mat.num_items)
                        : 0.0;

    std::vector<std::uint64_t> sorted = stats.per_item_counts;
    std::sort(sorted.begin(), sorted.end());
    for (double q : percentile_qs) {
        std::uint64_t value = 0;
        if (!sorted.empty()) {
            auto idx = static_cast<std::size_t>(
                std::ceil(q / 100.0 * static_cast<double>(sorted.size())));
            idx = std::min(std::max<std::size_t>(idx, 1), sorted.size()) - 1;
            value = sorted[idx];
        }
        stats.percentiles.emplace_back(q, value);
    }
    return stats;
}

SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_clusters == 0 || cfg.n_clusters > std::min(cfg.n_users, cfg.n_items))
        throw config_error("n_clusters must be in [1, min(n_users, n_items)]");
    if (cfg.s_dim < cfg.n_clusters)
        throw config_error("s_dim must be >= n_clusters for one-hot cluster templates");
    if (!(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0)) throw config_error("sparsity must be in (0, 1]");
    if (!(cfg.noise >= 0.0)) throw config_error("noise must be >= 0");

    SyntheticData out;
    out.user_clusters.resize(cfg.n_users);
    out.item_clusters.resize(cfg.n_items);
    for (std::size_t u = 0; u < cfg.n_users; ++u)
        out.user_clusters[u] = static_cast<std::uint32_t>(u % cfg.n_clusters);
    for (std::size_t j = 0; j < cfg.n_items; ++j)
        out.item_clusters[j] = static_cast<std::uint32_t>(j % cfg.n_clusters);

    std::vector<std::vector<ItemId>> cluster_items(cfg.n_clusters);
    for (std::size_t j = 0; j < cfg.n_items; ++j)
        cluster_items[out.item_clusters[j]].push_back(static_cast<ItemId>(j));

    Rng rng(derive_seed(cfg.seed, SeedStream::synthetic));

    // Interactions: Zipf-weighted picks inside the user's cluster, with a
    // noise-rate redirect to a uniformly random item anywhere in the catalog.
    std::vector<std::pair<UserId, ItemId>> pairs;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        const auto& members = cluster_items[out.user_clusters[u]];
        const std::size_t want =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                         cfg.sparsity * static_cast<double>(members.size()))));

        std::vector<std::pair<double, ItemId>> keyed;
        keyed.reserve(members.size());
        for (std::size_t t = 0; t < members.size(); ++t) {
            const double w = 1.0 / static_cast<double>(t + 1);  // in-cluster Zipf rank
            double u01 = rng.uniform();
            if (u01 <= 0.0) u01 = 0x1.0p-53;
            keyed.emplace_back(std::pow(u01, 1.0 / w), members[t]);
        }
        std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second < b.second);
        });

        std::set<ItemId> chosen;
        for (std::size_t t = 0; t < std::min(want, keyed.size()); ++t) {
            ItemId j = keyed[t].second;
            if (cfg.noise > 0.0 && rng.uniform() < cfg.noise)
                j = static_cast<ItemId>(rng.below(cfg.n_items));
            chosen.insert(j);
        }
        for (ItemId j : chosen) pairs.emplace_back(static_cast<UserId>(u), j);
    }
    std::sort(pairs.begin(), pairs.end());

    out.interactions.pairs = std::move(pairs);
    out.interactions.num_users = cfg.n_users;
    out.interactions.num_items = cfg.n_items;
    out.interactions.user_external_ids.resize(cfg.n_users);
    out.interactions.item_external_ids.resize(cfg.n_items);
    for (std::size_t u = 0; u < cfg.n_users; ++u)
        out.interactions.user_external_ids[u] = static_cast<std::int64_t>(u);
    for (std::size_t j = 0; j < cfg.n_items; ++j)
        out.interactions.item_external_ids[j] = static_cast<std::int64_t>(j);

    // Features: one-hot cluster template plus Gaussian noise.
    out.features.values = Matrix(cfg.n_items, cfg.s_dim);
    for (std::size_t j = 0; j < cfg.n_items; ++j) {
        double* row = out.features.values.row(j);
        row[out.item_clusters[j]] = 1.0;
        if (cfg.noise > 0.0)
            for (std::size_t c = 0; c < cfg.s_dim; ++c) row[c] += cfg.noise * rng.normal();
    }
    return out;
}

InteractionSet subsample_interactions(const InteractionSet& inter, double target_density,
                                      std::uint64_t seed) {
    if (!(target_density > 0.0)) throw config_error("target density must be positive");
    const double full = static_cast<double>(inter.num_users) * static_cast<double>(inter.num_items);
    std::size_t target =
        static_cast<std::size_t>(std::floor(target_density * full));
    target = std::max(target, inter.num_users);  // keep one interaction per user
    if (target >= inter.pairs.size()) return inter;

    Rng rng(derive_seed(seed, SeedStream::subsample));
    std::vector<std::size_t> order(inter.pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<char> keep(inter.pairs.size(), 0);
    std::vector<char> user_covered(inter.num_users, 0);
    std::size_t kept = 0;
    for (std::size_t idx : order) {  // first pass guarantees per-user coverage
        const UserId u = inter.pairs[idx].first;
        if (!user_covered[u]) {
            user_covered[u] = 1;
            keep[idx] = 1;
            ++kept;
        }
    }
    for (std::size_t idx : order) {
        if (kept >= target) break;
        if (!keep[idx]) {
            keep[idx] = 1;
            ++kept;
        }
    }

    InteractionSet out;
    out.num_users = inter.num_users;
    out.num_items = inter.num_items;
    out.user_external_ids = inter.user_external_ids;
    out.item_external_ids = inter.item_external_ids;
    for (std::size_t i = 0; i < inter.pairs.size(); ++i)
        if (keep[i]) out.pairs.push_back(inter.pairs[i]);
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

}  // namespace mdcvae
