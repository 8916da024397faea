#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace mdcvae {

std::uint64_t splitmix64(std::uint64_t& state);

// Fixed per-stage streams so every piece of randomness hangs off one run seed.
enum class SeedStream : std::uint64_t {
    user_split = 1,
    holdout = 2,
    cold_items = 3,
    synthetic = 4,
    init_user_vae = 5,
    init_item_vae = 6,
    train_loop = 7,
    pretrain = 8,
    gradcheck = 9,
    subsample = 10,
};

std::uint64_t derive_seed(std::uint64_t base, SeedStream stream);

// xoshiro256** with Box-Muller normals. Identical seed, identical stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    double uniform();  // [0, 1)
    double normal();   // N(0, 1)
    std::uint64_t below(std::uint64_t n);  // unbiased draw from [0, n)

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mdcvae
