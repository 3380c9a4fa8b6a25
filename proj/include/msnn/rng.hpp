#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace msnn {

// Deterministic random stream. Wraps mt19937_64 but implements all
// distributions itself so that a given seed produces the same draw
// sequence on every platform (std::*_distribution is not portable).
//
// Streams are derived, never shared: child(tag) returns an independent
// stream whose seed depends only on this stream's seed and the tag, so
// per-subject / per-fold / per-epoch streams can be handed out in any
// order without coupling consumers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [a, b).
    double uniform(double a, double b);
    // Standard normal (Box-Muller, cached spare).
    double normal();
    double normal(double mean, double sd);
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t integer(std::uint64_t n);
    bool bernoulli(double p);

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = integer(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    Rng child(std::uint64_t tag) const;
    Rng child(std::string_view tag) const;
    Rng child(std::string_view tag, std::uint64_t index) const;

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer; used for seed derivation and stable string hashing.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);

}  // namespace msnn
