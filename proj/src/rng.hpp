#ifndef MEDUSA_RNG_HPP
#define MEDUSA_RNG_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace medusa {

// Deterministic random source. All distributions are implemented here on top
// of mt19937_64 instead of <random>'s distribution objects, whose algorithms
// are implementation-defined; this keeps every sampled stream bit-reproducible
// across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from (seed, tags...). Used so that e.g.
    // epoch shuffling does not perturb dropout sampling.
    static Rng derive(uint64_t seed, std::initializer_list<uint64_t> tags);

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    double normal();                     // standard normal, Box-Muller
    double gamma(double shape);          // Marsaglia-Tsang, unit scale
    double beta(double a, double b);     // from two gammas

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n);
    // k distinct indices from [0, n), order randomized.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k);

    std::string serialize() const;
    static Rng deserialize(const std::string& state);

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace medusa

#endif
