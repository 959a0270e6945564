#include "rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "errors.hpp"

namespace medusa {

namespace {
// splitmix64; mixes seed and stream tags into a fresh engine seed.
uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

Rng Rng::derive(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = mix(seed);
    for (uint64_t t : tags) s = mix(s ^ mix(t));
    return Rng(s);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw Error(ErrorCode::runtime, "Rng::below(0)");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) throw Error(ErrorCode::runtime, "gamma shape must be positive");
    if (shape < 1.0) {
        // Boost to shape+1 and scale back (Marsaglia-Tsang trick).
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
}

std::vector<size_t> Rng::permutation(size_t n) {
    std::vector<size_t> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
}

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
    if (k > n) throw Error(ErrorCode::runtime, "sample_without_replacement: k > n");
    // Partial Fisher-Yates over an index vector.
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    os << " " << (have_spare_ ? 1 : 0);
    if (have_spare_) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        os << " " << bits;
    }
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng r(0);
    std::istringstream is(state);
    is >> r.engine_;
    int flag = 0;
    is >> flag;
    r.have_spare_ = flag != 0;
    if (r.have_spare_) {
        uint64_t bits = 0;
        is >> bits;
        std::memcpy(&r.spare_, &bits, sizeof(bits));
    }
    if (!is && !is.eof()) throw Error(ErrorCode::runtime, "bad rng state string");
    return r;
}

}  // namespace medusa
