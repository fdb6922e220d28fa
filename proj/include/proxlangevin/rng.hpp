#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace proxlangevin {

// Seeded random stream with a fixed, library-owned mapping from engine output
// to variates. std::mt19937_64 output is fully specified by the standard, and
// the transforms below avoid std::*_distribution, whose streams differ across
// standard libraries. Same seed, same samples, everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd out(n);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
        return out;
    }

    void normal_fill(Eigen::Ref<Eigen::VectorXd> out) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal();
    }

    // Poisson count; Knuth multiplication for small means, normal
    // approximation guarded against negatives for large ones.
    std::int64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            const double limit = std::exp(-mean);
            std::int64_t k = 0;
            double p = uniform();
            while (p > limit) {
                ++k;
                p *= uniform();
            }
            return k;
        }
        const double x = mean + std::sqrt(mean) * normal();
        return x < 0.0 ? 0 : static_cast<std::int64_t>(std::llround(x));
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Decorrelates consecutive seeds (splitmix64 finaliser); used to derive
// per-chain seeds from a base seed and a chain index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace proxlangevin
