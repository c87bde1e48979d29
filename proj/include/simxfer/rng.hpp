#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace simxfer {

// Deterministic PRNG used by the synthetic benchmark and tests.
// mt19937_64 raw bits plus explicit samplers: standard-library
// distributions are not bit-stable across implementations, these are.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // [0,1)
    double uniform() {
        return double(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + int(eng_() % std::uint64_t(hi - lo + 1));
    }

    // Box-Muller, no cached second value
    double normal() {
        double u1 = double(eng_() >> 11) * 0x1.0p-53;
        double u2 = double(eng_() >> 11) * 0x1.0p-53;
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Eigen::VectorXd gaussian(int n, double sigma = 1.0) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = sigma * normal();
        return v;
    }

private:
    std::mt19937_64 eng_;
};

// splitmix64 mix so per-artifact streams are decorrelated from the master seed
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace simxfer
