// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM

#ifndef PDPALIGN_COMMON_HPP
#define PDPALIGN_COMMON_HPP

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace pdpalign {

using cxd = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Euclidean remainder, result in [0, m)
inline int mod_floor(int a, int m) {
    int r = a % m;
    return r < 0 ? r + m : r;
}

// splitmix64 finalizer, used to derive independent sub-stream seeds
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = mix64(base);
    for (std::uint64_t id : ids) s = mix64(s ^ (id + 0x9e3779b97f4a7c15ULL));
    return s;
}

// Deterministic RNG with explicit variate generation. std::mt19937_64 is
// specified bit-exactly by the standard; the distributions below are written
// out so results do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller (one variate per pair of uniforms)
    double gaussian() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    // circularly-symmetric complex Gaussian with E|z|^2 = var
    cxd cgaussian(double var) {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-var * std::log(u1));
        return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace pdpalign

#endif  // PDPALIGN_COMMON_HPP
