// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// OFDM numerology, the unitary DFT, constant-modulus base/cyclic-shift pilot
// sequences and the circulant shift operator that relates two shifted pilots
// after derotation.

#ifndef PDPALIGN_OFDM_HPP
#define PDPALIGN_OFDM_HPP

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdpalign/common.hpp"

namespace pdpalign {

/// OFDM numerology: N tones, CP of N_cp chips, symbol duration T, chip
/// duration T_c = T/N.
struct OfdmConfig {
    int n_tones = 0;             // N
    int n_cp = 0;                // N_cp, in chips
    double symbol_duration = 0;  // T, seconds
    double chip_duration = 0;    // T_c, seconds

    static OfdmConfig make(int n_tones, int n_cp, double symbol_duration) {
        OfdmConfig c;
        c.n_tones = n_tones;
        c.n_cp = n_cp;
        c.symbol_duration = symbol_duration;
        c.chip_duration = symbol_duration / n_tones;
        c.validate();
        return c;
    }

    // LTE-style numerology: 15 kHz tone spacing, N=128, N_cp=8
    static OfdmConfig lte_default() { return make(128, 8, 66.67e-6); }

    int tone_groups() const { return n_tones / n_cp; }

    void validate() const {
        if (n_tones < 1) throw std::invalid_argument("OfdmConfig: n_tones must be >= 1");
        if (n_cp < 1 || n_cp > n_tones)
            throw std::invalid_argument("OfdmConfig: need 1 <= n_cp <= n_tones");
        if (!(symbol_duration > 0) || !(chip_duration > 0))
            throw std::invalid_argument("OfdmConfig: durations must be positive");
        double rel = std::abs(chip_duration * n_tones - symbol_duration) / symbol_duration;
        if (rel > 1e-12)
            throw std::invalid_argument("OfdmConfig: chip_duration * n_tones != symbol_duration");
    }
};

/// Unitary DFT matrix, F(k,n) = exp(-j 2 pi k n / N) / sqrt(N) (0-based).
inline Mat unitary_dft(int n) {
    if (n < 1) throw std::invalid_argument("unitary_dft: size must be >= 1");
    Mat f(n, n);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            double ph = -kTwoPi * static_cast<double>(k) * static_cast<double>(j) / n;
            f(k, j) = s * cxd{std::cos(ph), std::sin(ph)};
        }
    return f;
}

/// Deterministic constant-modulus base sequence, s0(n) = exp(-j pi n^2 / L).
inline Vec base_sequence(int length) {
    if (length < 1) throw std::invalid_argument("base_sequence: length must be >= 1");
    Vec s(length);
    for (int n = 0; n < length; ++n) {
        double ph = -kPi * static_cast<double>(n) * static_cast<double>(n) / length;
        s(n) = cxd{std::cos(ph), std::sin(ph)};
    }
    return s;
}

/// A unit-modulus pilot sequence: base sequence rotated by a cyclic shift tau,
/// occupying the listed absolute tone indices.
struct PilotSequence {
    Vec values;                 // length L, unit modulus
    int shift = 0;              // tau in [0, L)
    std::vector<int> tone_set;  // absolute tone indices, size L

    int length() const { return static_cast<int>(values.size()); }
};

/// Apply the cyclic shift tau to a base sequence: entry n is
/// base(n) * exp(j 2 pi tau n / L).  The time-domain image of the sequence is
/// circularly delayed by tau chips.
inline PilotSequence shifted_sequence(const Vec& base, int tau, std::vector<int> tone_set) {
    const int length = static_cast<int>(base.size());
    if (tau < 0 || tau >= length)
        throw std::invalid_argument("shifted_sequence: shift " + std::to_string(tau) +
                                    " outside [0, " + std::to_string(length) + ")");
    if (static_cast<int>(tone_set.size()) != length)
        throw std::invalid_argument("shifted_sequence: tone_set size mismatch");
    PilotSequence p;
    p.values.resize(length);
    for (int n = 0; n < length; ++n) {
        double ph = kTwoPi * static_cast<double>(tau) * static_cast<double>(n) / length;
        p.values(n) = base(n) * cxd{std::cos(ph), std::sin(ph)};
    }
    p.shift = tau;
    p.tone_set = std::move(tone_set);
    return p;
}

inline PilotSequence shifted_sequence(const Vec& base, int tau) {
    std::vector<int> tones(base.size());
    std::iota(tones.begin(), tones.end(), 0);
    return shifted_sequence(base, tau, std::move(tones));
}

/// Tones of comb group g when N tones are split into N/N_cp interleaved
/// groups of N_cp equally spaced tones: {g + n * N/N_cp}.
inline std::vector<int> tone_group_tones(int group, int n_tones, int n_cp) {
    if (n_cp < 1 || n_tones % n_cp != 0)
        throw std::invalid_argument("tone_group_tones: n_cp must divide n_tones");
    const int n_groups = n_tones / n_cp;
    if (group < 0 || group >= n_groups)
        throw std::invalid_argument("tone_group_tones: group outside [0, n_groups)");
    std::vector<int> tones(n_cp);
    for (int n = 0; n < n_cp; ++n) tones[n] = group + n * n_groups;
    return tones;
}

/// Unitary circulant operator Theta = F' Su' Sk F for two pilots sharing a
/// base, with relative shift dt = tau_k - tau_u (mod L).  Acting on a vector
/// it advances taps: (Theta x)(n) = x((n + dt) mod L); its first column has a
/// single 1 at row (L - dt) mod L.
struct ShiftOperator {
    int delta_tau = 0;  // in [0, L)
    int size = 0;       // L

    Mat matrix() const {
        Mat t = Mat::Zero(size, size);
        for (int n = 0; n < size; ++n) t(n, mod_floor(n + delta_tau, size)) = 1.0;
        return t;
    }

    Vec apply(const Vec& x) const {
        if (static_cast<int>(x.size()) != size)
            throw std::invalid_argument("ShiftOperator: size mismatch");
        Vec y(size);
        for (int n = 0; n < size; ++n) y(n) = x(mod_floor(n + delta_tau, size));
        return y;
    }
};

/// Operator for the relative shift of a pilot with shift tau_a as seen after
/// derotation by a pilot with shift tau_b (both from the same base).
inline ShiftOperator shift_operator(int tau_a, int tau_b, int size) {
    if (size < 1) throw std::invalid_argument("shift_operator: size must be >= 1");
    return ShiftOperator{mod_floor(tau_a - tau_b, size), size};
}

}  // namespace pdpalign

#endif  // PDPALIGN_OFDM_HPP
