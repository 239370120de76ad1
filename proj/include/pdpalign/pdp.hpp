// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// Power-delay profiles on a cyclic delay grid.

#ifndef PDPALIGN_PDP_HPP
#define PDPALIGN_PDP_HPP

#include <set>
#include <stdexcept>
#include <vector>

#include "pdpalign/common.hpp"

namespace pdpalign {

enum class PdpKind { uniform, exponential, sparse };

/// Average power of each resolvable delay tap; the diagonal of E[h h'] under
/// uncorrelated scattering.  `support` lists the taps with nonzero power.
struct PowerDelayProfile {
    Eigen::VectorXd powers;    // length = delay grid size
    std::vector<int> support;  // sorted tap indices with powers > 0

    int grid_length() const { return static_cast<int>(powers.size()); }

    double total_power() const { return powers.sum(); }

    static PowerDelayProfile from_powers(Eigen::VectorXd p) {
        PowerDelayProfile pdp;
        for (int n = 0; n < p.size(); ++n) {
            if (p(n) < 0) throw std::invalid_argument("PowerDelayProfile: negative tap power");
            if (p(n) > 0) pdp.support.push_back(n);
        }
        pdp.powers = std::move(p);
        return pdp;
    }

    /// The profile seen through a relative cyclic shift dt: tap s moves to
    /// (s - dt) mod L, i.e. powers'(n) = powers((n + dt) mod L).
    PowerDelayProfile shifted(int delta_tau) const {
        const int length = grid_length();
        Eigen::VectorXd p(length);
        for (int n = 0; n < length; ++n) p(n) = powers(mod_floor(n + delta_tau, length));
        return from_powers(std::move(p));
    }

    /// Alias the profile onto a shorter cyclic grid; tap powers at indices
    /// congruent mod new_length add.
    PowerDelayProfile folded(int new_length) const {
        if (new_length < 1) throw std::invalid_argument("PowerDelayProfile: fold length < 1");
        Eigen::VectorXd p = Eigen::VectorXd::Zero(new_length);
        for (int n = 0; n < grid_length(); ++n) p(n % new_length) += powers(n);
        return from_powers(std::move(p));
    }
};

/// Build one of the stock profiles on a length-n_tones delay grid, scaled so
/// the tap powers sum to total_power.  uniform: equal power on taps
/// [0, n_cp); exponential: power decaying as exp(-0.6 n) over [0, n_cp);
/// sparse: equal power on the given support.
inline PowerDelayProfile make_pdp(PdpKind kind, int n_tones, int n_cp, double total_power,
                                  const std::vector<int>* sparse_support = nullptr) {
    if (n_tones < 1 || n_cp < 1 || n_cp > n_tones)
        throw std::invalid_argument("make_pdp: invalid grid sizes");
    if (!(total_power > 0)) throw std::invalid_argument("make_pdp: total_power must be > 0");

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n_tones);
    switch (kind) {
        case PdpKind::uniform:
            for (int n = 0; n < n_cp; ++n) p(n) = 1.0;
            break;
        case PdpKind::exponential:
            for (int n = 0; n < n_cp; ++n) p(n) = std::exp(-0.6 * n);
            break;
        case PdpKind::sparse: {
            if (sparse_support == nullptr || sparse_support->empty())
                throw std::invalid_argument("make_pdp: sparse profile needs a nonempty support");
            std::set<int> uniq(sparse_support->begin(), sparse_support->end());
            for (int s : uniq) {
                if (s < 0 || s >= n_cp)
                    throw std::invalid_argument("make_pdp: sparse support outside [0, n_cp)");
                p(s) = 1.0;
            }
            break;
        }
    }
    p *= total_power / p.sum();
    return PowerDelayProfile::from_powers(std::move(p));
}

}  // namespace pdpalign

#endif  // PDPALIGN_PDP_HPP
