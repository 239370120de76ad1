// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// Per-tap spatial covariances across the BS array, aggregate covariances of
// cyclically shifted co-pilot users, and random channel realizations.

#ifndef PDPALIGN_COVARIANCE_HPP
#define PDPALIGN_COVARIANCE_HPP

#include <stdexcept>
#include <vector>

#include "pdpalign/common.hpp"
#include "pdpalign/plan.hpp"
#include "pdpalign/scene.hpp"

namespace pdpalign {

/// Hermitian PSD spatial covariance of one delay tap across the M antennas.
/// user == -1 marks an aggregate over a whole cell.
struct TapCovariance {
    Mat matrix;
    int tap = 0;
    int cell = 0;
    int user = -1;
    int bs = 0;
};

/// Covariance of tap n of user (cell, user) at BS bs, conditioned on the
/// drawn sub-path angles with the i.i.d. sub-path phases averaged out:
/// C = (P_n / Q) sum_q a(theta_q) a(theta_q)'.  Zero outside the support.
inline TapCovariance tap_covariance(const SpatialScene& scene, int cell, int user, int bs,
                                    int tap, const ArrayConfig& array) {
    TapCovariance out;
    out.tap = tap;
    out.cell = cell;
    out.user = user;
    out.bs = bs;
    const int m = array.n_antennas;
    const PathGeometry* g = scene.path(cell, user, bs, tap);
    if (g == nullptr) {
        out.matrix = Mat::Zero(m, m);
        return out;
    }
    Mat c = Mat::Zero(m, m);
    for (double theta : g->subpath_aoas) {
        Vec a = steering_vector(theta, array);
        c.noalias() += a * a.adjoint();
    }
    c *= g->power / static_cast<double>(g->subpath_aoas.size());
    out.matrix = std::move(c);
    return out;
}

/// Covariance of tap n of the aggregate channel from all users of cell
/// `cell` to BS `bs` under the plan's cyclic shifts:
/// C_n = sum_k rho_k C_{k}((n + tau_k) mod L).  Users are independent, so
/// their tap covariances add.
inline TapCovariance aggregate_tap_covariance(const SpatialScene& scene,
                                              const AlignmentPlan& plan, int cell, int bs,
                                              int tap, const std::vector<double>& tone_powers,
                                              const ArrayConfig& array) {
    const int n_users = scene.topology().n_users(cell);
    if (static_cast<int>(tone_powers.size()) != n_users)
        throw std::invalid_argument("aggregate_tap_covariance: tone_powers size != users in cell");
    const int length = plan.seq_length;
    TapCovariance out;
    out.tap = tap;
    out.cell = cell;
    out.user = -1;
    out.bs = bs;
    out.matrix = Mat::Zero(array.n_antennas, array.n_antennas);
    for (int k = 0; k < n_users; ++k) {
        int src = mod_floor(tap + plan.shift(cell, k), length);
        const PathGeometry* g = scene.path(cell, k, bs, src);
        if (g == nullptr) continue;
        out.matrix += tone_powers[k] * tap_covariance(scene, cell, k, bs, src, array).matrix;
    }
    return out;
}

/// One realization of the CIR from user (cell, user) to BS bs: an M x L
/// matrix whose column n is tap n across the antennas,
/// sqrt(P_n / Q) sum_q a(theta_q) exp(j phi_q), with fresh i.i.d. uniform
/// phases phi_q.  Deterministic per seed.
inline Mat realize_cir(const SpatialScene& scene, int cell, int user, int bs,
                       const ArrayConfig& array, std::uint64_t seed) {
    const auto& pdp = scene.pdp(cell, user);
    const int m = array.n_antennas;
    Mat h = Mat::Zero(m, pdp.grid_length());
    Rng rng(seed);
    for (int tap : pdp.support) {
        const PathGeometry* g = scene.path(cell, user, bs, tap);
        if (g == nullptr) continue;
        const int q = static_cast<int>(g->subpath_aoas.size());
        Vec col = Vec::Zero(m);
        for (int i = 0; i < q; ++i) {
            double phi = rng.uniform(0.0, kTwoPi);
            col += cxd{std::cos(phi), std::sin(phi)} * steering_vector(g->subpath_aoas[i], array);
        }
        h.col(tap) = std::sqrt(g->power / q) * col;
    }
    return h;
}

/// Precomputed per-(cell, user, bs, tap) covariances for repeated lookups in
/// cost evaluation and estimation.
class TapCovarianceTable {
public:
    TapCovarianceTable(const SpatialScene& scene, const ArrayConfig& array)
        : n_cells_(scene.n_cells()), m_(array.n_antennas) {
        const Topology& topo = scene.topology();
        entries_.resize(topo.n_cells);
        for (int l = 0; l < topo.n_cells; ++l) {
            entries_[l].resize(topo.n_users(l));
            for (int k = 0; k < topo.n_users(l); ++k) {
                entries_[l][k].resize(topo.n_cells);
                for (int b = 0; b < topo.n_cells; ++b)
                    for (int tap : scene.pdp(l, k).support)
                        entries_[l][k][b].emplace_back(
                            tap, tap_covariance(scene, l, k, b, tap, array).matrix);
            }
        }
    }

    int n_antennas() const { return m_; }

    /// Covariance of tap `tap`, or nullptr when the tap carries no power.
    const Mat* find(int cell, int user, int bs, int tap) const {
        for (const auto& [t, mat] : entries_.at(cell).at(user).at(bs))
            if (t == tap) return &mat;
        return nullptr;
    }

private:
    int n_cells_;
    int m_;
    std::vector<std::vector<std::vector<std::vector<std::pair<int, Mat>>>>> entries_;
};

}  // namespace pdpalign

#endif  // PDPALIGN_COVARIANCE_HPP
