// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// ULA steering vectors and randomly drawn multi-path spatial scenes: one
// scatterer (Q sub-paths) per resolvable delay tap, per user, per base
// station.  Cell-edge user pairs with overlapping visibility regions can be
// declared to share the same physical scatterers toward every BS.

#ifndef PDPALIGN_SCENE_HPP
#define PDPALIGN_SCENE_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdpalign/common.hpp"
#include "pdpalign/pdp.hpp"

namespace pdpalign {

/// Uniform linear array: M antennas spaced D/lambda wavelengths apart.
/// D < lambda/2 keeps paths from distinct angles asymptotically orthogonal.
struct ArrayConfig {
    int n_antennas = 0;                  // M
    double spacing_over_wavelength = 0;  // D / lambda

    static ArrayConfig make(int n_antennas, double spacing) {
        ArrayConfig a{n_antennas, spacing};
        a.validate();
        return a;
    }

    static ArrayConfig default_ula() { return make(50, 0.5); }

    void validate() const {
        if (n_antennas < 1) throw std::invalid_argument("ArrayConfig: n_antennas must be >= 1");
        if (!(spacing_over_wavelength > 0) || spacing_over_wavelength > 0.5 + 1e-12)
            throw std::invalid_argument("ArrayConfig: need 0 < D/lambda <= 0.5");
    }
};

/// ULA response to a plane wave from angle theta:
/// a(theta)_m = exp(-j 2 pi m (D/lambda) cos theta), m = 0..M-1.
inline Vec steering_vector(double theta, const ArrayConfig& array) {
    Vec a(array.n_antennas);
    const double step = -kTwoPi * array.spacing_over_wavelength * std::cos(theta);
    for (int m = 0; m < array.n_antennas; ++m) {
        double ph = step * m;
        a(m) = cxd{std::cos(ph), std::sin(ph)};
    }
    return a;
}

struct UserRef {
    int cell = 0;
    int user = 0;
    friend bool operator==(const UserRef&, const UserRef&) = default;
};

/// Two users served by different BSs whose visibility regions overlap: toward
/// every BS they see the same scatterers.  tap_map[j] gives, for user_b's
/// j-th supported tap, the ordinal of user_a's supported tap whose scatterer
/// it reuses; empty means the identity pairing.
struct SharedScattererPair {
    UserRef user_a;
    UserRef user_b;
    std::vector<int> tap_map;
};

struct Topology {
    int n_cells = 0;
    std::vector<int> users_per_cell;
    std::vector<SharedScattererPair> shared_pairs;

    int n_users(int cell) const { return users_per_cell.at(cell); }

    int total_users() const {
        int t = 0;
        for (int k : users_per_cell) t += k;
        return t;
    }

    /// Cell-major flattening of (cell, user) pairs.
    int flat_index(int cell, int user) const {
        int o = 0;
        for (int l = 0; l < cell; ++l) o += users_per_cell[l];
        return o + user;
    }

    void validate() const {
        if (n_cells < 1) throw std::invalid_argument("Topology: n_cells must be >= 1");
        if (static_cast<int>(users_per_cell.size()) != n_cells)
            throw std::invalid_argument("Topology: users_per_cell size != n_cells");
        for (int k : users_per_cell)
            if (k < 1) throw std::invalid_argument("Topology: every cell needs >= 1 user");
        for (const auto& p : shared_pairs) {
            for (const UserRef& u : {p.user_a, p.user_b}) {
                if (u.cell < 0 || u.cell >= n_cells || u.user < 0 ||
                    u.user >= users_per_cell[u.cell])
                    throw std::invalid_argument("Topology: shared pair references unknown user");
            }
            if (p.user_a == p.user_b)
                throw std::invalid_argument("Topology: shared pair must name two distinct users");
        }
        // no chains and no double reuse: a reusing user appears exactly once
        // and never lends its geometry onward
        for (std::size_t i = 0; i < shared_pairs.size(); ++i)
            for (std::size_t j = 0; j < shared_pairs.size(); ++j) {
                if (i != j && shared_pairs[i].user_b == shared_pairs[j].user_b)
                    throw std::invalid_argument("Topology: user reuses scatterers in two pairs");
                if (shared_pairs[i].user_b == shared_pairs[j].user_a)
                    throw std::invalid_argument("Topology: chained shared-scatterer pairs");
            }
    }
};

/// Scatterer geometry of one resolvable path: cluster center AoA, angular
/// spread, and the Q sub-path AoAs drawn inside the spread.
struct PathGeometry {
    double center_aoa = 0;
    double angle_spread = 0;
    std::vector<double> subpath_aoas;
    double power = 0;
};

/// Per-(cell, user, BS) path geometry for every supported delay tap, plus the
/// per-user PDPs the taps were drawn for.  Immutable after construction and
/// safe to share across workers.
class SpatialScene {
public:
    SpatialScene(Topology topology, std::vector<std::vector<PowerDelayProfile>> pdps,
                 int q_subpaths)
        : topo_(std::move(topology)), pdps_(std::move(pdps)), q_(q_subpaths) {
        topo_.validate();
        if (q_ < 1) throw std::invalid_argument("SpatialScene: q_subpaths must be >= 1");
        if (static_cast<int>(pdps_.size()) != topo_.n_cells)
            throw std::invalid_argument("SpatialScene: pdps outer size != n_cells");
        for (int l = 0; l < topo_.n_cells; ++l)
            if (static_cast<int>(pdps_[l].size()) != topo_.n_users(l))
                throw std::invalid_argument("SpatialScene: pdps inner size != users in cell");
        paths_.resize(static_cast<std::size_t>(topo_.n_cells) * max_users() * topo_.n_cells);
    }

    const Topology& topology() const { return topo_; }
    int n_cells() const { return topo_.n_cells; }
    int q_subpaths() const { return q_; }

    const PowerDelayProfile& pdp(int cell, int user) const {
        return pdps_.at(cell).at(user);
    }

    void set_path(int cell, int user, int bs, int tap, PathGeometry geom) {
        slot(cell, user, bs)[tap] = std::move(geom);
    }

    /// Geometry of tap `tap` of user (cell, user) as seen at BS `bs`;
    /// nullptr outside the profile's support.
    const PathGeometry* path(int cell, int user, int bs, int tap) const {
        const auto& m = slot(cell, user, bs);
        auto it = m.find(tap);
        return it == m.end() ? nullptr : &it->second;
    }

    const std::map<int, PathGeometry>& paths(int cell, int user, int bs) const {
        return slot(cell, user, bs);
    }

private:
    int max_users() const {
        return *std::max_element(topo_.users_per_cell.begin(), topo_.users_per_cell.end());
    }

    std::map<int, PathGeometry>& slot(int cell, int user, int bs) {
        return paths_[index(cell, user, bs)];
    }
    const std::map<int, PathGeometry>& slot(int cell, int user, int bs) const {
        return paths_[index(cell, user, bs)];
    }

    std::size_t index(int cell, int user, int bs) const {
        if (cell < 0 || cell >= topo_.n_cells || bs < 0 || bs >= topo_.n_cells || user < 0 ||
            user >= topo_.n_users(cell))
            throw std::out_of_range("SpatialScene: (cell,user,bs) out of range");
        return (static_cast<std::size_t>(cell) * max_users() + user) * topo_.n_cells + bs;
    }

    Topology topo_;
    std::vector<std::vector<PowerDelayProfile>> pdps_;
    int q_;
    std::vector<std::map<int, PathGeometry>> paths_;
};

namespace detail {

inline PathGeometry draw_path(Rng& rng, double as_value, int q, double power) {
    PathGeometry g;
    g.center_aoa = rng.uniform(0.0, kPi);
    g.angle_spread = as_value;
    g.subpath_aoas.resize(q);
    for (int i = 0; i < q; ++i) {
        double th = g.center_aoa + as_value * (rng.uniform() - 0.5);
        g.subpath_aoas[i] = std::clamp(th, 1e-9, kPi - 1e-9);
    }
    g.power = power;
    return g;
}

}  // namespace detail

/// Draw a scene: for every (cell, user, BS) and every supported tap, a
/// scatterer with a uniform(0, pi) center AoA and Q sub-path AoAs uniform in
/// the angle spread around it.  The second user of a shared-scatterer pair
/// reuses the first user's scatterer draws toward every BS (through the
/// pair's tap correspondence) with powers from its own PDP.  Deterministic
/// given the seed.
inline SpatialScene draw_scene(std::uint64_t seed, const Topology& topology, double as_value,
                               const std::vector<std::vector<PowerDelayProfile>>& pdps,
                               int q_subpaths = 20) {
    if (as_value < 0) throw std::invalid_argument("draw_scene: angle spread must be >= 0");
    SpatialScene scene(topology, pdps, q_subpaths);
    const Topology& topo = scene.topology();

    auto is_secondary = [&](int l, int k) -> const SharedScattererPair* {
        for (const auto& p : topo.shared_pairs)
            if (p.user_b.cell == l && p.user_b.user == k) return &p;
        return nullptr;
    };

    for (int l = 0; l < topo.n_cells; ++l) {
        for (int k = 0; k < topo.n_users(l); ++k) {
            if (is_secondary(l, k) != nullptr) continue;
            const auto& pdp = scene.pdp(l, k);
            for (int b = 0; b < topo.n_cells; ++b) {
                Rng rng(derive_seed(seed, {0xA0u, static_cast<std::uint64_t>(l),
                                           static_cast<std::uint64_t>(k),
                                           static_cast<std::uint64_t>(b)}));
                for (int tap : pdp.support)
                    scene.set_path(l, k, b, tap,
                                   detail::draw_path(rng, as_value, q_subpaths, pdp.powers(tap)));
            }
        }
    }

    for (int l = 0; l < topo.n_cells; ++l) {
        for (int k = 0; k < topo.n_users(l); ++k) {
            const SharedScattererPair* pair = is_secondary(l, k);
            if (pair == nullptr) continue;
            const UserRef a = pair->user_a;
            const auto& pdp_a = scene.pdp(a.cell, a.user);
            const auto& pdp_b = scene.pdp(l, k);
            std::vector<int> map = pair->tap_map;
            if (map.empty()) {
                if (pdp_a.support.size() != pdp_b.support.size())
                    throw std::invalid_argument(
                        "draw_scene: shared pair with identity map needs equal support sizes");
                map.resize(pdp_b.support.size());
                std::iota(map.begin(), map.end(), 0);
            }
            if (map.size() != pdp_b.support.size())
                throw std::invalid_argument("draw_scene: tap_map size != user_b support size");
            for (int b = 0; b < topo.n_cells; ++b) {
                for (std::size_t j = 0; j < pdp_b.support.size(); ++j) {
                    int ord = map[j];
                    if (ord < 0 || ord >= static_cast<int>(pdp_a.support.size()))
                        throw std::invalid_argument("draw_scene: tap_map ordinal out of range");
                    const PathGeometry* src =
                        scene.path(a.cell, a.user, b, pdp_a.support[ord]);
                    PathGeometry g = *src;  // same scatterer: same center and sub-paths
                    g.power = pdp_b.powers(pdp_b.support[j]);
                    scene.set_path(l, k, b, pdp_b.support[j], std::move(g));
                }
            }
        }
    }
    return scene;
}

}  // namespace pdpalign

#endif  // PDPALIGN_SCENE_HPP
