// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// PDP alignment: the intra-cell orthogonality condition on relative cyclic
// shifts, greedy orthogonal packing, the inter-cell alignment objective
// (summed residual traces), and three shift optimizers: exhaustive search,
// the full-length scheme (one shift per cell, users offset by N_cp), and the
// tone-group scheme (length-N_cp comb pilots, independent per-group search).

#ifndef PDPALIGN_ALIGNMENT_HPP
#define PDPALIGN_ALIGNMENT_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pdpalign/common.hpp"
#include "pdpalign/covariance.hpp"
#include "pdpalign/estimation.hpp"
#include "pdpalign/ofdm.hpp"
#include "pdpalign/pdp.hpp"
#include "pdpalign/plan.hpp"
#include "pdpalign/scene.hpp"

namespace pdpalign {

struct search_too_large : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct infeasible_plan : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// True iff the supports of the two profiles stay disjoint when profile b is
/// seen through the relative cyclic shift delta_tau (its support moves to
/// (s - delta_tau) mod L).  This is the condition for the two users' pilots
/// to be orthogonal at every receive antenna.
inline bool pdp_orthogonal(const PowerDelayProfile& a, const PowerDelayProfile& b,
                           int delta_tau, int length) {
    if (a.grid_length() != length || b.grid_length() != length)
        throw std::invalid_argument("pdp_orthogonal: profiles not on the given delay grid");
    std::vector<char> occupied(length, 0);
    for (int s : a.support) occupied[s] = 1;
    for (int s : b.support)
        if (occupied[mod_floor(s - delta_tau, length)]) return false;
    return true;
}

/// Greedy first-fit packing: assign each profile the smallest shift that
/// keeps it orthogonal to everything already placed.  Sparse profiles pack
/// tighter than the conventional one-user-per-N_cp spacing.  Returns
/// std::nullopt when the greedy pass cannot place some profile.
inline std::optional<std::vector<int>> max_orthogonal_packing(
    const std::vector<PowerDelayProfile>& pdps, int length) {
    if (pdps.empty()) throw std::invalid_argument("max_orthogonal_packing: no profiles");
    std::vector<int> shifts;
    shifts.reserve(pdps.size());
    for (std::size_t i = 0; i < pdps.size(); ++i) {
        bool placed = false;
        for (int tau = 0; tau < length && !placed; ++tau) {
            bool ok = true;
            for (std::size_t j = 0; j < i && ok; ++j)
                ok = pdp_orthogonal(pdps[j], pdps[i], tau - shifts[j], length);
            if (ok) {
                shifts.push_back(tau);
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }
    return shifts;
}

/// Value of the alignment objective with its per-(BS, tap) breakdown.
struct AlignmentCost {
    double total = 0;
    Eigen::MatrixXd per_cell_per_tap;  // B x L, rows per serving BS
};

namespace detail {

struct IntVecHash {
    std::size_t operator()(const std::vector<int>& v) const {
        std::size_t h = 1469598103934665603ull;
        for (int x : v) {
            h ^= static_cast<std::size_t>(static_cast<unsigned>(x)) + 0x9e3779b9u;
            h *= 1099511628211ull;
        }
        return h;
    }
};

}  // namespace detail

/// Evaluates the alignment objective sum_b sum_n Tr(R_n^{(b)}) for candidate
/// plans over one scene.  Residual traces are memoized on the pattern of
/// source taps feeding each (BS, tap), which collapses the cost of
/// enumerating many plans that revisit the same tap collisions.
class CostEvaluator {
public:
    CostEvaluator(const SpatialScene& scene, const LinkBudget& budget, const ArrayConfig& array)
        : scene_(scene), budget_(budget), table_(scene, array) {
        budget.validate();
        if (budget.tone_powers.size() != scene.topology().total_users())
            throw std::invalid_argument("CostEvaluator: budget covers wrong user count");
    }

    /// Objective restricted to one tone group (users in other groups occupy
    /// disjoint tones and cannot contribute).
    double group_total(const AlignmentPlan& plan, int group) {
        check_plan_shape(plan);
        const Topology& topo = scene_.topology();
        const int length = plan.seq_length;
        double total = 0;
        std::vector<int> key(1 + topo.total_users());
        for (int b = 0; b < topo.n_cells; ++b) {
            for (int n = 0; n < length; ++n) {
                build_key(plan, group, b, n, key);
                total += residual_trace(key, b);
            }
        }
        return total;
    }

    double total(const AlignmentPlan& plan) {
        double t = 0;
        for (int g : groups_in(plan)) t += group_total(plan, g);
        return t;
    }

    AlignmentCost evaluate(const AlignmentPlan& plan) {
        check_plan_shape(plan);
        const Topology& topo = scene_.topology();
        const int length = plan.seq_length;
        AlignmentCost cost;
        cost.per_cell_per_tap = Eigen::MatrixXd::Zero(topo.n_cells, length);
        std::vector<int> key(1 + topo.total_users());
        for (int g : groups_in(plan)) {
            for (int b = 0; b < topo.n_cells; ++b) {
                for (int n = 0; n < length; ++n) {
                    build_key(plan, g, b, n, key);
                    double v = residual_trace(key, b);
                    cost.per_cell_per_tap(b, n) += v;
                    cost.total += v;
                }
            }
        }
        return cost;
    }

private:
    void check_plan_shape(const AlignmentPlan& plan) const {
        plan.validate();
        const Topology& topo = scene_.topology();
        if (plan.n_cells() != topo.n_cells)
            throw std::invalid_argument("CostEvaluator: plan cell count mismatch");
        for (int l = 0; l < topo.n_cells; ++l) {
            if (static_cast<int>(plan.shifts[l].size()) != topo.n_users(l))
                throw std::invalid_argument("CostEvaluator: plan user count mismatch");
            for (int k = 0; k < topo.n_users(l); ++k)
                for (int s : scene_.pdp(l, k).support)
                    if (s >= plan.seq_length)
                        throw std::invalid_argument(
                            "CostEvaluator: profile support exceeds the plan's delay grid");
        }
    }

    std::vector<int> groups_in(const AlignmentPlan& plan) const {
        std::vector<int> gs;
        const Topology& topo = scene_.topology();
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k) {
                int g = plan.group(l, k);
                bool seen = false;
                for (int x : gs) seen = seen || (x == g);
                if (!seen) gs.push_back(g);
            }
        return gs;
    }

    // key: [bs, per-user source tap] where -1 marks "contributes nothing
    // here" (different tone group or tap outside the support)
    void build_key(const AlignmentPlan& plan, int group, int bs, int tap,
                   std::vector<int>& key) const {
        const Topology& topo = scene_.topology();
        key[0] = bs;
        int idx = 1;
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k, ++idx) {
                key[idx] = -1;
                if (plan.group(l, k) != group) continue;
                int src = mod_floor(tap + plan.shift(l, k), plan.seq_length);
                if (table_.find(l, k, bs, src) != nullptr) key[idx] = src;
            }
    }

    double residual_trace(const std::vector<int>& key, int bs) {
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;

        const Topology& topo = scene_.topology();
        const int m = table_.n_antennas();
        Mat c_own = Mat::Zero(m, m);
        Mat c_int = Mat::Zero(m, m);
        bool has_own = false, has_int = false;
        int idx = 1;
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k, ++idx) {
                if (key[idx] < 0) continue;
                const Mat* c = table_.find(l, k, bs, key[idx]);
                const double rho = budget_.tone_powers(topo.flat_index(l, k));
                if (l == bs) {
                    c_own += rho * *c;
                    has_own = true;
                } else {
                    c_int += rho * *c;
                    has_int = true;
                }
            }
        double v = 0;
        if (has_own && has_int)
            v = residual_matrix(c_own, {c_int}, budget_.noise_variance).trace().real();
        memo_.emplace(key, v);
        return v;
    }

    const SpatialScene& scene_;
    LinkBudget budget_;
    TapCovarianceTable table_;
    std::unordered_map<std::vector<int>, double, detail::IntVecHash> memo_;
};

/// Throws infeasible_plan unless every same-cell, same-tones user pair
/// satisfies the shifted-support orthogonality condition.
inline void check_intra_cell_orthogonality(const AlignmentPlan& plan, const SpatialScene& scene) {
    plan.validate();
    const Topology& topo = scene.topology();
    const int length = plan.seq_length;
    for (int l = 0; l < topo.n_cells; ++l) {
        for (int u = 0; u < topo.n_users(l); ++u) {
            for (int k = u + 1; k < topo.n_users(l); ++k) {
                if (!plan.same_tones(l, u, l, k)) continue;
                PowerDelayProfile pu = scene.pdp(l, u).folded(length);
                PowerDelayProfile pk = scene.pdp(l, k).folded(length);
                if (!pdp_orthogonal(pu, pk, plan.shift(l, k) - plan.shift(l, u), length))
                    throw infeasible_plan("plan violates intra-cell orthogonality in cell " +
                                          std::to_string(l) + " between users " +
                                          std::to_string(u) + " and " + std::to_string(k));
            }
        }
    }
}

/// Objective value of a feasible plan with per-(BS, tap) breakdown.
inline AlignmentCost alignment_cost(const AlignmentPlan& plan, const SpatialScene& scene,
                                    const LinkBudget& budget, const ArrayConfig& array) {
    check_intra_cell_orthogonality(plan, scene);
    CostEvaluator eval(scene, budget, array);
    return eval.evaluate(plan);
}

/// Exhaustive minimization of the alignment objective over the Cartesian
/// product of per-user shift domains.  Infeasible combinations are skipped;
/// ties resolve to the lexicographically smallest shift tuple.  Refuses grids
/// larger than plan_cap.
inline AlignmentPlan optimize_exhaustive(const SpatialScene& scene, const LinkBudget& budget,
                                         const ArrayConfig& array,
                                         const std::vector<std::vector<std::vector<int>>>& domains,
                                         int seq_length, std::size_t plan_cap = 100000) {
    const Topology& topo = scene.topology();
    if (static_cast<int>(domains.size()) != topo.n_cells)
        throw std::invalid_argument("optimize_exhaustive: domain cell count mismatch");
    std::vector<const std::vector<int>*> flat;
    for (int l = 0; l < topo.n_cells; ++l) {
        if (static_cast<int>(domains[l].size()) != topo.n_users(l))
            throw std::invalid_argument("optimize_exhaustive: domain user count mismatch");
        for (const auto& d : domains[l]) {
            if (d.empty()) throw std::invalid_argument("optimize_exhaustive: empty shift domain");
            flat.push_back(&d);
        }
    }

    std::size_t n_plans = 1;
    for (const auto* d : flat) {
        n_plans *= d->size();
        if (n_plans > plan_cap)
            throw search_too_large(
                "optimize_exhaustive: candidate grid exceeds the cap; use the full-length or "
                "tone-group scheme instead");
    }

    CostEvaluator eval(scene, budget, array);
    AlignmentPlan plan;
    plan.scheme = AlignScheme::exhaustive;
    plan.seq_length = seq_length;
    plan.shifts.resize(topo.n_cells);
    std::vector<std::vector<PowerDelayProfile>> folded(topo.n_cells);
    for (int l = 0; l < topo.n_cells; ++l) {
        plan.shifts[l].resize(topo.n_users(l), 0);
        for (int k = 0; k < topo.n_users(l); ++k)
            folded[l].push_back(scene.pdp(l, k).folded(seq_length));
    }

    std::optional<AlignmentPlan> best;
    double best_cost = 0;
    std::vector<std::size_t> odo(flat.size(), 0);
    for (std::size_t count = 0; count < n_plans; ++count) {
        int idx = 0;
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k, ++idx)
                plan.shifts[l][k] = (*flat[idx])[odo[idx]];

        bool feasible = true;
        for (int l = 0; l < topo.n_cells && feasible; ++l)
            for (int u = 0; u < topo.n_users(l) && feasible; ++u)
                for (int k = u + 1; k < topo.n_users(l) && feasible; ++k)
                    feasible = pdp_orthogonal(folded[l][u], folded[l][k],
                                              plan.shifts[l][k] - plan.shifts[l][u], seq_length);
        if (feasible) {
            double c = eval.total(plan);
            if (!best || c < best_cost) {
                best = plan;
                best_cost = c;
            }
        }

        // lexicographic odometer: last user fastest
        for (int d = static_cast<int>(odo.size()) - 1; d >= 0; --d) {
            if (++odo[d] < flat[d]->size()) break;
            odo[d] = 0;
        }
    }
    if (!best) throw infeasible_plan("optimize_exhaustive: no feasible plan in the domain");
    return *best;
}

/// Full-length scheme: every user transmits a length-N pilot; cell l uses
/// shifts tau_l + k N_cp (mod N), which guarantees intra-cell orthogonality
/// for delay spreads up to N_cp.  The objective is minimized over the B
/// per-cell offsets by enumeration.
inline AlignmentPlan optimize_full_length(const SpatialScene& scene, const LinkBudget& budget,
                                          const ArrayConfig& array, const OfdmConfig& ofdm) {
    const Topology& topo = scene.topology();
    const int n = ofdm.n_tones;
    const int ncp = ofdm.n_cp;
    const int max_users = n / ncp;
    for (int l = 0; l < topo.n_cells; ++l) {
        if (topo.n_users(l) > max_users)
            throw capacity_error("optimize_full_length: more users than N/N_cp shifts in cell " +
                                 std::to_string(l));
        for (int k = 0; k < topo.n_users(l); ++k)
            for (int s : scene.pdp(l, k).support)
                if (s >= ncp)
                    throw std::invalid_argument(
                        "optimize_full_length: delay spread exceeds the cyclic prefix");
    }

    CostEvaluator eval(scene, budget, array);
    AlignmentPlan plan;
    plan.scheme = AlignScheme::full_length;
    plan.seq_length = n;
    plan.shifts.resize(topo.n_cells);
    for (int l = 0; l < topo.n_cells; ++l) plan.shifts[l].resize(topo.n_users(l), 0);

    std::vector<int> tau(topo.n_cells, 0);
    std::optional<AlignmentPlan> best;
    double best_cost = 0;
    bool done = false;
    while (!done) {
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k)
                plan.shifts[l][k] = mod_floor(tau[l] + k * ncp, n);
        double c = eval.total(plan);
        if (!best || c < best_cost) {
            best = plan;
            best_cost = c;
        }
        int d = topo.n_cells - 1;
        while (d >= 0 && ++tau[d] == n) tau[d--] = 0;
        done = d < 0;
    }
    return *best;
}

/// Tone-group scheme: user k of every cell transmits a length-N_cp pilot on
/// comb group k, so intra-cell orthogonality holds by construction and the
/// objective splits into one independent sub-problem per group, each
/// enumerated over [0, N_cp)^B.  An optional greedy swap pass hill-climbs
/// the per-cell user-to-group allocation.
inline AlignmentPlan optimize_tone_groups(const SpatialScene& scene, const LinkBudget& budget,
                                          const ArrayConfig& array, const OfdmConfig& ofdm,
                                          bool greedy_group_swap = false) {
    const Topology& topo = scene.topology();
    const int ncp = ofdm.n_cp;
    if (ofdm.n_tones % ncp != 0)
        throw std::invalid_argument("optimize_tone_groups: N_cp must divide N");
    const int n_groups = ofdm.n_tones / ncp;
    for (int l = 0; l < topo.n_cells; ++l) {
        if (topo.n_users(l) > n_groups)
            throw capacity_error("optimize_tone_groups: more users than tone groups in cell " +
                                 std::to_string(l));
        for (int k = 0; k < topo.n_users(l); ++k)
            for (int s : scene.pdp(l, k).support)
                if (s >= ncp)
                    throw std::invalid_argument(
                        "optimize_tone_groups: delay spread exceeds the cyclic prefix");
    }

    CostEvaluator eval(scene, budget, array);
    AlignmentPlan plan;
    plan.scheme = AlignScheme::tone_group;
    plan.seq_length = ncp;
    plan.shifts.resize(topo.n_cells);
    plan.tone_groups.resize(topo.n_cells);
    for (int l = 0; l < topo.n_cells; ++l) {
        plan.shifts[l].assign(topo.n_users(l), 0);
        plan.tone_groups[l].resize(topo.n_users(l));
        for (int k = 0; k < topo.n_users(l); ++k) plan.tone_groups[l][k] = k;
    }

    // solve one group's sub-problem in place; returns its optimal cost
    auto solve_group = [&](int g) {
        std::vector<std::pair<int, int>> members;
        for (int l = 0; l < topo.n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k)
                if (plan.tone_groups[l][k] == g) members.emplace_back(l, k);
        for (auto [l, k] : members) plan.shifts[l][k] = 0;
        if (members.size() <= 1) return eval.group_total(plan, g);

        std::vector<int> best_shifts(members.size(), 0);
        double best_cost = 0;
        bool first = true;
        std::vector<int> shifts(members.size(), 0);
        bool done = false;
        while (!done) {
            for (std::size_t i = 0; i < members.size(); ++i)
                plan.shifts[members[i].first][members[i].second] = shifts[i];
            double c = eval.group_total(plan, g);
            if (first || c < best_cost) {
                best_shifts = shifts;
                best_cost = c;
                first = false;
            }
            int d = static_cast<int>(shifts.size()) - 1;
            while (d >= 0 && ++shifts[d] == ncp) shifts[d--] = 0;
            done = d < 0;
        }
        for (std::size_t i = 0; i < members.size(); ++i)
            plan.shifts[members[i].first][members[i].second] = best_shifts[i];
        return best_cost;
    };

    std::vector<double> group_cost(n_groups, 0.0);
    for (int g = 0; g < n_groups; ++g) group_cost[g] = solve_group(g);

    if (greedy_group_swap) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (int l = 0; l < topo.n_cells; ++l) {
                for (int k1 = 0; k1 < topo.n_users(l); ++k1) {
                    for (int k2 = k1 + 1; k2 < topo.n_users(l); ++k2) {
                        const int g1 = plan.tone_groups[l][k1];
                        const int g2 = plan.tone_groups[l][k2];
                        if (g1 == g2) continue;
                        const AlignmentPlan saved = plan;
                        std::swap(plan.tone_groups[l][k1], plan.tone_groups[l][k2]);
                        double c1 = solve_group(g1);
                        double c2 = solve_group(g2);
                        if (c1 + c2 + 1e-12 < group_cost[g1] + group_cost[g2]) {
                            group_cost[g1] = c1;
                            group_cost[g2] = c2;
                            improved = true;
                        } else {
                            plan = saved;
                        }
                    }
                }
            }
        }
    }
    return plan;
}

}  // namespace pdpalign

#endif  // PDPALIGN_ALIGNMENT_HPP
