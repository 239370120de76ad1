// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// Monte-Carlo experiment harness: per run it draws a fresh spatial scene,
// aligns the co-pilot users' PDPs (or not, per experimental arm), realizes
// channels and noise, estimates the aggregate channels with the per-tap
// spatial MMSE filter and records NMSE and downlink sum spectral efficiency.
// Arms: BA (best alignment via the tone-group optimizer), NA (no alignment,
// every user on shift 0) and NI (inter-cell interference removed).

#ifndef PDPALIGN_EXPERIMENT_HPP
#define PDPALIGN_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pdpalign/alignment.hpp"
#include "pdpalign/common.hpp"
#include "pdpalign/covariance.hpp"
#include "pdpalign/estimation.hpp"
#include "pdpalign/ofdm.hpp"
#include "pdpalign/pdp.hpp"
#include "pdpalign/plan.hpp"
#include "pdpalign/scene.hpp"

namespace pdpalign {

enum class SchemeArm { BA, NA, NI };

inline std::string to_string(SchemeArm a) {
    switch (a) {
        case SchemeArm::BA: return "BA";
        case SchemeArm::NA: return "NA";
        case SchemeArm::NI: return "NI";
    }
    throw std::logic_error("unknown scheme arm");
}

inline SchemeArm scheme_arm_from_string(const std::string& s) {
    if (s == "BA") return SchemeArm::BA;
    if (s == "NA") return SchemeArm::NA;
    if (s == "NI") return SchemeArm::NI;
    throw std::invalid_argument("unknown scheme arm: " + s);
}

enum class OutputFormat { csv, json };

struct ExperimentConfig {
    OfdmConfig ofdm;
    ArrayConfig array;
    Topology topology;
    PdpKind pdp_kind = PdpKind::exponential;
    std::vector<int> sparse_support;  // used when pdp_kind == sparse
    double as_deg = 10.0;
    double snr_db = 10.0;
    int n_runs = 1000;
    int realizations_per_run = 10;
    std::vector<SchemeArm> schemes = {SchemeArm::BA, SchemeArm::NA, SchemeArm::NI};
    std::uint64_t master_seed = 20260810;
    int q_subpaths = 20;
    double total_power = 1.0;
    double dl_power = 1.0;

    // Two neighbouring cells with one cell-edge user each, overlapping
    // visibility regions, LTE-style numerology and an M=50 half-wavelength ULA.
    static ExperimentConfig defaults() {
        ExperimentConfig c;
        c.ofdm = OfdmConfig::lte_default();
        c.array = ArrayConfig::default_ula();
        c.topology.n_cells = 2;
        c.topology.users_per_cell = {1, 1};
        c.topology.shared_pairs = {{UserRef{0, 0}, UserRef{1, 0}, {}}};
        return c;
    }

    void validate() const {
        ofdm.validate();
        array.validate();
        topology.validate();
        if (ofdm.n_tones % ofdm.n_cp != 0)
            throw std::invalid_argument("ExperimentConfig: N_cp must divide N");
        const int n_groups = ofdm.tone_groups();
        for (int k : topology.users_per_cell)
            if (k > n_groups)
                throw std::invalid_argument("ExperimentConfig: more users than tone groups");
        if (n_runs < 1) throw std::invalid_argument("ExperimentConfig: n_runs must be >= 1");
        if (realizations_per_run < 1)
            throw std::invalid_argument("ExperimentConfig: realizations_per_run must be >= 1");
        if (schemes.empty()) throw std::invalid_argument("ExperimentConfig: no schemes selected");
        if (q_subpaths < 1) throw std::invalid_argument("ExperimentConfig: q_subpaths must be >= 1");
        if (!(total_power > 0) || !(dl_power > 0))
            throw std::invalid_argument("ExperimentConfig: powers must be > 0");
        if (as_deg < 0) throw std::invalid_argument("ExperimentConfig: angle spread must be >= 0");
    }

    double as_rad() const { return as_deg * kPi / 180.0; }
    double noise_variance() const { return std::pow(10.0, -snr_db / 10.0); }
};

inline std::string to_string(PdpKind k) {
    switch (k) {
        case PdpKind::uniform: return "uniform";
        case PdpKind::exponential: return "exponential";
        case PdpKind::sparse: return "sparse";
    }
    throw std::logic_error("unknown pdp kind");
}

inline PdpKind pdp_kind_from_string(const std::string& s) {
    if (s == "uniform") return PdpKind::uniform;
    if (s == "exponential") return PdpKind::exponential;
    if (s == "sparse") return PdpKind::sparse;
    throw std::invalid_argument("unknown pdp kind: " + s);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : c.topology.shared_pairs)
        pairs.push_back({{"user_a", {p.user_a.cell, p.user_a.user}},
                         {"user_b", {p.user_b.cell, p.user_b.user}},
                         {"tap_map", p.tap_map}});
    j = nlohmann::json{
        {"ofdm",
         {{"n_tones", c.ofdm.n_tones},
          {"n_cp", c.ofdm.n_cp},
          {"symbol_duration", c.ofdm.symbol_duration}}},
        {"array",
         {{"n_antennas", c.array.n_antennas},
          {"spacing_over_wavelength", c.array.spacing_over_wavelength}}},
        {"topology",
         {{"n_cells", c.topology.n_cells},
          {"users_per_cell", c.topology.users_per_cell},
          {"shared_scatterer_pairs", pairs}}},
        {"pdp_kind", to_string(c.pdp_kind)},
        {"as_deg", c.as_deg},
        {"snr_db", c.snr_db},
        {"n_runs", c.n_runs},
        {"realizations_per_run", c.realizations_per_run},
        {"master_seed", c.master_seed},
        {"q_subpaths", c.q_subpaths},
        {"total_power", c.total_power},
        {"dl_power", c.dl_power}};
    if (!c.sparse_support.empty()) j["sparse_support"] = c.sparse_support;
    nlohmann::json arms = nlohmann::json::array();
    for (SchemeArm a : c.schemes) arms.push_back(to_string(a));
    j["schemes"] = arms;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c = ExperimentConfig::defaults();
    if (j.contains("ofdm")) {
        const auto& o = j.at("ofdm");
        c.ofdm = OfdmConfig::make(o.value("n_tones", 128), o.value("n_cp", 8),
                                  o.value("symbol_duration", 66.67e-6));
    }
    if (j.contains("array")) {
        const auto& a = j.at("array");
        c.array = ArrayConfig::make(a.value("n_antennas", 50),
                                    a.value("spacing_over_wavelength", 0.5));
    }
    if (j.contains("topology")) {
        const auto& t = j.at("topology");
        c.topology.n_cells = t.value("n_cells", 2);
        if (t.contains("users_per_cell")) {
            if (t.at("users_per_cell").is_number())
                c.topology.users_per_cell.assign(c.topology.n_cells,
                                                 t.at("users_per_cell").get<int>());
            else
                c.topology.users_per_cell = t.at("users_per_cell").get<std::vector<int>>();
        } else {
            c.topology.users_per_cell.assign(c.topology.n_cells, 1);
        }
        c.topology.shared_pairs.clear();
        if (t.contains("shared_scatterer_pairs")) {
            for (const auto& p : t.at("shared_scatterer_pairs")) {
                SharedScattererPair sp;
                auto a = p.at("user_a").get<std::vector<int>>();
                auto b = p.at("user_b").get<std::vector<int>>();
                if (a.size() != 2 || b.size() != 2)
                    throw std::invalid_argument("config: shared pair user refs must be [cell,user]");
                sp.user_a = {a[0], a[1]};
                sp.user_b = {b[0], b[1]};
                sp.tap_map = p.value("tap_map", std::vector<int>{});
                c.topology.shared_pairs.push_back(std::move(sp));
            }
        }
    }
    c.pdp_kind = pdp_kind_from_string(j.value("pdp_kind", std::string("exponential")));
    c.sparse_support = j.value("sparse_support", std::vector<int>{});
    c.as_deg = j.value("as_deg", 10.0);
    c.snr_db = j.value("snr_db", 10.0);
    c.n_runs = j.value("n_runs", 1000);
    c.realizations_per_run = j.value("realizations_per_run", 10);
    c.master_seed = j.value("master_seed", static_cast<std::uint64_t>(20260810));
    c.q_subpaths = j.value("q_subpaths", 20);
    c.total_power = j.value("total_power", 1.0);
    c.dl_power = j.value("dl_power", 1.0);
    if (j.contains("schemes")) {
        c.schemes.clear();
        for (const auto& s : j.at("schemes"))
            c.schemes.push_back(scheme_arm_from_string(s.get<std::string>()));
    }
    c.validate();
}

struct RunRecord {
    int run_index = 0;
    SchemeArm scheme = SchemeArm::BA;
    double nmse_linear = 0;
    double nmse_db = 0;
    double sum_se = 0;
    AlignmentPlan plan;
};

/// Total squared estimation error normalized by total channel energy, summed
/// over matching (estimate, truth) pairs.
inline double nmse(const std::vector<Mat>& estimates, const std::vector<Mat>& truths) {
    if (estimates.size() != truths.size())
        throw std::invalid_argument("nmse: estimate/truth counts differ");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (estimates[i].rows() != truths[i].rows() || estimates[i].cols() != truths[i].cols())
            throw std::invalid_argument("nmse: estimate/truth shapes differ");
        num += (estimates[i] - truths[i]).squaredNorm();
        den += truths[i].squaredNorm();
    }
    if (den == 0) throw std::domain_error("nmse: undefined for zero-energy truth");
    return num / den;
}

/// One user's view for the downlink evaluation: matched-filter precoders are
/// built per tone from the estimated frequency response; users sharing a
/// tone group receive each other's precoded leakage.
struct SeUser {
    int serving_bs = 0;
    int tone_group = 0;
    Mat est_taps;                // M x L, estimated taps toward the serving BS
    std::vector<Mat> true_taps;  // per BS, M x L true taps
};

/// Sum over users of the per-tone mean of log2(1 + SINR) under per-tone
/// matched-filter precoding with unit-power precoders and TDD reciprocity.
/// The SINR bookkeeping is identical for every experimental arm; arms differ
/// only through the quality of the estimates fed in.
inline double sum_spectral_efficiency(const std::vector<SeUser>& users, double dl_power,
                                      double noise_var) {
    if (users.empty()) return 0.0;
    if (!(dl_power > 0) || !(noise_var > 0))
        throw std::invalid_argument("sum_spectral_efficiency: powers must be > 0");
    const int length = static_cast<int>(users.front().est_taps.cols());
    const Mat f = unitary_dft(length);

    std::vector<Mat> precoder(users.size());
    std::vector<Eigen::VectorXd> pnorm(users.size());
    std::vector<std::vector<Mat>> true_freq(users.size());
    for (std::size_t u = 0; u < users.size(); ++u) {
        if (static_cast<int>(users[u].est_taps.cols()) != length)
            throw std::invalid_argument("sum_spectral_efficiency: tap grid mismatch");
        if (users[u].serving_bs < 0 ||
            users[u].serving_bs >= static_cast<int>(users[u].true_taps.size()))
            throw std::invalid_argument("sum_spectral_efficiency: serving BS out of range");
        Mat est_freq = users[u].est_taps * f.transpose();
        precoder[u] = est_freq.conjugate();
        pnorm[u] = precoder[u].colwise().norm();
        true_freq[u].reserve(users[u].true_taps.size());
        for (const Mat& h : users[u].true_taps) true_freq[u].push_back(h * f.transpose());
    }

    double se = 0;
    for (std::size_t u = 0; u < users.size(); ++u) {
        for (int t = 0; t < length; ++t) {
            double sig = 0;
            if (pnorm[u](t) > 0) {
                cxd gain = (true_freq[u][users[u].serving_bs].col(t).transpose() *
                            (precoder[u].col(t) / pnorm[u](t)))(0);
                sig = dl_power * std::norm(gain);
            }
            double leak = 0;
            for (std::size_t w = 0; w < users.size(); ++w) {
                if (w == u || users[w].tone_group != users[u].tone_group) continue;
                if (pnorm[w](t) <= 0) continue;
                cxd gain = (true_freq[u][users[w].serving_bs].col(t).transpose() *
                            (precoder[w].col(t) / pnorm[w](t)))(0);
                leak += dl_power * std::norm(gain);
            }
            se += std::log2(1.0 + sig / (noise_var + leak)) / length;
        }
    }
    return se;
}

namespace detail {

// seed stream tags
inline constexpr std::uint64_t kSceneStream = 1;
inline constexpr std::uint64_t kCirStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;

inline AlignmentPlan fixed_zero_plan(const Topology& topo, const OfdmConfig& ofdm) {
    AlignmentPlan plan;
    plan.scheme = AlignScheme::tone_group;
    plan.seq_length = ofdm.n_cp;
    plan.shifts.resize(topo.n_cells);
    plan.tone_groups.resize(topo.n_cells);
    for (int l = 0; l < topo.n_cells; ++l) {
        plan.shifts[l].assign(topo.n_users(l), 0);
        plan.tone_groups[l].resize(topo.n_users(l));
        for (int k = 0; k < topo.n_users(l); ++k) plan.tone_groups[l][k] = k;
    }
    return plan;
}

inline std::vector<RunRecord> simulate_run(const ExperimentConfig& cfg,
                                           const std::vector<std::vector<PowerDelayProfile>>& pdps,
                                           const LinkBudget& budget, int run_index) {
    const Topology& topo = cfg.topology;
    const int n_cells = topo.n_cells;
    const int length = cfg.ofdm.n_cp;  // comb-pilot delay grid
    const double noise_var = budget.noise_variance;

    SpatialScene scene = draw_scene(
        derive_seed(cfg.master_seed, {kSceneStream, static_cast<std::uint64_t>(run_index)}),
        topo, cfg.as_rad(), pdps, cfg.q_subpaths);
    TapCovarianceTable table(scene, cfg.array);

    std::vector<AlignmentPlan> plans;
    plans.reserve(cfg.schemes.size());
    for (SchemeArm arm : cfg.schemes) {
        if (arm == SchemeArm::BA)
            plans.push_back(optimize_tone_groups(scene, budget, cfg.array, cfg.ofdm));
        else
            plans.push_back(fixed_zero_plan(topo, cfg.ofdm));
    }

    // tone-group membership per arm, from that arm's plan
    const int n_groups = cfg.ofdm.tone_groups();
    std::vector<std::vector<std::vector<std::pair<int, int>>>> members(cfg.schemes.size());
    std::vector<char> group_used(n_groups, 0);
    for (std::size_t ai = 0; ai < cfg.schemes.size(); ++ai) {
        members[ai].resize(n_groups);
        for (int l = 0; l < n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k) {
                int g = plans[ai].group(l, k);
                if (g < 0 || g >= n_groups)
                    throw std::logic_error("simulate_run: plan group index out of range");
                members[ai][g].emplace_back(l, k);
                group_used[g] = 1;
            }
    }

    // per (arm, group, bs): MMSE filters for each aggregate tap, built once
    // per geometry and reused across realizations
    struct GroupEstimator {
        int own_user = -1;  // user index within the BS's cell, -1 if none
        std::vector<PerTapFilter> filters;
    };
    const int m = cfg.array.n_antennas;
    const Mat zero = Mat::Zero(m, m);
    std::vector<std::vector<std::vector<GroupEstimator>>> est(cfg.schemes.size());
    for (std::size_t ai = 0; ai < cfg.schemes.size(); ++ai) {
        const AlignmentPlan& plan = plans[ai];
        const bool with_interference = cfg.schemes[ai] != SchemeArm::NI;
        est[ai].resize(n_groups);
        for (int g = 0; g < n_groups; ++g) {
            if (members[ai][g].empty()) continue;
            est[ai][g].resize(n_cells);
            for (int b = 0; b < n_cells; ++b) {
                GroupEstimator& ge = est[ai][g][b];
                for (auto [l, k] : members[ai][g])
                    if (l == b) ge.own_user = k;
                if (ge.own_user < 0) continue;
                ge.filters.reserve(length);
                for (int n = 0; n < length; ++n) {
                    Mat c_own = zero;
                    Mat c_int = zero;
                    for (auto [l, k] : members[ai][g]) {
                        int src = mod_floor(n + plan.shift(l, k), length);
                        const Mat* c = table.find(l, k, b, src);
                        if (c == nullptr) continue;
                        double rho = budget.tone_powers(topo.flat_index(l, k));
                        if (l == b)
                            c_own += rho * *c;
                        else if (with_interference)
                            c_int += rho * *c;
                    }
                    ge.filters.emplace_back(std::move(c_own), std::vector<Mat>{std::move(c_int)},
                                            noise_var);
                }
            }
        }
    }

    // accumulators
    std::vector<std::vector<Mat>> all_est(cfg.schemes.size()), all_truth(cfg.schemes.size());
    std::vector<double> se_acc(cfg.schemes.size(), 0.0);

    std::vector<std::vector<std::vector<Mat>>> cir(n_cells);  // [l][k][b], M x N
    for (int l = 0; l < n_cells; ++l) cir[l].resize(topo.n_users(l));

    for (int j = 0; j < cfg.realizations_per_run; ++j) {
        for (int l = 0; l < n_cells; ++l)
            for (int k = 0; k < topo.n_users(l); ++k) {
                cir[l][k].clear();
                for (int b = 0; b < n_cells; ++b)
                    cir[l][k].push_back(realize_cir(
                        scene, l, k, b, cfg.array,
                        derive_seed(cfg.master_seed,
                                    {kCirStream, static_cast<std::uint64_t>(run_index),
                                     static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(l),
                                     static_cast<std::uint64_t>(k),
                                     static_cast<std::uint64_t>(b)})));
            }

        std::vector<std::vector<Mat>> noise(n_cells);  // [b][g], M x L
        for (int b = 0; b < n_cells; ++b) {
            noise[b].resize(n_groups);
            for (int g = 0; g < n_groups; ++g) {
                if (!group_used[g]) continue;
                Rng rng(derive_seed(cfg.master_seed,
                                    {kNoiseStream, static_cast<std::uint64_t>(run_index),
                                     static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(b),
                                     static_cast<std::uint64_t>(g)}));
                Mat w(m, length);
                for (int n = 0; n < length; ++n)
                    for (int mm = 0; mm < m; ++mm) w(mm, n) = rng.cgaussian(noise_var);
                noise[b][g] = std::move(w);
            }
        }

        for (std::size_t ai = 0; ai < cfg.schemes.size(); ++ai) {
            const SchemeArm arm = cfg.schemes[ai];
            const AlignmentPlan& plan = plans[ai];
            std::vector<SeUser> se_users;
            for (int g = 0; g < n_groups; ++g) {
                if (members[ai][g].empty()) continue;
                for (int b = 0; b < n_cells; ++b) {
                    const GroupEstimator& ge = est[ai][g][b];
                    if (ge.own_user < 0) continue;
                    const int k_own = ge.own_user;
                    const double rho_own = budget.tone_powers(topo.flat_index(b, k_own));

                    Mat gmat = noise[b][g];
                    Mat truth = Mat::Zero(m, length);
                    for (int n = 0; n < length; ++n) {
                        for (auto [l, k] : members[ai][g]) {
                            if (arm == SchemeArm::NI && l != b) continue;
                            int src = mod_floor(n + plan.shift(l, k), length);
                            double rho = budget.tone_powers(topo.flat_index(l, k));
                            gmat.col(n) += std::sqrt(rho) * cir[l][k][b].col(src);
                            if (l == b) truth.col(n) += std::sqrt(rho) * cir[l][k][b].col(src);
                        }
                    }
                    Mat hhat(m, length);
                    for (int n = 0; n < length; ++n) hhat.col(n) = ge.filters[n].estimate(gmat.col(n));
                    all_est[ai].push_back(hhat);
                    all_truth[ai].push_back(truth);

                    // deshift and rescale the aggregate estimate into the
                    // served user's tap estimate for the DL evaluation
                    SeUser su;
                    su.serving_bs = b;
                    su.tone_group = g;
                    su.est_taps.resize(m, length);
                    int tau = plan.shift(b, k_own);
                    for (int s = 0; s < length; ++s)
                        su.est_taps.col(s) = hhat.col(mod_floor(s - tau, length)) / std::sqrt(rho_own);
                    su.true_taps.reserve(n_cells);
                    for (int bb = 0; bb < n_cells; ++bb)
                        su.true_taps.push_back(cir[b][k_own][bb].leftCols(length));
                    se_users.push_back(std::move(su));
                }
            }
            se_acc[ai] += sum_spectral_efficiency(se_users, cfg.dl_power, noise_var);
        }
    }

    std::vector<RunRecord> records;
    records.reserve(cfg.schemes.size());
    for (std::size_t ai = 0; ai < cfg.schemes.size(); ++ai) {
        RunRecord rec;
        rec.run_index = run_index;
        rec.scheme = cfg.schemes[ai];
        rec.nmse_linear = nmse(all_est[ai], all_truth[ai]);
        rec.nmse_db = 10.0 * std::log10(rec.nmse_linear);
        rec.sum_se = se_acc[ai] / cfg.realizations_per_run;
        rec.plan = plans[ai];
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace detail

/// Per-user PDPs implied by the config (one shared shape, per-user copies).
inline std::vector<std::vector<PowerDelayProfile>> build_pdps(const ExperimentConfig& cfg) {
    std::vector<std::vector<PowerDelayProfile>> pdps(cfg.topology.n_cells);
    for (int l = 0; l < cfg.topology.n_cells; ++l)
        for (int k = 0; k < cfg.topology.n_users(l); ++k)
            pdps[l].push_back(make_pdp(cfg.pdp_kind, cfg.ofdm.n_tones, cfg.ofdm.n_cp,
                                       cfg.total_power,
                                       cfg.sparse_support.empty() ? nullptr : &cfg.sparse_support));
    return pdps;
}

inline LinkBudget build_budget(const ExperimentConfig& cfg) {
    LinkBudget budget;
    budget.tone_powers = Eigen::VectorXd::Ones(cfg.topology.total_users());
    budget.noise_variance = cfg.noise_variance();
    return budget;
}

/// Scene of run `run_index` of the configured experiment.
inline SpatialScene scene_for_run(const ExperimentConfig& cfg, int run_index) {
    return draw_scene(
        derive_seed(cfg.master_seed,
                    {detail::kSceneStream, static_cast<std::uint64_t>(run_index)}),
        cfg.topology, cfg.as_rad(), build_pdps(cfg), cfg.q_subpaths);
}

/// Run the configured Monte-Carlo experiment.  Runs are independent and
/// execute in parallel on derived per-run seed streams; the output is
/// ordered by run index and deterministic for a given config and seed
/// regardless of thread count.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int n_threads = 0) {
    cfg.validate();
    const std::vector<std::vector<PowerDelayProfile>> pdps = build_pdps(cfg);
    const LinkBudget budget = build_budget(cfg);

    std::vector<std::vector<RunRecord>> per_run(cfg.n_runs);
    int workers = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, cfg.n_runs));

    // a failed run aborts the experiment, identified by its index
    auto one_run = [&](int r) {
        try {
            per_run[r] = detail::simulate_run(cfg, pdps, budget, r);
        } catch (const std::exception& e) {
            throw std::runtime_error("run " + std::to_string(r) + " failed: " + e.what());
        }
    };

    if (workers == 1) {
        for (int r = 0; r < cfg.n_runs; ++r) one_run(r);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto work = [&] {
            for (;;) {
                int r = next.fetch_add(1);
                if (r >= cfg.n_runs) return;
                try {
                    one_run(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    std::vector<RunRecord> records;
    records.reserve(static_cast<std::size_t>(cfg.n_runs) * cfg.schemes.size());
    for (auto& rr : per_run)
        for (auto& rec : rr) records.push_back(std::move(rec));
    return records;
}

namespace detail {

inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

/// Nearest-rank percentiles 1..99 of the given samples.
inline std::vector<double> percentile_table(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("percentile_table: no samples");
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    std::vector<double> out(99);
    for (int p = 1; p <= 99; ++p) {
        int idx = static_cast<int>(std::ceil(p * n / 100.0)) - 1;
        out[p - 1] = values[std::clamp(idx, 0, n - 1)];
    }
    return out;
}

inline double median(std::vector<double> values) {
    return percentile_table(std::move(values))[49];
}

inline void write_csv(const std::vector<RunRecord>& records, std::ostream& os) {
    std::vector<const RunRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
        if (a->run_index != b->run_index) return a->run_index < b->run_index;
        return static_cast<int>(a->scheme) < static_cast<int>(b->scheme);
    });
    os << "run,scheme,nmse_db,sum_se\n";
    for (const RunRecord* r : sorted)
        os << r->run_index << ',' << to_string(r->scheme) << ',' << detail::fmt9(r->nmse_db)
           << ',' << detail::fmt9(r->sum_se) << '\n';
}

inline nlohmann::json summary_json(const std::vector<RunRecord>& records,
                                   const ExperimentConfig& cfg) {
    nlohmann::json per_scheme;
    for (SchemeArm arm : cfg.schemes) {
        std::vector<double> db, se;
        for (const auto& r : records)
            if (r.scheme == arm) {
                db.push_back(r.nmse_db);
                se.push_back(r.sum_se);
            }
        if (db.empty()) continue;
        per_scheme[to_string(arm)] = {{"nmse_db", percentile_table(db)},
                                      {"sum_se", percentile_table(se)}};
    }
    nlohmann::json j;
    to_json(j["config"], cfg);
    j["master_seed"] = cfg.master_seed;
    j["percentiles"] = per_scheme;
    return j;
}

/// Persist records: CSV with columns run,scheme,nmse_db,sum_se (stable row
/// order), or a JSON summary with the 1..99 percentile table per scheme and
/// the config echo.
inline void emit_results(const std::vector<RunRecord>& records, const ExperimentConfig& cfg,
                         const std::string& path, OutputFormat format) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("emit_results: cannot open " + path + " for writing");
    if (format == OutputFormat::csv) {
        write_csv(records, os);
    } else {
        os << summary_json(records, cfg).dump(2) << '\n';
    }
    os.flush();
    if (!os) throw std::runtime_error("emit_results: write failed for " + path);
}

}  // namespace pdpalign

#endif  // PDPALIGN_EXPERIMENT_HPP
