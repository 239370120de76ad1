// SPDX-License-Identifier: Apache-2.0
//
// pdpalign: pilot design and channel estimation for multi-cell massive MIMO OFDM
//
// Cyclic-shift assignment plans: which shift (and, for comb pilots, which
// tone group) every user transmits with.

#ifndef PDPALIGN_PLAN_HPP
#define PDPALIGN_PLAN_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdpalign/common.hpp"

namespace pdpalign {

enum class AlignScheme { exhaustive, full_length, tone_group };

inline std::string to_string(AlignScheme s) {
    switch (s) {
        case AlignScheme::exhaustive: return "exhaustive";
        case AlignScheme::full_length: return "full_length";
        case AlignScheme::tone_group: return "tone_group";
    }
    throw std::logic_error("unknown scheme");
}

inline AlignScheme align_scheme_from_string(const std::string& s) {
    if (s == "exhaustive") return AlignScheme::exhaustive;
    if (s == "full_length") return AlignScheme::full_length;
    if (s == "tone_group") return AlignScheme::tone_group;
    throw std::invalid_argument("unknown alignment scheme: " + s);
}

/// Map (cell, user) -> cyclic shift, plus per-user tone-group indices when
/// the plan uses length-N_cp comb pilots.  seq_length is the pilot sequence
/// length L the shifts are taken modulo (N for full-length pilots, N_cp for
/// comb pilots).
struct AlignmentPlan {
    AlignScheme scheme = AlignScheme::exhaustive;
    int seq_length = 0;                         // L
    std::vector<std::vector<int>> shifts;       // [cell][user] -> tau
    std::vector<std::vector<int>> tone_groups;  // [cell][user] -> group; empty if ungrouped

    int n_cells() const { return static_cast<int>(shifts.size()); }

    int shift(int cell, int user) const { return shifts.at(cell).at(user); }

    bool grouped() const { return !tone_groups.empty(); }

    int group(int cell, int user) const {
        return grouped() ? tone_groups.at(cell).at(user) : 0;
    }

    /// Users on the same set of tones can interfere; users in different tone
    /// groups cannot.
    bool same_tones(int cell_a, int user_a, int cell_b, int user_b) const {
        return group(cell_a, user_a) == group(cell_b, user_b);
    }

    void validate() const {
        if (seq_length < 1) throw std::invalid_argument("AlignmentPlan: seq_length must be >= 1");
        if (shifts.empty()) throw std::invalid_argument("AlignmentPlan: no cells");
        if (grouped() && tone_groups.size() != shifts.size())
            throw std::invalid_argument("AlignmentPlan: tone_groups shape mismatch");
        for (std::size_t l = 0; l < shifts.size(); ++l) {
            if (shifts[l].empty()) throw std::invalid_argument("AlignmentPlan: empty cell");
            if (grouped() && tone_groups[l].size() != shifts[l].size())
                throw std::invalid_argument("AlignmentPlan: tone_groups shape mismatch");
        }
    }
};

inline void to_json(nlohmann::json& j, const AlignmentPlan& p) {
    j = nlohmann::json{{"scheme", to_string(p.scheme)},
                       {"seq_length", p.seq_length},
                       {"shifts", p.shifts}};
    if (p.grouped()) j["tone_groups"] = p.tone_groups;
}

inline void from_json(const nlohmann::json& j, AlignmentPlan& p) {
    p.scheme = align_scheme_from_string(j.at("scheme").get<std::string>());
    p.seq_length = j.at("seq_length").get<int>();
    p.shifts = j.at("shifts").get<std::vector<std::vector<int>>>();
    if (j.contains("tone_groups"))
        p.tone_groups = j.at("tone_groups").get<std::vector<std::vector<int>>>();
    else
        p.tone_groups.clear();
    p.validate();
}

}  // namespace pdpalign

#endif  // PDPALIGN_PLAN_HPP
