#pragma once

#include "checklist_rl/advantage.hpp"

namespace checklist_rl {

// Naive re-derivation of every reward and advantage formula from the raw
// latched traces, with nested loops and no incremental state. Serves as the
// oracle the production path is checked against; only instances within
// (G <= 8, <= 4 turns, <= 6 steps, <= 6 items) are accepted.
struct BruteForceRewards {
    std::vector<std::map<int, std::vector<std::vector<char>>>> flip;     // i -> t -> [s][c]
    std::vector<std::map<int, std::vector<std::vector<char>>>> backfill; // i -> t -> [s][c]
    std::vector<std::map<int, double>> turn_rewards;                     // i -> t -> R_t
    std::vector<double> trajectory;                                      // i -> R
};

BruteForceRewards brute_force_rewards(const GroupRewards& group);

AdvantageTable brute_force_advantages(const GroupRewards& group, Granularity granularity,
                                      const NormalizerSpec& spec);

} // namespace checklist_rl
