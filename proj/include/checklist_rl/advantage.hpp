#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "checklist_rl/reward.hpp"

namespace checklist_rl {

enum class Granularity { Trajectory, Turn, Step };

const char* granularity_name(Granularity g);
Granularity granularity_from_name(const std::string& name);

struct NormalizerSpec {
    enum class Kind { StdDev, Constant1 };
    Kind kind = Kind::Constant1; // the default; StdDev kept for ablation
    double epsilon = 1e-8;       // StdDev only
};

NormalizerSpec normalizer_from_name(const std::string& name);

struct TurnOutcome {
    SatisfactionTrace trace;
    RewardGrid grid;
    double reward = 0.0; // R_t
};

struct GroupRewards {
    int group_size = 0;
    std::vector<double> trajectory;                            // R_i, length G
    std::map<int, std::vector<std::pair<int, double>>> per_turn; // t -> [(rollout, R_t)], reached only
    std::map<int, Checklist> checklists;
    std::vector<std::map<int, TurnOutcome>> rollouts;          // i -> t -> outcome
    std::vector<int> denominators;                             // L_den used per rollout

    // 1 iff item c was flip-rewarded in turn t; not-reached counts as 0.
    std::vector<char> step_satisfied(int turn, const std::string& item_id) const;
};

GroupRewards assemble_group_rewards(const std::map<int, Checklist>& checklists,
                                    const std::vector<std::map<int, SatisfactionTrace>>& rollout_traces,
                                    int reference_turns,
                                    DenominatorMode mode = DenominatorMode::ReferenceTurns);

// Advantage per (rollout, turn, agent-action step) span. Trajectory
// granularity broadcasts one value per rollout; Turn one per (rollout, turn).
struct AdvantageTable {
    Granularity granularity = Granularity::Trajectory;
    std::map<std::tuple<int, int, int>, double> values;
    std::vector<std::string> flags; // zeroed turns, epsilon denominators

    double at(int rollout, int turn, int step) const;
};

// Returns the denominator: 1.0 for Constant1, population standard deviation
// plus epsilon for StdDev.
double normalize(const std::vector<double>& values, const NormalizerSpec& spec);

AdvantageTable trajectory_advantage(const GroupRewards& group, const NormalizerSpec& spec);
AdvantageTable turn_advantage(const GroupRewards& group, const NormalizerSpec& spec);

// Fraction of rollouts in which the item earned its flip reward in this turn.
double step_baseline(const GroupRewards& group, int turn, const std::string& item_id);

// Item-wise (backfilled reward - baseline) / F_norm, aggregated over the
// eligible set by checklist weight. Steps with an empty eligible set get 0.
AdvantageTable step_advantage(const GroupRewards& group, const NormalizerSpec& spec);

AdvantageTable compute_advantages(const GroupRewards& group, Granularity granularity,
                                  const NormalizerSpec& spec);

// Tabular export: group id, rollout, turn, step, granularity, advantage.
std::string advantage_table_tsv(const AdvantageTable& table, const std::string& group_id);

} // namespace checklist_rl
