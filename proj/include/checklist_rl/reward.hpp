#pragma once

#include <map>
#include <string>
#include <vector>

#include "checklist_rl/checklist.hpp"
#include "checklist_rl/judge.hpp"

namespace checklist_rl {

// Per-item satisfaction as a function of judged state. Index 0 is the
// pre-turn state (all false); index k is the state after agent-action step k.
// States are latched: once true, true at every later index.
struct SatisfactionTrace {
    int turn_index = 0;
    std::map<std::string, std::vector<char>> item_states;

    int step_count() const; // number of judged agent-action steps
    bool state_at(const std::string& item_id, int index) const;
    bool finally_satisfied(const std::string& item_id) const;
};

// flip[s][c] / backfill[s][c] with s in 1..steps and c the checklist item
// position; both stored dense, step-major.
struct RewardGrid {
    int turn_index = 0;
    std::vector<std::string> item_ids; // checklist order
    std::vector<std::vector<char>> flip;
    std::vector<std::vector<char>> backfill;

    int step_count() const { return static_cast<int>(flip.size()); }
    bool flip_at(int step, const std::string& item_id) const;     // step 1-based
    bool backfill_at(int step, const std::string& item_id) const; // step 1-based
    bool item_flipped(const std::string& item_id) const;
};

struct RewardSummary {
    std::map<int, double> per_turn; // t -> R_t
    double trajectory = 0.0;        // R
    int denominator_turns = 1;      // L_den
};

enum class DenominatorMode {
    ReferenceTurns, // penalizes early termination against the reference length (default)
    RealizedTurns,
};

// Latches raw judge labels into a monotone trace. Verdicts must share the
// turn and be step-ordered; label key sets must agree (InconsistentChecklist).
SatisfactionTrace latch_trace(const std::vector<JudgeVerdict>& verdicts);

// Tolerates an empty verdict list by taking the item universe from the
// checklist; used for turns that ended before any agent action was judged.
SatisfactionTrace latch_trace(const Checklist& checklist, const std::vector<JudgeVerdict>& verdicts);

// Flip reward: 1 at the step where an item switches unsatisfied->satisfied
// with every dependency already satisfied in the pre-step state.
// Backfill extends an eventual flip to every earlier step whose pre-state had
// all dependencies satisfied and the item still unsatisfied; used only by
// step-level advantages.
RewardGrid compute_reward_grid(const SatisfactionTrace& trace, const Checklist& checklist);

std::vector<std::vector<char>> flip_rewards(const SatisfactionTrace& trace, const Checklist& checklist);
std::vector<std::vector<char>> backfill_rewards(const SatisfactionTrace& trace, const Checklist& checklist);

// R_t = sum_s sum_c w_c * flip[s][c]; in [0,1] when weights sum to 1.
double turn_reward(const RewardGrid& grid, const Checklist& checklist);

// R = (1/L_den) * sum_t R_t.
double trajectory_reward(const std::map<int, double>& per_turn, int denominator_turns);

// Incremental counterpart of compute_reward_grid: feed verdicts one at a
// time; the finished grid equals the batch recomputation exactly.
class RewardAccumulator {
public:
    RewardAccumulator(const Checklist& checklist);

    void observe(const JudgeVerdict& verdict);

    const SatisfactionTrace& trace() const { return trace_; }
    const RewardGrid& grid() const { return grid_; }
    bool latched(const std::string& item_id) const;

private:
    const Checklist& checklist_;
    SatisfactionTrace trace_;
    RewardGrid grid_;
    std::map<std::string, int> latch_index_;     // -1 while unsatisfied
    std::map<std::string, int> deps_ready_index_; // first state index with all deps true
};

} // namespace checklist_rl
