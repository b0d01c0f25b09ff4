#include "checklist_rl/reward.hpp"

#include <algorithm>

namespace checklist_rl {

int SatisfactionTrace::step_count() const {
    if (item_states.empty()) return 0;
    return static_cast<int>(item_states.begin()->second.size()) - 1;
}

bool SatisfactionTrace::state_at(const std::string& item_id, int index) const {
    auto it = item_states.find(item_id);
    if (it == item_states.end() || index < 0 || index >= static_cast<int>(it->second.size())) return false;
    return it->second[static_cast<size_t>(index)] != 0;
}

bool SatisfactionTrace::finally_satisfied(const std::string& item_id) const {
    auto it = item_states.find(item_id);
    if (it == item_states.end() || it->second.empty()) return false;
    return it->second.back() != 0;
}

bool RewardGrid::flip_at(int step, const std::string& item_id) const {
    auto pos = std::find(item_ids.begin(), item_ids.end(), item_id);
    if (pos == item_ids.end() || step < 1 || step > step_count()) return false;
    return flip[static_cast<size_t>(step - 1)][static_cast<size_t>(pos - item_ids.begin())] != 0;
}

bool RewardGrid::backfill_at(int step, const std::string& item_id) const {
    auto pos = std::find(item_ids.begin(), item_ids.end(), item_id);
    if (pos == item_ids.end() || step < 1 || step > step_count()) return false;
    return backfill[static_cast<size_t>(step - 1)][static_cast<size_t>(pos - item_ids.begin())] != 0;
}

bool RewardGrid::item_flipped(const std::string& item_id) const {
    for (int s = 1; s <= step_count(); ++s) {
        if (flip_at(s, item_id)) return true;
    }
    return false;
}

SatisfactionTrace latch_trace(const std::vector<JudgeVerdict>& verdicts) {
    if (verdicts.empty()) {
        throw Error(ErrorCode::InconsistentChecklist, "cannot latch an empty verdict sequence");
    }
    SatisfactionTrace trace;
    trace.turn_index = verdicts.front().turn_index;
    for (const auto& [item_id, label] : verdicts.front().labels) {
        (void)label;
        trace.item_states[item_id] = {0}; // pre-turn state
    }
    for (const auto& verdict : verdicts) {
        if (verdict.turn_index != trace.turn_index || verdict.labels.size() != trace.item_states.size()) {
            throw Error(ErrorCode::InconsistentChecklist, "verdicts disagree on turn or item set");
        }
        for (auto& [item_id, states] : trace.item_states) {
            auto it = verdict.labels.find(item_id);
            if (it == verdict.labels.end()) {
                throw Error(ErrorCode::InconsistentChecklist, "verdict lacks a label for " + item_id);
            }
            states.push_back(static_cast<char>(states.back() != 0 || it->second));
        }
    }
    return trace;
}

SatisfactionTrace latch_trace(const Checklist& checklist, const std::vector<JudgeVerdict>& verdicts) {
    if (!verdicts.empty()) return latch_trace(verdicts);
    SatisfactionTrace trace;
    trace.turn_index = checklist.turn_index;
    for (const auto& item : checklist.items) {
        trace.item_states[item.id] = {0};
    }
    return trace;
}

namespace {

bool deps_satisfied_at(const SatisfactionTrace& trace, const ChecklistItem& item, int state_index) {
    for (const auto& dep : item.dependencies) {
        if (!trace.state_at(dep, state_index)) return false;
    }
    return true;
}

} // namespace

std::vector<std::vector<char>> flip_rewards(const SatisfactionTrace& trace, const Checklist& checklist) {
    const int steps = trace.step_count();
    std::vector<std::vector<char>> flip(static_cast<size_t>(steps),
                                        std::vector<char>(checklist.items.size(), 0));
    for (size_t c = 0; c < checklist.items.size(); ++c) {
        const ChecklistItem& item = checklist.items[c];
        for (int s = 1; s <= steps; ++s) {
            const bool before = trace.state_at(item.id, s - 1);
            const bool after = trace.state_at(item.id, s);
            if (!before && after && deps_satisfied_at(trace, item, s - 1)) {
                flip[static_cast<size_t>(s - 1)][c] = 1;
            }
        }
    }
    return flip;
}

std::vector<std::vector<char>> backfill_rewards(const SatisfactionTrace& trace, const Checklist& checklist) {
    const int steps = trace.step_count();
    std::vector<std::vector<char>> backfill(static_cast<size_t>(steps),
                                            std::vector<char>(checklist.items.size(), 0));
    for (size_t c = 0; c < checklist.items.size(); ++c) {
        const ChecklistItem& item = checklist.items[c];
        if (!trace.finally_satisfied(item.id)) continue;
        for (int s = 1; s <= steps; ++s) {
            if (!trace.state_at(item.id, s - 1) && deps_satisfied_at(trace, item, s - 1)) {
                backfill[static_cast<size_t>(s - 1)][c] = 1;
            }
        }
    }
    return backfill;
}

RewardGrid compute_reward_grid(const SatisfactionTrace& trace, const Checklist& checklist) {
    RewardGrid grid;
    grid.turn_index = trace.turn_index;
    for (const auto& item : checklist.items) grid.item_ids.push_back(item.id);
    grid.flip = flip_rewards(trace, checklist);
    grid.backfill = backfill_rewards(trace, checklist);
    return grid;
}

double turn_reward(const RewardGrid& grid, const Checklist& checklist) {
    double total = 0.0;
    for (const auto& step_row : grid.flip) {
        for (size_t c = 0; c < checklist.items.size(); ++c) {
            if (step_row[c] != 0) total += checklist.items[c].weight;
        }
    }
    return total;
}

double trajectory_reward(const std::map<int, double>& per_turn, int denominator_turns) {
    if (denominator_turns < 1) throw Error(ErrorCode::ZeroTurns, "denominator must be >= 1");
    double sum = 0.0;
    for (const auto& [t, r] : per_turn) {
        (void)t;
        sum += r;
    }
    return sum / static_cast<double>(denominator_turns);
}

RewardAccumulator::RewardAccumulator(const Checklist& checklist) : checklist_(checklist) {
    trace_.turn_index = checklist.turn_index;
    grid_.turn_index = checklist.turn_index;
    for (const auto& item : checklist.items) {
        trace_.item_states[item.id] = {0};
        grid_.item_ids.push_back(item.id);
        latch_index_[item.id] = -1;
        deps_ready_index_[item.id] = item.dependencies.empty() ? 0 : -1;
    }
}

bool RewardAccumulator::latched(const std::string& item_id) const {
    return latch_index_.count(item_id) != 0 && latch_index_.at(item_id) >= 0;
}

void RewardAccumulator::observe(const JudgeVerdict& verdict) {
    if (verdict.turn_index != trace_.turn_index || verdict.labels.size() != trace_.item_states.size()) {
        throw Error(ErrorCode::InconsistentChecklist, "verdict disagrees with the accumulator's checklist");
    }
    const int k = trace_.step_count() + 1; // state index being appended
    for (auto& [item_id, states] : trace_.item_states) {
        auto it = verdict.labels.find(item_id);
        if (it == verdict.labels.end()) {
            throw Error(ErrorCode::InconsistentChecklist, "verdict lacks a label for " + item_id);
        }
        const bool now = states.back() != 0 || it->second;
        states.push_back(static_cast<char>(now));
        if (now && latch_index_[item_id] < 0) latch_index_[item_id] = k;
    }
    grid_.flip.emplace_back(checklist_.items.size(), 0);
    grid_.backfill.emplace_back(checklist_.items.size(), 0);

    // Dependency readiness can only rise as dependencies latch.
    for (size_t c = 0; c < checklist_.items.size(); ++c) {
        const ChecklistItem& item = checklist_.items[c];
        int& ready = deps_ready_index_[item.id];
        if (ready < 0) {
            int latest = 0;
            bool all = true;
            for (const auto& dep : item.dependencies) {
                const int dep_latch = latch_index_.count(dep) ? latch_index_[dep] : -1;
                if (dep_latch < 0) {
                    all = false;
                    break;
                }
                latest = std::max(latest, dep_latch);
            }
            if (all) ready = latest;
        }
    }

    // An item that just latched at state k earns its flip at step k when the
    // pre-state had all dependencies, and backfills the contiguous window of
    // earlier dependency-ready steps.
    for (size_t c = 0; c < checklist_.items.size(); ++c) {
        const ChecklistItem& item = checklist_.items[c];
        if (latch_index_[item.id] != k) continue;
        const int ready = deps_ready_index_[item.id];
        if (ready < 0 || ready > k - 1) continue; // dependency unmet in the pre-state: forfeited
        grid_.flip[static_cast<size_t>(k - 1)][c] = 1;
        for (int s = ready + 1; s <= k; ++s) {
            grid_.backfill[static_cast<size_t>(s - 1)][c] = 1;
        }
    }
}

} // namespace checklist_rl
