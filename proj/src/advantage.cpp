#include "checklist_rl/advantage.hpp"

#include <cmath>
#include <sstream>

namespace checklist_rl {

const char* granularity_name(Granularity g) {
    switch (g) {
    case Granularity::Trajectory: return "Trajectory";
    case Granularity::Turn: return "Turn";
    case Granularity::Step: return "Step";
    }
    return "?";
}

Granularity granularity_from_name(const std::string& name) {
    if (name == "Trajectory" || name == "trajectory") return Granularity::Trajectory;
    if (name == "Turn" || name == "turn") return Granularity::Turn;
    if (name == "Step" || name == "step") return Granularity::Step;
    throw Error(ErrorCode::InvalidConfig, "unknown granularity: " + name);
}

NormalizerSpec normalizer_from_name(const std::string& name) {
    NormalizerSpec spec;
    if (name == "constant1" || name == "Constant1") {
        spec.kind = NormalizerSpec::Kind::Constant1;
    } else if (name == "stddev" || name == "StdDev") {
        spec.kind = NormalizerSpec::Kind::StdDev;
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown normalizer: " + name);
    }
    return spec;
}

std::vector<char> GroupRewards::step_satisfied(int turn, const std::string& item_id) const {
    std::vector<char> out(static_cast<size_t>(group_size), 0);
    for (int i = 0; i < group_size; ++i) {
        auto it = rollouts[static_cast<size_t>(i)].find(turn);
        if (it == rollouts[static_cast<size_t>(i)].end()) continue;
        out[static_cast<size_t>(i)] = static_cast<char>(it->second.grid.item_flipped(item_id));
    }
    return out;
}

GroupRewards assemble_group_rewards(const std::map<int, Checklist>& checklists,
                                    const std::vector<std::map<int, SatisfactionTrace>>& rollout_traces,
                                    int reference_turns, DenominatorMode mode) {
    GroupRewards group;
    group.group_size = static_cast<int>(rollout_traces.size());
    group.checklists = checklists;
    for (const auto& traces : rollout_traces) {
        std::map<int, TurnOutcome> outcomes;
        std::map<int, double> per_turn;
        int reached = 0;
        for (const auto& [t, trace] : traces) {
            auto cl = checklists.find(t);
            if (cl == checklists.end()) {
                throw Error(ErrorCode::MissingChecklist, "turn " + std::to_string(t));
            }
            TurnOutcome outcome;
            outcome.trace = trace;
            outcome.grid = compute_reward_grid(trace, cl->second);
            outcome.reward = turn_reward(outcome.grid, cl->second);
            per_turn[t] = outcome.reward;
            outcomes[t] = std::move(outcome);
            reached = std::max(reached, t);
        }
        const int denominator = mode == DenominatorMode::ReferenceTurns
                                    ? std::max(reference_turns, 1)
                                    : std::max(reached, 1);
        group.trajectory.push_back(trajectory_reward(per_turn, denominator));
        group.denominators.push_back(denominator);
        const int i = static_cast<int>(group.rollouts.size());
        for (const auto& [t, r] : per_turn) {
            group.per_turn[t].emplace_back(i, r);
        }
        group.rollouts.push_back(std::move(outcomes));
    }
    return group;
}

double AdvantageTable::at(int rollout, int turn, int step) const {
    auto it = values.find({rollout, turn, step});
    return it == values.end() ? 0.0 : it->second;
}

double normalize(const std::vector<double>& values, const NormalizerSpec& spec) {
    if (values.empty()) throw Error(ErrorCode::ShapeMismatch, "cannot normalize an empty list");
    if (spec.kind == NormalizerSpec::Kind::Constant1) return 1.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double variance = 0.0;
    for (double v : values) variance += (v - mean) * (v - mean);
    variance /= static_cast<double>(values.size());
    return std::sqrt(variance) + spec.epsilon;
}

namespace {

double list_mean(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

// Every judged step span of one rollout's turn.
template <typename Fn>
void for_each_span(const GroupRewards& group, int rollout, Fn&& fn) {
    for (const auto& [t, outcome] : group.rollouts[static_cast<size_t>(rollout)]) {
        const int steps = outcome.trace.step_count();
        for (int s = 1; s <= steps; ++s) fn(t, s);
    }
}

bool eligible(const SatisfactionTrace& trace, const ChecklistItem& item, int step) {
    if (trace.state_at(item.id, step - 1)) return false;
    for (const auto& dep : item.dependencies) {
        if (!trace.state_at(dep, step - 1)) return false;
    }
    return true;
}

} // namespace

AdvantageTable trajectory_advantage(const GroupRewards& group, const NormalizerSpec& spec) {
    if (group.group_size < 2) throw Error(ErrorCode::GroupTooSmall, "trajectory advantage needs G >= 2");
    AdvantageTable table;
    table.granularity = Granularity::Trajectory;
    const double mean = list_mean(group.trajectory);
    const double denom = normalize(group.trajectory, spec);
    for (int i = 0; i < group.group_size; ++i) {
        const double advantage = (group.trajectory[static_cast<size_t>(i)] - mean) / denom;
        for_each_span(group, i, [&](int t, int s) { table.values[{i, t, s}] = advantage; });
    }
    return table;
}

AdvantageTable turn_advantage(const GroupRewards& group, const NormalizerSpec& spec) {
    if (group.group_size < 2) throw Error(ErrorCode::GroupTooSmall, "turn advantage needs G >= 2");
    AdvantageTable table;
    table.granularity = Granularity::Turn;
    for (const auto& [t, reached] : group.per_turn) {
        std::map<int, double> per_rollout;
        if (reached.size() < 2) {
            // Too few rollouts reached this turn for group statistics.
            for (const auto& [i, r] : reached) {
                (void)r;
                per_rollout[i] = 0.0;
            }
            table.flags.push_back("TurnCoverageTooSmall(" + std::to_string(t) + ")");
        } else {
            std::vector<double> rewards;
            rewards.reserve(reached.size());
            for (const auto& [i, r] : reached) rewards.push_back(r);
            const double mean = list_mean(rewards);
            const double denom = normalize(rewards, spec);
            for (const auto& [i, r] : reached) per_rollout[i] = (r - mean) / denom;
        }
        for (const auto& [i, advantage] : per_rollout) {
            const auto& outcome = group.rollouts[static_cast<size_t>(i)].at(t);
            const int steps = outcome.trace.step_count();
            for (int s = 1; s <= steps; ++s) table.values[{i, t, s}] = advantage;
        }
    }
    return table;
}

double step_baseline(const GroupRewards& group, int turn, const std::string& item_id) {
    const auto satisfied = group.step_satisfied(turn, item_id);
    double count = 0.0;
    for (char c : satisfied) count += c;
    return count / static_cast<double>(group.group_size);
}

AdvantageTable step_advantage(const GroupRewards& group, const NormalizerSpec& spec) {
    AdvantageTable table;
    table.granularity = Granularity::Step;
    // Per (turn, item) baseline and normalizer over the group's indicators.
    std::map<std::pair<int, std::string>, std::pair<double, double>> stats; // -> (baseline, denom)
    for (const auto& [t, checklist] : group.checklists) {
        for (const auto& item : checklist.items) {
            const auto indicator = group.step_satisfied(t, item.id);
            std::vector<double> values(indicator.begin(), indicator.end());
            const double b = list_mean(values);
            const double denom = normalize(values, spec);
            if (spec.kind == NormalizerSpec::Kind::StdDev && (b == 0.0 || b == 1.0)) {
                table.flags.push_back("ZeroVarianceIndicator(turn=" + std::to_string(t) +
                                      ", item=" + item.id + ")");
            }
            stats[{t, item.id}] = {b, denom};
        }
    }
    for (int i = 0; i < group.group_size; ++i) {
        for (const auto& [t, outcome] : group.rollouts[static_cast<size_t>(i)]) {
            const Checklist& checklist = group.checklists.at(t);
            const int steps = outcome.trace.step_count();
            for (int s = 1; s <= steps; ++s) {
                double weighted = 0.0;
                double weight_sum = 0.0;
                for (size_t c = 0; c < checklist.items.size(); ++c) {
                    const ChecklistItem& item = checklist.items[c];
                    if (!eligible(outcome.trace, item, s)) continue;
                    const auto& [b, denom] = stats.at({t, item.id});
                    const double backfilled = outcome.grid.backfill[static_cast<size_t>(s - 1)][c];
                    weighted += item.weight * ((backfilled - b) / denom);
                    weight_sum += item.weight;
                }
                table.values[{i, t, s}] = weight_sum > 0.0 ? weighted / weight_sum : 0.0;
            }
        }
    }
    return table;
}

AdvantageTable compute_advantages(const GroupRewards& group, Granularity granularity,
                                  const NormalizerSpec& spec) {
    switch (granularity) {
    case Granularity::Trajectory: return trajectory_advantage(group, spec);
    case Granularity::Turn: return turn_advantage(group, spec);
    case Granularity::Step: return step_advantage(group, spec);
    }
    throw Error(ErrorCode::InvalidConfig, "unhandled granularity");
}

std::string advantage_table_tsv(const AdvantageTable& table, const std::string& group_id) {
    std::ostringstream out;
    out << "group\trollout\tturn\tstep\tgranularity\tadvantage\n";
    out.precision(17);
    for (const auto& [key, value] : table.values) {
        const auto& [i, t, s] = key;
        out << group_id << '\t' << i << '\t' << t << '\t' << s << '\t' << granularity_name(table.granularity)
            << '\t' << value << '\n';
    }
    return out.str();
}

} // namespace checklist_rl
