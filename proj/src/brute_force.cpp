#include "checklist_rl/brute_force.hpp"

#include <cmath>

namespace checklist_rl {

namespace {

void check_instance_size(const GroupRewards& group) {
    if (group.group_size > 8) throw Error(ErrorCode::InstanceTooLarge, "G > 8");
    if (group.checklists.size() > 4) throw Error(ErrorCode::InstanceTooLarge, "> 4 turns");
    for (const auto& [t, checklist] : group.checklists) {
        (void)t;
        if (checklist.items.size() > 6) throw Error(ErrorCode::InstanceTooLarge, "> 6 items");
    }
    for (const auto& rollout : group.rollouts) {
        for (const auto& [t, outcome] : rollout) {
            (void)t;
            if (outcome.trace.step_count() > 6) throw Error(ErrorCode::InstanceTooLarge, "> 6 steps");
        }
    }
}

bool sat(const SatisfactionTrace& trace, const std::string& item, int index) {
    auto it = trace.item_states.find(item);
    if (it == trace.item_states.end()) return false;
    if (index < 0 || index >= static_cast<int>(it->second.size())) return false;
    return it->second[static_cast<size_t>(index)] != 0;
}

bool deps_at(const SatisfactionTrace& trace, const ChecklistItem& item, int index) {
    bool all = true;
    for (const auto& dep : item.dependencies) {
        if (!sat(trace, dep, index)) all = false;
    }
    return all;
}

double naive_denominator(const std::vector<double>& values, const NormalizerSpec& spec) {
    if (spec.kind == NormalizerSpec::Kind::Constant1) return 1.0;
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return std::sqrt(sq / static_cast<double>(values.size())) + spec.epsilon;
}

} // namespace

BruteForceRewards brute_force_rewards(const GroupRewards& group) {
    check_instance_size(group);
    BruteForceRewards out;
    for (int i = 0; i < group.group_size; ++i) {
        std::map<int, std::vector<std::vector<char>>> flips;
        std::map<int, std::vector<std::vector<char>>> backfills;
        std::map<int, double> turn_rewards;
        for (const auto& [t, outcome] : group.rollouts[static_cast<size_t>(i)]) {
            const Checklist& checklist = group.checklists.at(t);
            const SatisfactionTrace& trace = outcome.trace;
            const int steps = trace.step_count();
            const int items = static_cast<int>(checklist.items.size());
            std::vector<std::vector<char>> flip(static_cast<size_t>(steps),
                                                std::vector<char>(static_cast<size_t>(items), 0));
            std::vector<std::vector<char>> backfill(static_cast<size_t>(steps),
                                                    std::vector<char>(static_cast<size_t>(items), 0));
            for (int s = 1; s <= steps; ++s) {
                for (int c = 0; c < items; ++c) {
                    const ChecklistItem& item = checklist.items[static_cast<size_t>(c)];
                    if (deps_at(trace, item, s - 1) && !sat(trace, item.id, s - 1) &&
                        sat(trace, item.id, s)) {
                        flip[static_cast<size_t>(s - 1)][static_cast<size_t>(c)] = 1;
                    }
                    if (deps_at(trace, item, s - 1) && !sat(trace, item.id, s - 1)) {
                        bool satisfied_after = false;
                        for (int u = s; u <= steps; ++u) {
                            if (sat(trace, item.id, u)) satisfied_after = true;
                        }
                        if (satisfied_after) {
                            backfill[static_cast<size_t>(s - 1)][static_cast<size_t>(c)] = 1;
                        }
                    }
                }
            }
            double r_t = 0.0;
            for (int s = 1; s <= steps; ++s) {
                for (int c = 0; c < items; ++c) {
                    if (flip[static_cast<size_t>(s - 1)][static_cast<size_t>(c)] != 0) {
                        r_t += checklist.items[static_cast<size_t>(c)].weight;
                    }
                }
            }
            turn_rewards[t] = r_t;
            flips[t] = std::move(flip);
            backfills[t] = std::move(backfill);
        }
        double total = 0.0;
        for (const auto& [t, r] : turn_rewards) {
            (void)t;
            total += r;
        }
        out.trajectory.push_back(total / static_cast<double>(group.denominators[static_cast<size_t>(i)]));
        out.turn_rewards.push_back(std::move(turn_rewards));
        out.flip.push_back(std::move(flips));
        out.backfill.push_back(std::move(backfills));
    }
    return out;
}

AdvantageTable brute_force_advantages(const GroupRewards& group, Granularity granularity,
                                      const NormalizerSpec& spec) {
    const BruteForceRewards rewards = brute_force_rewards(group);
    const int G = group.group_size;
    AdvantageTable table;
    table.granularity = granularity;

    if (granularity == Granularity::Trajectory) {
        double mean = 0.0;
        for (double r : rewards.trajectory) mean += r;
        mean /= static_cast<double>(G);
        const double denom = naive_denominator(rewards.trajectory, spec);
        for (int i = 0; i < G; ++i) {
            const double a = (rewards.trajectory[static_cast<size_t>(i)] - mean) / denom;
            for (const auto& [t, outcome] : group.rollouts[static_cast<size_t>(i)]) {
                for (int s = 1; s <= outcome.trace.step_count(); ++s) table.values[{i, t, s}] = a;
            }
        }
        return table;
    }

    if (granularity == Granularity::Turn) {
        for (const auto& [t, checklist] : group.checklists) {
            (void)checklist;
            std::vector<int> reached;
            std::vector<double> reached_rewards;
            for (int i = 0; i < G; ++i) {
                auto it = rewards.turn_rewards[static_cast<size_t>(i)].find(t);
                if (it != rewards.turn_rewards[static_cast<size_t>(i)].end()) {
                    reached.push_back(i);
                    reached_rewards.push_back(it->second);
                }
            }
            for (size_t k = 0; k < reached.size(); ++k) {
                double a = 0.0;
                if (reached.size() >= 2) {
                    double mean = 0.0;
                    for (double r : reached_rewards) mean += r;
                    mean /= static_cast<double>(reached_rewards.size());
                    const double denom = naive_denominator(reached_rewards, spec);
                    a = (reached_rewards[k] - mean) / denom;
                }
                const int i = reached[k];
                const auto& outcome = group.rollouts[static_cast<size_t>(i)].at(t);
                for (int s = 1; s <= outcome.trace.step_count(); ++s) table.values[{i, t, s}] = a;
            }
        }
        return table;
    }

    // Step level: item-wise baselines over the whole group, backfilled rewards
    // over the eligible set, weight-averaged.
    for (int i = 0; i < G; ++i) {
        for (const auto& [t, outcome] : group.rollouts[static_cast<size_t>(i)]) {
            const Checklist& checklist = group.checklists.at(t);
            const SatisfactionTrace& trace = outcome.trace;
            for (int s = 1; s <= trace.step_count(); ++s) {
                double weighted = 0.0;
                double weight_sum = 0.0;
                for (size_t c = 0; c < checklist.items.size(); ++c) {
                    const ChecklistItem& item = checklist.items[c];
                    const bool in_eligible_set =
                        deps_at(trace, item, s - 1) && !sat(trace, item.id, s - 1);
                    if (!in_eligible_set) continue;
                    std::vector<double> indicators;
                    for (int j = 0; j < G; ++j) {
                        bool flipped = false;
                        auto it = rewards.flip[static_cast<size_t>(j)].find(t);
                        if (it != rewards.flip[static_cast<size_t>(j)].end()) {
                            for (const auto& row : it->second) {
                                if (row[c] != 0) flipped = true;
                            }
                        }
                        indicators.push_back(flipped ? 1.0 : 0.0);
                    }
                    double b = 0.0;
                    for (double v : indicators) b += v;
                    b /= static_cast<double>(G);
                    const double denom = naive_denominator(indicators, spec);
                    const double backfilled =
                        rewards.backfill[static_cast<size_t>(i)].at(t)[static_cast<size_t>(s - 1)][c];
                    weighted += item.weight * ((backfilled - b) / denom);
                    weight_sum += item.weight;
                }
                table.values[{i, t, s}] = weight_sum > 0.0 ? weighted / weight_sum : 0.0;
            }
        }
    }
    return table;
}

} // namespace checklist_rl
