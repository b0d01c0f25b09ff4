#pragma once

#include "checklist_rl/rollout.hpp"

namespace checklist_rl {

// Synthetic desk-scale task: each turn requires a fixed sequence of tool
// invocations (arguments drawn from a small discrete space) followed by a
// confirmation reply. Stands in for a large simulated tool environment.
struct TaskSpec {
    int turns = 2;
    int invocations_per_turn = 2;
    int distractor_tools = 2;
    int argument_choices = 4; // <= 8 values per slot
    uint64_t seed = 7;
};

struct ToyTask {
    AnnotatedDialogue annotated;                 // reference dialogue + checklists
    std::map<std::string, Predicate> predicates; // ground-truth scripted judge
    JudgeSpec scripted_judge;
    std::vector<Step> action_templates;          // the policy's discrete action set
    ReplayStore store;                           // replays the canonical solution
    RolloutBudget budget;

    std::string state_key(const HistoryPrefix& prefix) const;
    int match_action(const Step& step) const; // template index, -1 if foreign
};

// Seed-deterministic. Checklist per turn: one item per required invocation
// chained in order, plus a strict final-reply item; weights uniform.
ToyTask generate_task(const TaskSpec& spec);

// Tabular softmax policy over (turn, satisfied-item bitmask) state keys.
struct SoftmaxPolicy {
    int action_count = 0;
    double temperature = 1.0;
    std::map<std::string, std::vector<double>> logits;

    std::vector<double> row(const std::string& key) const;
    std::vector<double> probabilities(const std::string& key) const;
};

std::unique_ptr<Policy> make_toy_policy(const ToyTask& task, const SoftmaxPolicy& params, uint64_t seed);

struct TrainConfig {
    Granularity granularity = Granularity::Trajectory;
    int group_size = 8;
    double learning_rate = 0.1;
    int updates = 300;
    double judge_noise = 0.0; // training only; validation always judges clean
    NormalizerSpec normalizer;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    double entropy_bonus = 0.01;
    double temperature = 1.0;
    int eval_every = 10;
    int eval_rollouts = 16;
    // LLM-scale GRPO runs pair ~3e-6 learning rates with minibatch 128 and a
    // KL term; those apply to neural policies, not this tabular trainer.
};

struct Decision {
    std::string state_key;
    int action_index = -1;
    int turn = 0;
    int step = 0; // agent-action ordinal
};

std::vector<Decision> extract_decisions(const ToyTask& task, const Dialogue& realized);

// Batch REINFORCE step: accumulates A * grad log pi(a|k) plus the entropy
// bonus gradient over every decision, then applies once with the learning
// rate. Deterministic given inputs.
SoftmaxPolicy policy_gradient_update(const SoftmaxPolicy& policy, const ToyTask& task,
                                     const std::vector<RolloutRecord>& records, const AdvantageTable& table,
                                     const TrainConfig& cfg);

// Surrogate objective whose gradient the update applies; exposed so tests can
// check the analytic gradient against finite differences.
double update_objective(const SoftmaxPolicy& policy, const std::vector<Decision>& decisions,
                        const std::vector<double>& advantages, double entropy_bonus);

struct CurvePoint {
    int update = 0;
    double mean_validation_reward = 0.0;
};

std::vector<CurvePoint> train_single_seed(const TrainConfig& cfg, const ToyTask& task, uint64_t seed);

struct CurveRow {
    int update = 0;
    uint64_t seed = 0;
    Granularity granularity = Granularity::Trajectory;
    int group_size = 0;
    double judge_noise = 0.0;
    double mean_reward = 0.0;
};

// One run per configured seed; rows ordered by (seed, update).
std::vector<CurveRow> train(const TrainConfig& cfg, const ToyTask& task);

std::string curve_rows_tsv(const std::vector<CurveRow>& rows);
std::vector<CurveRow> parse_curve_tsv(std::istream& in);

} // namespace checklist_rl
