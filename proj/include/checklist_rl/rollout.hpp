#pragma once

#include <functional>
#include <memory>

#include "checklist_rl/advantage.hpp"
#include "checklist_rl/judge.hpp"
#include "checklist_rl/toolsim.hpp"

namespace checklist_rl {

// Behavioral contract: act() returns the next AgentAction for any valid
// prefix. Implementations are deterministic or seeded through reset().
class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset(uint64_t /*seed*/) {}
    virtual Step act(const HistoryPrefix& prefix) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>(uint64_t seed)>;

// Replays the reference dialogue's agent actions in order.
class ReplayPolicy : public Policy {
public:
    explicit ReplayPolicy(Dialogue reference) : reference_(std::move(reference)) {}
    Step act(const HistoryPrefix& prefix) override;

private:
    Dialogue reference_;
};

class FunctionPolicy : public Policy {
public:
    explicit FunctionPolicy(std::function<Step(const HistoryPrefix&)> fn) : fn_(std::move(fn)) {}
    Step act(const HistoryPrefix& prefix) override { return fn_(prefix); }

private:
    std::function<Step(const HistoryPrefix&)> fn_;
};

struct RolloutBudget {
    int max_turns = 30;
    int max_steps_per_turn = 16; // agent actions per turn
    int max_total_steps = 256;   // agent actions per rollout
};

enum class TerminationKind { Completed, StrictnessGateFailed, BudgetExceeded, PolicyError, EnvironmentError };

const char* termination_kind_name(TerminationKind kind);
TerminationKind termination_kind_from_name(const std::string& name);

struct Termination {
    TerminationKind kind = TerminationKind::Completed;
    int turn = 0;        // StrictnessGateFailed
    std::string detail;  // which budget, error message
};

struct SourceTag {
    int turn = 0;
    int raw_step = 0; // raw step index of the ToolResponse within its turn
    ResponseSource source = ResponseSource::Simulated;
};

struct RolloutRecord {
    std::string group_id;
    int rollout_index = 0;
    uint64_t seed = 0;
    Dialogue realized;
    std::map<int, Checklist> checklists; // embedded so records stand alone
    std::map<int, std::vector<JudgeVerdict>> verdicts;
    std::map<int, RewardGrid> grids;
    RewardSummary summary;
    Termination termination;
    std::vector<SourceTag> source_tags;
    int judge_failures = 0;
};

json record_to_json(const RolloutRecord& record);
RolloutRecord record_from_json(const json& doc);
std::vector<RolloutRecord> parse_record_stream(std::istream& in);

struct RolloutOptions {
    std::string group_id;      // defaults to the reference dialogue id
    int rollout_index = 0;
    DenominatorMode denominator_mode = DenominatorMode::ReferenceTurns;
};

// One policy/environment interaction per the per-turn protocol: issue the
// reference user query, loop policy actions with tool execution and judging,
// then gate the turn transition on the strict items.
RolloutRecord run_rollout(const AnnotatedDialogue& annotated, Policy& policy, const JudgeSpec& judge_spec,
                          const ReplayStore& store, const SimulatorSpec& sim, const RolloutBudget& budget,
                          uint64_t seed, const RolloutOptions& options = {});

struct GroupResult {
    GroupRewards rewards;
    std::vector<RolloutRecord> records;
};

// G independent rollouts seeded base_seed + i. Honors CHECKLIST_RL_THREADS.
GroupResult run_group(const AnnotatedDialogue& annotated, const PolicyFactory& make_policy,
                      const JudgeSpec& judge_spec, const ReplayStore& store, const SimulatorSpec& sim,
                      const RolloutBudget& budget, int group_size, uint64_t base_seed,
                      const RolloutOptions& options = {});

GroupRewards assemble_group_rewards(const std::vector<RolloutRecord>& records);

} // namespace checklist_rl
