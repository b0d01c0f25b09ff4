#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "checklist_rl/checklist.hpp"
#include "checklist_rl/trajectory.hpp"

namespace checklist_rl {

struct JudgeVerdict {
    int turn_index = 0;
    int step_index = 0; // agent-action ordinal within the turn, 1-based
    std::map<std::string, bool> labels;
};

// Decidable checks over a trajectory prefix. Predicates are evaluated against
// the steps of the prefix's current turn; checklists are per-turn, so earlier
// turns never satisfy an item by accident.
struct Predicate {
    enum class Kind { ToolCalled, ReplyContains, ReasoningContains, ResponseField, AllOf, AnyOf, Not };
    Kind kind = Kind::ToolCalled;
    std::string tool_name;                                      // ToolCalled
    std::vector<std::pair<std::string, json>> arg_constraints;  // dotted path -> expected value
    std::string text;                                           // *Contains
    std::string path;                                           // ResponseField
    json value;                                                 // ResponseField
    std::vector<std::string> refs;                              // combinators
};

// `tool_called(name="search", args.query="cm2")`, `reply_contains("...")`,
// `reasoning_contains("...")`, `response_field(path, value)`,
// `all_of(c1,c2)`, `any_of(c1,c2)`, `not(c1)`.
Predicate parse_predicate(const std::string& expression);

struct JudgeSpec {
    enum class Kind { Scripted, Noisy, External };
    Kind kind = Kind::Scripted;

    // Scripted
    std::map<std::string, Predicate> predicates;

    // Noisy
    double flip_probability = 0.0;
    uint64_t seed = 0;
    std::shared_ptr<JudgeSpec> inner;

    // External
    std::string host;
    int port = 0;
    double timeout_seconds = 10.0;
    int max_retries = 2;

    // Ensemble hook: judge this many times and take the per-item majority.
    // Ties (even counts) resolve to the first verdict's label.
    int majority_votes = 1;
};

// Builds a Scripted spec from a predicate document: a JSON object mapping
// item id -> predicate expression (optionally nested under "predicates").
// Cross-item references are resolved and checked for cycles here.
JudgeSpec scripted_predicates(const json& document);
JudgeSpec scripted_predicates(const std::map<std::string, std::string>& expressions);

JudgeSpec make_noisy(JudgeSpec inner, double flip_probability, uint64_t seed);
JudgeSpec make_external(const std::string& address, double timeout_seconds = 10.0, int max_retries = 2);

// One boolean per checklist item. Scripted specs are pure functions of the
// inputs; Noisy flips each inner label independently with probability
// flip_probability on a stream keyed by (seed, dialogue id, turn, step, item),
// so replays reproduce. External raises EndpointUnavailable /
// EndpointMalformedReply after exhausting retries.
JudgeVerdict judge(const JudgeSpec& spec, const HistoryPrefix& prefix, const Checklist& checklist);

// Ground-truth evaluation of one predicate against a prefix; exposed for the
// toy policy, which derives its state key from true satisfaction.
bool evaluate_predicate(const std::map<std::string, Predicate>& predicates, const std::string& item_id,
                        const HistoryPrefix& prefix);

} // namespace checklist_rl
