#pragma once

#include <set>

#include "checklist_rl/trajectory.hpp"

namespace checklist_rl {

// Rule ids:
//   1 tool-schema violations        5 invalid JSON
//   2 incorrect role ordering       6 duplicate tool schemas or names
//   3 call/response mismatches      7 missing or redundant thinking blocks
//   4 tool responses inside assistant messages
struct RuleViolation {
    int rule = 0;
    std::string location;
    std::string message;
};

struct FilterReport {
    std::string dialogue_id; // empty when the line never parsed
    bool pass = true;
    std::vector<RuleViolation> violations;
};

struct FilterConfig {
    std::set<int> enabled_rules = {1, 2, 3, 4, 5, 6, 7};
    bool reasoning_required = true; // rule 7 corpus mode
    bool reject_unknown_args = true;
};

// Applies the enabled rules to one raw interchange line; every violation is
// reported, not just the first.
FilterReport filter_dialogue(const std::string& raw_line, const FilterConfig& config = {});

json filter_report_to_json(const FilterReport& report);

struct CorpusStats {
    int dialogues = 0;
    int passed = 0;
    int rejected = 0;
    std::map<int, int> violations_per_rule;
    std::map<int, int> turns_per_dialogue;  // turn count -> dialogues
    std::map<int, int> steps_per_turn;      // step count -> turns
    std::map<int, int> tool_calls_per_dialogue;
    int total_tool_calls = 0;
    int single_turn_count = 0;
    int single_tool_count = 0; // at most one tool call in total
    int complex_count = 0;     // multi-turn and multi-call
};

json corpus_stats_to_json(const CorpusStats& stats);

// Runs the filter on every line and accumulates structure statistics over the
// passing dialogues.
CorpusStats corpus_stats(const std::vector<std::string>& lines, const FilterConfig& config = {});

struct SplitSizes {
    int cold_start = 0;
    int rl = 0;
    int validation = 0;
};

struct SplitResult {
    std::vector<std::string> cold_start;
    std::vector<std::string> rl;
    std::vector<std::string> validation;
};

// Seed-deterministic disjoint split. The RL and validation pools draw only
// from dialogues satisfying the complexity predicate (multi-turn and
// multi-call) after the cold-start sample is removed.
SplitResult sample_split(const std::vector<std::pair<std::string, bool>>& ids_with_complexity,
                         const SplitSizes& sizes, uint64_t seed);

bool is_complex_dialogue(const Dialogue& d);

// Semantic-filter pass-through. The model call lives behind the endpoint;
// locally this only sequences the effort ladder with early exit on any flag.
struct SemanticFilterClient {
    std::string host;
    int port = 0;
    double timeout_seconds = 30.0;
    // Each entry is one evaluation at that effort; a single flag discards the
    // sample without evaluating the rest.
    std::vector<std::string> effort_ladder = {"low", "low", "medium", "medium", "high", "high"};
};

SemanticFilterClient make_semantic_filter(const std::string& address, double timeout_seconds = 30.0);

// POST /filter_llm {"dialogue": <doc>, "effort": "low"} -> {"flagged": bool}.
// Returns true when the sample survives the whole ladder.
bool semantic_filter_pass(const SemanticFilterClient& client, const json& dialogue_doc);

// Reasoning-compression pass-through. POST /compress {"reasoning": text} ->
// {"reasoning": text}; the only locally verifiable contract is that rewritten
// reasoning is strictly shorter, enforced here.
struct CompressionClient {
    std::string host;
    int port = 0;
    double timeout_seconds = 30.0;
};

CompressionClient make_compression_client(const std::string& address, double timeout_seconds = 30.0);

Dialogue compress_reasoning(const CompressionClient& client, const Dialogue& d);

} // namespace checklist_rl
