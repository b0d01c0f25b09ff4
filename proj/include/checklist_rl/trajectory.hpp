#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "checklist_rl/errors.hpp"

namespace checklist_rl {

using json = nlohmann::json;

struct ParameterSpec {
    std::string type;
    bool required = false;
    std::string description;

    bool operator==(const ParameterSpec&) const = default;
};

struct ToolSchema {
    std::string name;
    std::string description;
    std::map<std::string, ParameterSpec> parameters;

    bool operator==(const ToolSchema&) const = default;
};

struct ToolCall {
    std::string tool_name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

enum class StepKind { UserQuery, AgentAction, ToolResponse };

const char* step_kind_name(StepKind kind);

struct Step {
    StepKind kind = StepKind::UserQuery;
    std::string content;
    std::optional<std::string> reasoning;      // AgentAction only
    std::vector<ToolCall> tool_calls;          // AgentAction only
    std::optional<int> responding_to;          // ToolResponse only, 0-based index
                                               // into the preceding action's calls

    bool is_final_reply() const { return kind == StepKind::AgentAction && tool_calls.empty(); }

    bool operator==(const Step&) const = default;
};

Step make_user_query(std::string content);
Step make_tool_response(std::string content, int responding_to);
Step make_reply(std::string content, std::optional<std::string> reasoning = std::nullopt);
Step make_tool_call_action(std::vector<ToolCall> calls, std::optional<std::string> reasoning = std::nullopt,
                           std::string content = "");

struct Turn {
    int index = 1; // 1-based
    std::vector<Step> steps;
    bool incomplete = false; // lenient parses and truncated rollouts only

    // Agent-action ordinal (1-based) for a raw step position, 0 if not an action.
    int action_ordinal(size_t raw_step_pos) const;
    int action_count() const;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    std::vector<ToolSchema> tools;
    std::vector<Turn> turns;
    std::optional<std::string> system_prompt;

    const ToolSchema* find_tool(const std::string& name) const;

    bool operator==(const Dialogue&) const = default;
};

// Flattened view of all steps through (turn, step), both 1-based.
struct HistoryPrefix {
    std::string dialogue_id;
    int upto_turn = 0;
    int upto_step = 0;
    std::vector<Step> steps;
    // Offset into `steps` where each contained turn begins; turn_starts[k]
    // is the start of turn k+1. Always non-empty when steps is.
    std::vector<size_t> turn_starts;

    size_t current_turn_begin() const { return turn_starts.empty() ? 0 : turn_starts.back(); }
};

enum class ParseMode { Strict, Lenient };

struct PrefixOptions {
    bool keep_prior_reasoning = true; // interleaved thinking is retained by default
};

// Line-delimited interchange: each line is one dialogue object with fields
// `id`, `tools`, `messages`. Role runs map onto turns: every `user` message
// opens a turn.
Dialogue parse_dialogue(const std::string& line, ParseMode mode = ParseMode::Strict);
Dialogue dialogue_from_json(const json& doc, ParseMode mode = ParseMode::Strict);

std::string serialize_dialogue(const Dialogue& d);
json dialogue_to_json(const Dialogue& d);

// Message-object form of a single step, as used in the interchange format
// and in endpoint request payloads.
json step_to_message(const Step& step);

std::vector<Dialogue> parse_dialogue_stream(std::istream& in, ParseMode mode = ParseMode::Strict);

HistoryPrefix history_prefix(const Dialogue& d, int turn, int step,
                             const PrefixOptions& options = {});

// Prefix spanning every step present in `d`; tolerates a trailing
// incomplete turn (used by the rollout loop on partially realized dialogues).
HistoryPrefix full_prefix(const Dialogue& d, const PrefixOptions& options = {});

} // namespace checklist_rl
