#include "checklist_rl/trajectory.hpp"

#include <istream>
#include <sstream>

namespace checklist_rl {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::StructuralViolation: return "StructuralViolation";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::DependencyCycle: return "DependencyCycle";
    case ErrorCode::MissingChecklist: return "MissingChecklist";
    case ErrorCode::UnknownDialogue: return "UnknownDialogue";
    case ErrorCode::UnknownPredicateKind: return "UnknownPredicateKind";
    case ErrorCode::UnboundItemId: return "UnboundItemId";
    case ErrorCode::EndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::EndpointMalformedReply: return "EndpointMalformedReply";
    case ErrorCode::NonFiniteNumber: return "NonFiniteNumber";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::SimulatorUnavailable: return "SimulatorUnavailable";
    case ErrorCode::InconsistentChecklist: return "InconsistentChecklist";
    case ErrorCode::ZeroTurns: return "ZeroTurns";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "UnknownError";
}

const char* step_kind_name(StepKind kind) {
    switch (kind) {
    case StepKind::UserQuery: return "UserQuery";
    case StepKind::AgentAction: return "AgentAction";
    case StepKind::ToolResponse: return "ToolResponse";
    }
    return "?";
}

Step make_user_query(std::string content) {
    Step s;
    s.kind = StepKind::UserQuery;
    s.content = std::move(content);
    return s;
}

Step make_tool_response(std::string content, int responding_to) {
    Step s;
    s.kind = StepKind::ToolResponse;
    s.content = std::move(content);
    s.responding_to = responding_to;
    return s;
}

Step make_reply(std::string content, std::optional<std::string> reasoning) {
    Step s;
    s.kind = StepKind::AgentAction;
    s.content = std::move(content);
    s.reasoning = std::move(reasoning);
    return s;
}

Step make_tool_call_action(std::vector<ToolCall> calls, std::optional<std::string> reasoning,
                           std::string content) {
    Step s;
    s.kind = StepKind::AgentAction;
    s.content = std::move(content);
    s.reasoning = std::move(reasoning);
    s.tool_calls = std::move(calls);
    return s;
}

int Turn::action_ordinal(size_t raw_step_pos) const {
    if (raw_step_pos >= steps.size() || steps[raw_step_pos].kind != StepKind::AgentAction) return 0;
    int ordinal = 0;
    for (size_t i = 0; i <= raw_step_pos; ++i) {
        if (steps[i].kind == StepKind::AgentAction) ++ordinal;
    }
    return ordinal;
}

int Turn::action_count() const {
    int n = 0;
    for (const auto& s : steps) {
        if (s.kind == StepKind::AgentAction) ++n;
    }
    return n;
}

const ToolSchema* Dialogue::find_tool(const std::string& name) const {
    for (const auto& t : tools) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

namespace {

[[noreturn]] void violation(const std::string& rule, const std::string& where) {
    throw Error(ErrorCode::StructuralViolation, rule + " (" + where + ")");
}

std::string loc(const std::string& id, size_t message_index) {
    return "dialogue " + id + ", message " + std::to_string(message_index + 1);
}

ToolSchema tool_schema_from_json(const json& doc, const std::string& id) {
    if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string()) {
        violation("tool schema must be an object with a string name", "dialogue " + id);
    }
    ToolSchema schema;
    schema.name = doc["name"].get<std::string>();
    if (schema.name.empty()) violation("tool name must be non-empty", "dialogue " + id);
    schema.description = doc.value("description", "");
    if (doc.contains("parameters")) {
        const json& params = doc["parameters"];
        if (!params.is_object()) {
            violation("tool parameters must be a map", "dialogue " + id + ", tool " + schema.name);
        }
        for (auto it = params.begin(); it != params.end(); ++it) {
            ParameterSpec spec;
            if (it.value().is_object()) {
                spec.type = it.value().value("type", "string");
                spec.required = it.value().value("required", false);
                spec.description = it.value().value("description", "");
            }
            schema.parameters[it.key()] = spec;
        }
    }
    return schema;
}

json tool_schema_to_json(const ToolSchema& schema) {
    json params = json::object();
    for (const auto& [name, spec] : schema.parameters) {
        params[name] = {{"type", spec.type}, {"required", spec.required}, {"description", spec.description}};
    }
    return {{"name", schema.name}, {"description", schema.description}, {"parameters", params}};
}

// Tracks the in-flight state of the turn being assembled.
struct TurnBuilder {
    Turn turn;
    int pending_responses = 0;   // tool responses still owed to the last action
    int last_action_calls = 0;
    bool saw_final_reply = false;

    bool complete() const { return saw_final_reply && pending_responses == 0; }
};

} // namespace

Dialogue dialogue_from_json(const json& doc, ParseMode mode) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "dialogue document must be an object");
    Dialogue d;
    d.id = doc.value("id", "");
    if (d.id.empty()) throw Error(ErrorCode::MalformedDocument, "dialogue is missing an id");

    if (doc.contains("tools")) {
        if (!doc["tools"].is_array()) violation("tools must be a list", "dialogue " + d.id);
        for (const auto& t : doc["tools"]) {
            ToolSchema schema = tool_schema_from_json(t, d.id);
            if (d.find_tool(schema.name) != nullptr) {
                violation("tool names must be pairwise distinct: " + schema.name, "dialogue " + d.id);
            }
            d.tools.push_back(std::move(schema));
        }
    }

    const json messages = doc.value("messages", json::array());
    if (!messages.is_array()) violation("messages must be a list", "dialogue " + d.id);

    std::optional<TurnBuilder> current;
    auto close_turn = [&](size_t msg_index) {
        if (!current) return;
        if (!current->complete()) {
            if (mode == ParseMode::Strict) {
                violation("turn must end with a final reply", loc(d.id, msg_index));
            }
            current->turn.incomplete = true;
        }
        d.turns.push_back(std::move(current->turn));
        current.reset();
    };

    for (size_t i = 0; i < messages.size(); ++i) {
        const json& msg = messages[i];
        if (!msg.is_object() || !msg.contains("role") || !msg["role"].is_string()) {
            throw Error(ErrorCode::MalformedDocument, "message without a role at " + loc(d.id, i));
        }
        const std::string role = msg["role"].get<std::string>();
        const std::string content = msg.value("content", "");

        if (role == "system") {
            if (i != 0) violation("system message only allowed at the start", loc(d.id, i));
            d.system_prompt = content;
            continue;
        }
        if (role == "user") {
            close_turn(i);
            TurnBuilder builder;
            builder.turn.index = static_cast<int>(d.turns.size()) + 1;
            builder.turn.steps.push_back(make_user_query(content));
            current = std::move(builder);
            continue;
        }
        if (!current) violation("turn must start with UserQuery", loc(d.id, i));

        if (role == "assistant") {
            if (current->pending_responses > 0) {
                violation("tool responses missing before next AgentAction", loc(d.id, i));
            }
            Step step;
            step.kind = StepKind::AgentAction;
            step.content = content;
            if (msg.contains("reasoning") && !msg["reasoning"].is_null()) {
                if (!msg["reasoning"].is_string()) {
                    throw Error(ErrorCode::MalformedDocument, "reasoning must be a string at " + loc(d.id, i));
                }
                step.reasoning = msg["reasoning"].get<std::string>();
            }
            if (msg.contains("tool_calls") && !msg["tool_calls"].is_null()) {
                if (!msg["tool_calls"].is_array()) {
                    throw Error(ErrorCode::MalformedDocument, "tool_calls must be a list at " + loc(d.id, i));
                }
                for (const auto& call : msg["tool_calls"]) {
                    if (!call.is_object() || !call.contains("name") || !call["name"].is_string()) {
                        throw Error(ErrorCode::MalformedDocument, "tool call without a name at " + loc(d.id, i));
                    }
                    ToolCall tc;
                    tc.tool_name = call["name"].get<std::string>();
                    tc.arguments = call.value("arguments", json::object());
                    if (d.find_tool(tc.tool_name) == nullptr) {
                        violation("tool call references unknown tool: " + tc.tool_name, loc(d.id, i));
                    }
                    step.tool_calls.push_back(std::move(tc));
                }
            }
            if (step.tool_calls.empty() && step.content.empty()) {
                violation("AgentAction must carry tool calls or a reply", loc(d.id, i));
            }
            if (step.tool_calls.empty()) {
                current->saw_final_reply = true;
            } else if (current->saw_final_reply && mode == ParseMode::Strict) {
                violation("AgentAction after the turn's final reply", loc(d.id, i));
            }
            current->pending_responses = static_cast<int>(step.tool_calls.size());
            current->last_action_calls = static_cast<int>(step.tool_calls.size());
            current->turn.steps.push_back(std::move(step));
            continue;
        }
        if (role == "tool") {
            if (current->pending_responses <= 0) {
                violation("ToolResponse without a pending tool call", loc(d.id, i));
            }
            const int expected = current->last_action_calls - current->pending_responses;
            int index = expected;
            if (msg.contains("tool_call_index") && !msg["tool_call_index"].is_null()) {
                if (!msg["tool_call_index"].is_number_integer()) {
                    throw Error(ErrorCode::MalformedDocument, "tool_call_index must be an integer at " + loc(d.id, i));
                }
                index = msg["tool_call_index"].get<int>();
            }
            if (index != expected) {
                violation("ToolResponse out of order: expected index " + std::to_string(expected) +
                              ", got " + std::to_string(index),
                          loc(d.id, i));
            }
            current->pending_responses -= 1;
            current->turn.steps.push_back(make_tool_response(content, index));
            continue;
        }
        violation("unknown role: " + role, loc(d.id, i));
    }
    close_turn(messages.size());
    return d;
}

Dialogue parse_dialogue(const std::string& line, ParseMode mode) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedDocument, e.what());
    }
    return dialogue_from_json(doc, mode);
}

json step_to_message(const Step& step) {
    json msg;
    switch (step.kind) {
    case StepKind::UserQuery:
        msg = {{"role", "user"}, {"content", step.content}};
        break;
    case StepKind::AgentAction: {
        msg = {{"role", "assistant"}, {"content", step.content}};
        if (step.reasoning) msg["reasoning"] = *step.reasoning;
        if (!step.tool_calls.empty()) {
            json calls = json::array();
            for (const auto& call : step.tool_calls) {
                calls.push_back({{"name", call.tool_name}, {"arguments", call.arguments}});
            }
            msg["tool_calls"] = std::move(calls);
        }
        break;
    }
    case StepKind::ToolResponse:
        msg = {{"role", "tool"}, {"content", step.content}};
        if (step.responding_to) msg["tool_call_index"] = *step.responding_to;
        break;
    }
    return msg;
}

json dialogue_to_json(const Dialogue& d) {
    json messages = json::array();
    if (d.system_prompt) {
        messages.push_back({{"role", "system"}, {"content", *d.system_prompt}});
    }
    for (const auto& turn : d.turns) {
        for (const auto& step : turn.steps) {
            messages.push_back(step_to_message(step));
        }
    }
    json tools = json::array();
    for (const auto& t : d.tools) tools.push_back(tool_schema_to_json(t));
    return {{"id", d.id}, {"tools", std::move(tools)}, {"messages", std::move(messages)}};
}

std::string serialize_dialogue(const Dialogue& d) { return dialogue_to_json(d).dump(); }

std::vector<Dialogue> parse_dialogue_stream(std::istream& in, ParseMode mode) {
    std::vector<Dialogue> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_dialogue(line, mode));
    }
    return out;
}

namespace {

void append_step(HistoryPrefix& prefix, const Step& step, bool is_prior_turn, const PrefixOptions& opt) {
    Step copy = step;
    if (is_prior_turn && !opt.keep_prior_reasoning) copy.reasoning.reset();
    prefix.steps.push_back(std::move(copy));
}

} // namespace

HistoryPrefix history_prefix(const Dialogue& d, int turn, int step, const PrefixOptions& options) {
    if (turn < 1 || turn > static_cast<int>(d.turns.size())) {
        throw Error(ErrorCode::OutOfRange, "turn " + std::to_string(turn) + " not in dialogue " + d.id);
    }
    const Turn& target = d.turns[static_cast<size_t>(turn - 1)];
    if (step < 1 || step > static_cast<int>(target.steps.size())) {
        throw Error(ErrorCode::OutOfRange,
                    "step " + std::to_string(step) + " not in turn " + std::to_string(turn) + " of " + d.id);
    }
    HistoryPrefix prefix;
    prefix.dialogue_id = d.id;
    prefix.upto_turn = turn;
    prefix.upto_step = step;
    for (int t = 1; t < turn; ++t) {
        prefix.turn_starts.push_back(prefix.steps.size());
        for (const auto& s : d.turns[static_cast<size_t>(t - 1)].steps) {
            append_step(prefix, s, true, options);
        }
    }
    prefix.turn_starts.push_back(prefix.steps.size());
    for (int s = 1; s <= step; ++s) {
        append_step(prefix, target.steps[static_cast<size_t>(s - 1)], false, options);
    }
    return prefix;
}

HistoryPrefix full_prefix(const Dialogue& d, const PrefixOptions& options) {
    if (d.turns.empty()) {
        HistoryPrefix prefix;
        prefix.dialogue_id = d.id;
        return prefix;
    }
    const Turn& last = d.turns.back();
    return history_prefix(d, last.index, static_cast<int>(last.steps.size()), options);
}

} // namespace checklist_rl
