#include "checklist_rl/datapipe.hpp"

#include <algorithm>

#include "checklist_rl/http_client.hpp"
#include "checklist_rl/stable_hash.hpp"

namespace checklist_rl {

namespace {

struct RuleSink {
    const FilterConfig& config;
    FilterReport& report;

    void add(int rule, const std::string& location, const std::string& message) {
        if (!config.enabled_rules.count(rule)) return;
        report.violations.push_back({rule, location, message});
    }
};

bool value_matches_type(const json& value, const std::string& type) {
    if (type == "string") return value.is_string();
    if (type == "number") return value.is_number();
    if (type == "integer") return value.is_number_integer() || value.is_number_unsigned() ||
                                   (value.is_number_float() &&
                                    value.get<double>() == std::floor(value.get<double>()));
    if (type == "boolean") return value.is_boolean();
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "null") return value.is_null();
    return true; // unknown type tags are not the call's fault
}

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    size_t count = 0;
    size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

void check_tool_call_against_schema(const json& call, const std::map<std::string, json>& schemas,
                                    const std::string& where, RuleSink& sink,
                                    const FilterConfig& config) {
    const std::string name = call.value("name", "");
    auto schema_it = schemas.find(name);
    if (schema_it == schemas.end()) {
        sink.add(1, where, "call to undeclared tool " + name);
        return;
    }
    json arguments = call.value("arguments", json::object());
    if (arguments.is_string()) {
        // Stringified arguments must still parse.
        try {
            arguments = json::parse(arguments.get<std::string>());
        } catch (const json::parse_error&) {
            sink.add(5, where, "tool call arguments are not valid JSON");
            return;
        }
    }
    if (!arguments.is_object()) {
        sink.add(1, where, "tool call arguments must be an object");
        return;
    }
    const json params = schema_it->second.value("parameters", json::object());
    for (auto it = params.begin(); it != params.end(); ++it) {
        const bool required = it.value().is_object() && it.value().value("required", false);
        if (required && !arguments.contains(it.key())) {
            sink.add(1, where, "missing required argument " + it.key() + " for " + name);
        }
        if (arguments.contains(it.key()) && it.value().is_object()) {
            const std::string type = it.value().value("type", "");
            if (!type.empty() && !value_matches_type(arguments[it.key()], type)) {
                sink.add(1, where, "argument " + it.key() + " of " + name + " is not a " + type);
            }
        }
    }
    if (config.reject_unknown_args) {
        for (auto it = arguments.begin(); it != arguments.end(); ++it) {
            if (!params.contains(it.key())) {
                sink.add(1, where, "unknown argument " + it.key() + " for " + name);
            }
        }
    }
}

} // namespace

FilterReport filter_dialogue(const std::string& raw_line, const FilterConfig& config) {
    FilterReport report;
    RuleSink sink{config, report};

    json doc;
    try {
        doc = json::parse(raw_line);
    } catch (const json::parse_error& e) {
        sink.add(5, "line", std::string("invalid JSON: ") + e.what());
        report.pass = report.violations.empty();
        return report;
    }
    if (!doc.is_object()) {
        sink.add(5, "line", "document is not an object");
        report.pass = report.violations.empty();
        return report;
    }
    report.dialogue_id = doc.value("id", "");

    // Rule 6: duplicate schemas or names.
    std::map<std::string, json> schemas;
    for (const auto& tool : doc.value("tools", json::array())) {
        if (!tool.is_object()) {
            sink.add(5, "tools", "tool schema is not an object");
            continue;
        }
        const std::string name = tool.value("name", "");
        if (schemas.count(name)) {
            sink.add(6, "tools", "duplicate tool name " + name);
        } else {
            schemas[name] = tool;
        }
    }

    const json messages = doc.value("messages", json::array());
    bool saw_user = false;
    int pending_responses = 0;
    bool previous_had_reply = true;
    for (size_t i = 0; i < messages.size(); ++i) {
        const std::string where = "message " + std::to_string(i + 1);
        const json& msg = messages[static_cast<size_t>(i)];
        if (!msg.is_object() || !msg.contains("role")) {
            sink.add(5, where, "message without a role");
            continue;
        }
        const std::string role = msg.value("role", "");
        const std::string content = msg.value("content", "");

        if (role == "system") {
            if (i != 0) sink.add(2, where, "system message after the start");
            continue;
        }
        if (role == "user") {
            if (pending_responses > 0) {
                sink.add(2, where, "user message while tool responses are pending");
                sink.add(3, where, "unanswered tool calls before the next turn");
                pending_responses = 0;
            }
            if (saw_user && !previous_had_reply) {
                sink.add(2, where, "new turn before the previous final reply");
            }
            saw_user = true;
            previous_had_reply = false;
            continue;
        }
        if (role == "assistant") {
            if (!saw_user) sink.add(2, where, "assistant message before any user turn");
            if (pending_responses > 0) {
                sink.add(3, where, "assistant message while tool responses are pending");
                pending_responses = 0;
            }
            // Rule 4: tool response payloads do not belong in assistant turns.
            if (msg.contains("tool_call_index") || content.find("<tool_response>") != std::string::npos) {
                sink.add(4, where, "tool response content inside an assistant message");
            }
            // Rule 7: reasoning block count per the corpus mode.
            size_t reasoning_blocks = count_occurrences(content, "<think>");
            if (msg.contains("reasoning") && msg["reasoning"].is_string() &&
                !msg["reasoning"].get<std::string>().empty()) {
                ++reasoning_blocks;
            }
            if (config.reasoning_required && reasoning_blocks == 0) {
                sink.add(7, where, "assistant message without a thinking block");
            }
            if (config.reasoning_required && reasoning_blocks > 1) {
                sink.add(7, where, "assistant message with redundant thinking blocks");
            }
            if (!config.reasoning_required && reasoning_blocks > 0) {
                sink.add(7, where, "thinking block in a non-reasoning corpus");
            }
            const json calls = msg.value("tool_calls", json::array());
            if (!calls.is_array()) {
                sink.add(5, where, "tool_calls is not a list");
            } else {
                for (const auto& call : calls) {
                    check_tool_call_against_schema(call, schemas, where, sink, config);
                }
                pending_responses = static_cast<int>(calls.size());
                if (calls.empty()) previous_had_reply = true;
            }
            continue;
        }
        if (role == "tool") {
            if (pending_responses <= 0) {
                sink.add(2, where, "tool message without a preceding tool call");
                sink.add(3, where, "tool response does not answer any call");
            } else {
                --pending_responses;
            }
            continue;
        }
        sink.add(2, where, "unknown role " + role);
    }
    if (pending_responses > 0) {
        sink.add(3, "end", "dialogue ends with unanswered tool calls");
    }

    report.pass = report.violations.empty();
    return report;
}

json filter_report_to_json(const FilterReport& report) {
    json violations = json::array();
    for (const auto& v : report.violations) {
        violations.push_back({{"rule", v.rule}, {"location", v.location}, {"message", v.message}});
    }
    return {{"dialogue_id", report.dialogue_id},
            {"verdict", report.pass ? "Pass" : "Reject"},
            {"violations", std::move(violations)}};
}

CorpusStats corpus_stats(const std::vector<std::string>& lines, const FilterConfig& config) {
    CorpusStats stats;
    for (const auto& line : lines) {
        if (line.empty()) continue;
        ++stats.dialogues;
        const FilterReport report = filter_dialogue(line, config);
        if (!report.pass) {
            ++stats.rejected;
            std::set<int> rules;
            for (const auto& v : report.violations) rules.insert(v.rule);
            for (int rule : rules) stats.violations_per_rule[rule] += 1;
            continue;
        }
        ++stats.passed;
        Dialogue d;
        try {
            d = parse_dialogue(line, ParseMode::Lenient);
        } catch (const Error&) {
            continue; // filter rules already accepted it; structural stats best-effort
        }
        stats.turns_per_dialogue[static_cast<int>(d.turns.size())] += 1;
        int calls = 0;
        for (const auto& turn : d.turns) {
            stats.steps_per_turn[static_cast<int>(turn.steps.size())] += 1;
            for (const auto& step : turn.steps) calls += static_cast<int>(step.tool_calls.size());
        }
        stats.tool_calls_per_dialogue[calls] += 1;
        stats.total_tool_calls += calls;
        if (d.turns.size() <= 1) ++stats.single_turn_count;
        if (calls <= 1) ++stats.single_tool_count;
        if (d.turns.size() >= 2 && calls >= 2) ++stats.complex_count;
    }
    return stats;
}

json corpus_stats_to_json(const CorpusStats& stats) {
    auto histogram = [](const std::map<int, int>& counts) {
        json out = json::object();
        for (const auto& [k, v] : counts) out[std::to_string(k)] = v;
        return out;
    };
    return {{"dialogues", stats.dialogues},
            {"passed", stats.passed},
            {"rejected", stats.rejected},
            {"violations_per_rule", histogram(stats.violations_per_rule)},
            {"turns_per_dialogue", histogram(stats.turns_per_dialogue)},
            {"steps_per_turn", histogram(stats.steps_per_turn)},
            {"tool_calls_per_dialogue", histogram(stats.tool_calls_per_dialogue)},
            {"total_tool_calls", stats.total_tool_calls},
            {"single_turn_count", stats.single_turn_count},
            {"single_tool_count", stats.single_tool_count},
            {"complex_count", stats.complex_count}};
}

bool is_complex_dialogue(const Dialogue& d) {
    int calls = 0;
    for (const auto& turn : d.turns) {
        for (const auto& step : turn.steps) calls += static_cast<int>(step.tool_calls.size());
    }
    return d.turns.size() >= 2 && calls >= 2;
}

SplitResult sample_split(const std::vector<std::pair<std::string, bool>>& ids_with_complexity,
                         const SplitSizes& sizes, uint64_t seed) {
    if (sizes.cold_start < 0 || sizes.rl < 0 || sizes.validation < 0) {
        throw Error(ErrorCode::InvalidConfig, "split sizes must be non-negative");
    }
    std::vector<size_t> order(ids_with_complexity.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Fisher-Yates on a splitmix stream: stable across platforms.
    uint64_t state = splitmix64(seed);
    for (size_t i = order.size(); i > 1; --i) {
        state = splitmix64(state);
        std::swap(order[i - 1], order[state % i]);
    }

    if (static_cast<int>(order.size()) < sizes.cold_start) {
        throw Error(ErrorCode::InsufficientData, "fewer dialogues than the cold-start size");
    }
    SplitResult result;
    std::vector<size_t> remainder;
    for (size_t k = 0; k < order.size(); ++k) {
        if (static_cast<int>(k) < sizes.cold_start) {
            result.cold_start.push_back(ids_with_complexity[order[k]].first);
        } else {
            remainder.push_back(order[k]);
        }
    }
    std::vector<std::string> pool;
    for (size_t idx : remainder) {
        if (ids_with_complexity[idx].second) pool.push_back(ids_with_complexity[idx].first);
    }
    if (static_cast<int>(pool.size()) < sizes.rl + sizes.validation) {
        throw Error(ErrorCode::InsufficientData,
                    "complex pool has " + std::to_string(pool.size()) + " dialogues, need " +
                        std::to_string(sizes.rl + sizes.validation));
    }
    result.rl.assign(pool.begin(), pool.begin() + sizes.rl);
    result.validation.assign(pool.begin() + sizes.rl, pool.begin() + sizes.rl + sizes.validation);
    return result;
}

SemanticFilterClient make_semantic_filter(const std::string& address, double timeout_seconds) {
    auto [host, port] = parse_address(address);
    SemanticFilterClient client;
    client.host = host;
    client.port = port;
    client.timeout_seconds = timeout_seconds;
    return client;
}

bool semantic_filter_pass(const SemanticFilterClient& client, const json& dialogue_doc) {
    for (const auto& effort : client.effort_ladder) {
        const json reply = http_post_json(client.host, client.port, "/filter_llm",
                                          {{"dialogue", dialogue_doc}, {"effort", effort}},
                                          client.timeout_seconds);
        if (!reply.is_object() || !reply.contains("flagged") || !reply["flagged"].is_boolean()) {
            throw Error(ErrorCode::EndpointMalformedReply, "semantic filter reply lacks a flagged boolean");
        }
        if (reply["flagged"].get<bool>()) return false; // early exit on the first flag
    }
    return true;
}

CompressionClient make_compression_client(const std::string& address, double timeout_seconds) {
    auto [host, port] = parse_address(address);
    CompressionClient client;
    client.host = host;
    client.port = port;
    client.timeout_seconds = timeout_seconds;
    return client;
}

Dialogue compress_reasoning(const CompressionClient& client, const Dialogue& d) {
    Dialogue out = d;
    for (auto& turn : out.turns) {
        for (auto& step : turn.steps) {
            if (step.kind != StepKind::AgentAction || !step.reasoning || step.reasoning->empty()) continue;
            const json reply = http_post_json(client.host, client.port, "/compress",
                                              {{"reasoning", *step.reasoning}}, client.timeout_seconds);
            if (!reply.is_object() || !reply.contains("reasoning") || !reply["reasoning"].is_string()) {
                throw Error(ErrorCode::EndpointMalformedReply, "compression reply lacks reasoning text");
            }
            const std::string rewritten = reply["reasoning"].get<std::string>();
            if (rewritten.size() >= step.reasoning->size()) {
                throw Error(ErrorCode::EndpointMalformedReply,
                            "compressed reasoning is not shorter than the original");
            }
            step.reasoning = rewritten;
        }
    }
    return out;
}

} // namespace checklist_rl
