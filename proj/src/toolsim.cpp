#include "checklist_rl/toolsim.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "checklist_rl/http_client.hpp"
#include "checklist_rl/stable_hash.hpp"

namespace checklist_rl {

namespace {

// Largest double magnitude whose integer rendering is exact.
constexpr double kMaxExactInteger = 9007199254740992.0; // 2^53

void write_canonical(const json& node, std::string& out) {
    switch (node.type()) {
    case json::value_t::object: {
        out += '{';
        bool first = true;
        for (auto it = node.begin(); it != node.end(); ++it) { // nlohmann objects iterate key-sorted
            if (!first) out += ',';
            first = false;
            out += json(it.key()).dump();
            out += ':';
            write_canonical(it.value(), out);
        }
        out += '}';
        return;
    }
    case json::value_t::array: {
        out += '[';
        for (size_t i = 0; i < node.size(); ++i) {
            if (i > 0) out += ',';
            write_canonical(node[i], out);
        }
        out += ']';
        return;
    }
    case json::value_t::string:
        out += node.dump();
        return;
    case json::value_t::boolean:
        out += node.get<bool>() ? "true" : "false";
        return;
    case json::value_t::null:
        out += "null";
        return;
    case json::value_t::number_integer:
        out += std::to_string(node.get<int64_t>());
        return;
    case json::value_t::number_unsigned:
        out += std::to_string(node.get<uint64_t>());
        return;
    case json::value_t::number_float: {
        const double v = node.get<double>();
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteNumber, "cannot fingerprint " + node.dump());
        if (v == std::floor(v) && std::fabs(v) <= kMaxExactInteger) {
            // 1.0 and 1 fingerprint identically.
            out += std::to_string(static_cast<int64_t>(v));
            return;
        }
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        out.append(buf, ptr);
        return;
    }
    default:
        throw Error(ErrorCode::MalformedDocument, "unsupported node in argument tree");
    }
}

} // namespace

std::string canonicalize(const json& arguments) {
    std::string out;
    write_canonical(arguments, out);
    return out;
}

const ReplayEntry* ReplayStore::lookup(const std::string& tool_name, const json& arguments) const {
    auto it = entries.find({tool_name, canonicalize(arguments)});
    return it == entries.end() ? nullptr : &it->second;
}

ReplayStore build_replay_store(const Dialogue& d) {
    ReplayStore store;
    store.provenance = d.id;
    for (const auto& turn : d.turns) {
        const Step* last_action = nullptr;
        for (const auto& step : turn.steps) {
            if (step.kind == StepKind::AgentAction) {
                last_action = &step;
                continue;
            }
            if (step.kind != StepKind::ToolResponse || last_action == nullptr) continue;
            const int call_index = step.responding_to.value_or(0);
            if (call_index < 0 || call_index >= static_cast<int>(last_action->tool_calls.size())) continue;
            const ToolCall& call = last_action->tool_calls[static_cast<size_t>(call_index)];
            const auto key = std::make_pair(call.tool_name, canonicalize(call.arguments));
            auto [it, inserted] = store.entries.try_emplace(key, ReplayEntry{call.arguments, step.content});
            if (!inserted && it->second.response != step.content) {
                store.collision_warnings.push_back("tool " + call.tool_name + " args " + key.second +
                                                   " recorded with diverging responses; keeping the first");
            }
        }
    }
    return store;
}

SimulatorSpec make_echo_simulator() {
    SimulatorSpec spec;
    spec.kind = SimulatorSpec::Kind::Echo;
    return spec;
}

SimulatorSpec make_template_simulator(std::map<std::string, std::string> templates,
                                      std::optional<std::string> default_template) {
    SimulatorSpec spec;
    spec.kind = SimulatorSpec::Kind::Template;
    spec.templates = std::move(templates);
    spec.default_template = std::move(default_template);
    return spec;
}

SimulatorSpec make_external_simulator(const std::string& address, double timeout_seconds,
                                      bool fewshot_from_dialogue, int fewshot_limit) {
    auto [host, port] = parse_address(address);
    SimulatorSpec spec;
    spec.kind = SimulatorSpec::Kind::External;
    spec.host = host;
    spec.port = port;
    spec.timeout_seconds = timeout_seconds;
    spec.fewshot_from_dialogue = fewshot_from_dialogue;
    spec.fewshot_limit = fewshot_limit;
    return spec;
}

SimulatorSpec load_template_simulator(const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "template file must be an object");
    std::map<std::string, std::string> templates;
    std::optional<std::string> default_template;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.value().is_string()) {
            throw Error(ErrorCode::MalformedDocument, "template for " + it.key() + " must be a string");
        }
        if (it.key() == "*") {
            default_template = it.value().get<std::string>();
        } else {
            templates[it.key()] = it.value().get<std::string>();
        }
    }
    return make_template_simulator(std::move(templates), std::move(default_template));
}

const char* response_source_name(ResponseSource source) {
    return source == ResponseSource::Replayed ? "Replayed" : "Simulated";
}

namespace {

std::string placeholder_value(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    return canonicalize(value);
}

std::string render_template(const std::string& tmpl, const ToolCall& call) {
    std::string out;
    size_t pos = 0;
    while (pos < tmpl.size()) {
        const size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        const size_t close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        const std::string key = tmpl.substr(open + 1, close - open - 1);
        if (key == "tool") {
            out += call.tool_name;
        } else if (call.arguments.is_object() && call.arguments.contains(key)) {
            out += placeholder_value(call.arguments[key]);
        }
        pos = close + 1;
    }
    return out;
}

std::string echo_response(const ToolCall& call) {
    return json{{"echo", {{"tool", call.tool_name}, {"arguments", call.arguments}}}}.dump();
}

std::string external_response(const SimulatorSpec& sim, const ToolCall& call, const HistoryPrefix& prefix,
                              const ToolSchema& schema, const ReplayStore& store) {
    json exemplars = json::array();
    if (sim.fewshot_from_dialogue) {
        // Same-tool recorded I/O, deterministic order by fingerprint.
        for (const auto& [key, entry] : store.entries) {
            if (key.first != call.tool_name) continue;
            exemplars.push_back({{"arguments", entry.arguments}, {"response", entry.response}});
            if (static_cast<int>(exemplars.size()) >= sim.fewshot_limit) break;
        }
    }
    json prefix_steps = json::array();
    for (const auto& step : prefix.steps) prefix_steps.push_back(step_to_message(step));
    json schema_doc = json::object();
    {
        json params = json::object();
        for (const auto& [name, spec] : schema.parameters) {
            params[name] = {{"type", spec.type}, {"required", spec.required}, {"description", spec.description}};
        }
        schema_doc = {{"name", schema.name}, {"description", schema.description}, {"parameters", params}};
    }
    const json request = {{"tool", schema_doc},
                          {"name", call.tool_name},
                          {"arguments", call.arguments},
                          {"exemplars", std::move(exemplars)},
                          {"prefix_digest", fnv1a64(json(prefix_steps).dump())}};
    json reply;
    try {
        reply = http_post_json(sim.host, sim.port, "/simulate", request, sim.timeout_seconds);
    } catch (const Error& e) {
        throw Error(ErrorCode::SimulatorUnavailable, e.what());
    }
    if (!reply.is_object() || !reply.contains("response_text") || !reply["response_text"].is_string()) {
        throw Error(ErrorCode::SimulatorUnavailable, "simulator reply lacks response_text");
    }
    return reply["response_text"].get<std::string>();
}

} // namespace

ToolExecution execute(const ReplayStore& store, const SimulatorSpec& sim, const ToolCall& call,
                      const HistoryPrefix& prefix, const std::vector<ToolSchema>& tools) {
    const ToolSchema* schema = nullptr;
    for (const auto& t : tools) {
        if (t.name == call.tool_name) {
            schema = &t;
            break;
        }
    }
    if (schema == nullptr) throw Error(ErrorCode::UnknownTool, call.tool_name);

    if (const ReplayEntry* entry = store.lookup(call.tool_name, call.arguments)) {
        return {entry->response, ResponseSource::Replayed};
    }
    switch (sim.kind) {
    case SimulatorSpec::Kind::Echo:
        return {echo_response(call), ResponseSource::Simulated};
    case SimulatorSpec::Kind::Template: {
        auto it = sim.templates.find(call.tool_name);
        if (it != sim.templates.end()) return {render_template(it->second, call), ResponseSource::Simulated};
        if (sim.default_template) return {render_template(*sim.default_template, call), ResponseSource::Simulated};
        return {echo_response(call), ResponseSource::Simulated}; // stays total without a template
    }
    case SimulatorSpec::Kind::External:
        return {external_response(sim, call, prefix, *schema, store), ResponseSource::Simulated};
    }
    throw Error(ErrorCode::InvalidConfig, "unhandled simulator kind");
}

} // namespace checklist_rl
