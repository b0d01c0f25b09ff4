#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "checklist_rl/trajectory.hpp"

namespace checklist_rl {

// Deterministic argument fingerprint: invariant under map-key ordering and
// numeric respelling (1 vs 1.0), list order preserving. Throws
// NonFiniteNumber for NaN or infinities.
std::string canonicalize(const json& arguments);

struct ReplayEntry {
    json arguments;
    std::string response;
};

struct ReplayStore {
    // (tool name, canonical argument fingerprint) -> recorded response
    std::map<std::pair<std::string, std::string>, ReplayEntry> entries;
    std::string provenance; // dialogue id
    std::vector<std::string> collision_warnings;

    const ReplayEntry* lookup(const std::string& tool_name, const json& arguments) const;
};

// One entry per (tool call, matched response) pair in the dialogue. Repeated
// identical calls with diverging responses keep the first and record a warning.
ReplayStore build_replay_store(const Dialogue& d);

struct SimulatorSpec {
    enum class Kind { Echo, Template, External };
    Kind kind = Kind::Echo;

    // Template
    std::map<std::string, std::string> templates; // tool name -> template text, {param} placeholders
    std::optional<std::string> default_template;

    // External
    std::string host;
    int port = 0;
    double timeout_seconds = 10.0;
    bool fewshot_from_dialogue = true;
    int fewshot_limit = 4;
};

SimulatorSpec make_echo_simulator();
SimulatorSpec make_template_simulator(std::map<std::string, std::string> templates,
                                      std::optional<std::string> default_template = std::nullopt);
SimulatorSpec make_external_simulator(const std::string& address, double timeout_seconds = 10.0,
                                      bool fewshot_from_dialogue = true, int fewshot_limit = 4);

// Template file format: a JSON object mapping tool name -> template text.
// The key "*" declares the default template.
SimulatorSpec load_template_simulator(const json& doc);

enum class ResponseSource { Replayed, Simulated };

const char* response_source_name(ResponseSource source);

struct ToolExecution {
    std::string response;
    ResponseSource source = ResponseSource::Simulated;
};

// Exact-match replay with simulator fallback. The tool must exist in the
// prefix's dialogue tool set (callers validate; this checks against `tools`).
ToolExecution execute(const ReplayStore& store, const SimulatorSpec& sim, const ToolCall& call,
                      const HistoryPrefix& prefix, const std::vector<ToolSchema>& tools);

} // namespace checklist_rl
