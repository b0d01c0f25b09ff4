#include "checklist_rl/checklist.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

#include "checklist_rl/http_client.hpp"

namespace checklist_rl {

const char* item_focus_name(ItemFocus focus) {
    switch (focus) {
    case ItemFocus::ToolCall: return "ToolCall";
    case ItemFocus::Reasoning: return "Reasoning";
    case ItemFocus::FinalReply: return "FinalReply";
    case ItemFocus::ToolResponse: return "ToolResponse";
    }
    return "?";
}

ItemFocus item_focus_from_name(const std::string& name) {
    if (name == "ToolCall") return ItemFocus::ToolCall;
    if (name == "Reasoning") return ItemFocus::Reasoning;
    if (name == "FinalReply") return ItemFocus::FinalReply;
    if (name == "ToolResponse") return ItemFocus::ToolResponse;
    throw Error(ErrorCode::MalformedDocument, "unknown focus: " + name);
}

const ChecklistItem* Checklist::find_item(const std::string& id) const {
    for (const auto& item : items) {
        if (item.id == id) return &item;
    }
    return nullptr;
}

int Checklist::item_position(const std::string& id) const {
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

namespace {

// Kahn's algorithm with a sorted frontier so ties break by item id.
// Returns nullopt when a cycle blocks completion.
std::optional<std::vector<std::string>> try_topological_order(const Checklist& c) {
    std::map<std::string, int> remaining_deps;
    std::map<std::string, std::vector<std::string>> dependents;
    for (const auto& item : c.items) {
        remaining_deps[item.id] = 0;
    }
    for (const auto& item : c.items) {
        for (const auto& dep : item.dependencies) {
            if (!remaining_deps.count(dep) || dep == item.id) continue; // reported by validate
            remaining_deps[item.id] += 1;
            dependents[dep].push_back(item.id);
        }
    }
    std::set<std::string> frontier;
    for (const auto& [id, n] : remaining_deps) {
        if (n == 0) frontier.insert(id);
    }
    std::vector<std::string> order;
    while (!frontier.empty()) {
        std::string id = *frontier.begin();
        frontier.erase(frontier.begin());
        order.push_back(id);
        for (const auto& next : dependents[id]) {
            if (--remaining_deps[next] == 0) frontier.insert(next);
        }
    }
    if (order.size() != c.items.size()) return std::nullopt;
    return order;
}

} // namespace

ValidationReport validate_checklist(const Checklist& c) {
    ValidationReport report;
    std::set<std::string> ids;
    double weight_sum = 0.0;
    for (const auto& item : c.items) {
        if (!ids.insert(item.id).second) {
            report.violations.push_back({"DuplicateItemId", item.id, "item id repeats within the turn"});
        }
        if (item.question.empty()) {
            report.violations.push_back({"EmptyQuestion", item.id, "question must be non-empty"});
        }
        if (item.weight < 0.0) {
            report.violations.push_back({"NegativeWeight", item.id,
                                         "weight " + std::to_string(item.weight) + " is negative"});
        }
        weight_sum += item.weight;
    }
    for (const auto& item : c.items) {
        for (const auto& dep : item.dependencies) {
            if (dep == item.id) {
                report.violations.push_back({"SelfDependency", item.id, "item depends on itself"});
            } else if (!ids.count(dep)) {
                report.violations.push_back(
                    {"UnknownDependency", item.id, "dependency " + dep + " is not in this turn"});
            }
        }
    }
    if (!c.items.empty() && std::fabs(weight_sum - 1.0) > kWeightSumTolerance) {
        std::ostringstream msg;
        msg << "weights sum to " << weight_sum;
        report.violations.push_back({"WeightSumMismatch", "", msg.str()});
    }
    if (!try_topological_order(c)) {
        report.violations.push_back({"DependencyCycle", "", "dependency relation has a cycle"});
    }
    return report;
}

Checklist normalize_weights(const Checklist& c) {
    double sum = 0.0;
    for (const auto& item : c.items) sum += item.weight;
    if (sum <= 0.0) throw Error(ErrorCode::AllZeroWeights, "turn " + std::to_string(c.turn_index));
    Checklist out = c;
    for (auto& item : out.items) item.weight /= sum;
    return out;
}

std::vector<std::string> dependency_order(const Checklist& c) {
    auto order = try_topological_order(c);
    if (!order) throw Error(ErrorCode::DependencyCycle, "turn " + std::to_string(c.turn_index));
    return *order;
}

Checklist checklist_from_json(const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedDocument, "checklist document must be an object");
    Checklist c;
    c.turn_index = doc.value("turn", 0);
    if (c.turn_index < 1) throw Error(ErrorCode::MalformedDocument, "checklist turn must be >= 1");
    for (const auto& entry : doc.value("items", json::array())) {
        ChecklistItem item;
        item.id = entry.value("id", "");
        if (item.id.empty()) throw Error(ErrorCode::MalformedDocument, "checklist item without id");
        for (const auto& ev : entry.value("evidence", json::array())) {
            if (!ev.is_array() || ev.size() != 2) {
                throw Error(ErrorCode::MalformedDocument, "evidence locator must be a [turn, step] pair");
            }
            item.evidence.push_back({ev[0].get<int>(), ev[1].get<int>()});
        }
        item.focus = item_focus_from_name(entry.value("focus", "ToolCall"));
        item.question = entry.value("question", "");
        item.pass_criteria = entry.value("pass", "");
        item.fail_criteria = entry.value("fail", "");
        item.required_for_next_turn = entry.value("required_for_next_turn", false);
        for (const auto& dep : entry.value("deps", json::array())) {
            item.dependencies.push_back(dep.get<std::string>());
        }
        item.weight = entry.value("weight", 0.0);
        c.items.push_back(std::move(item));
    }
    return c;
}

json checklist_to_json(const Checklist& c, const std::string& dialogue_id) {
    json items = json::array();
    for (const auto& item : c.items) {
        json evidence = json::array();
        for (const auto& ev : item.evidence) evidence.push_back({ev.turn, ev.step});
        items.push_back({{"id", item.id},
                         {"evidence", std::move(evidence)},
                         {"focus", item_focus_name(item.focus)},
                         {"question", item.question},
                         {"pass", item.pass_criteria},
                         {"fail", item.fail_criteria},
                         {"required_for_next_turn", item.required_for_next_turn},
                         {"deps", item.dependencies},
                         {"weight", item.weight}});
    }
    return {{"dialogue_id", dialogue_id}, {"turn", c.turn_index}, {"items", std::move(items)}};
}

AnnotationLoadResult load_annotations(const std::vector<Dialogue>& dialogues,
                                      const std::vector<std::pair<std::string, Checklist>>& annotations) {
    std::map<std::string, const Dialogue*> by_id;
    for (const auto& d : dialogues) by_id[d.id] = &d;

    std::map<std::string, std::map<int, Checklist>> grouped;
    for (const auto& [dialogue_id, checklist] : annotations) {
        auto it = by_id.find(dialogue_id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::UnknownDialogue, dialogue_id);
        }
        grouped[dialogue_id][checklist.turn_index] = checklist;
    }

    AnnotationLoadResult result;
    for (const auto& d : dialogues) {
        AnnotatedDialogue annotated;
        annotated.dialogue = d;
        auto& checklists = grouped[d.id];
        for (const auto& turn : d.turns) {
            auto it = checklists.find(turn.index);
            if (it == checklists.end()) {
                throw Error(ErrorCode::MissingChecklist,
                            "dialogue " + d.id + ", turn " + std::to_string(turn.index));
            }
            const Checklist& c = it->second;
            ValidationReport report = validate_checklist(c);
            if (!report.ok()) {
                for (auto& v : report.violations) result.flagged.push_back(v);
            }
            for (const auto& item : c.items) {
                for (const auto& ev : item.evidence) {
                    bool resolves = ev.turn >= 1 && ev.turn <= static_cast<int>(d.turns.size()) &&
                                    ev.step >= 1 &&
                                    ev.step <= static_cast<int>(d.turns[static_cast<size_t>(ev.turn - 1)].steps.size());
                    if (!resolves) {
                        result.flagged.push_back({"UnresolvedEvidence", item.id,
                                                  "locator (" + std::to_string(ev.turn) + "," +
                                                      std::to_string(ev.step) + ") does not address a step of " +
                                                      d.id});
                    }
                }
            }
            annotated.checklists[turn.index] = c;
        }
        result.annotated.push_back(std::move(annotated));
    }
    return result;
}

AnnotationLoadResult load_annotations(const std::vector<Dialogue>& dialogues, std::istream& annotation_stream) {
    std::vector<std::pair<std::string, Checklist>> annotations;
    std::string line;
    while (std::getline(annotation_stream, line)) {
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedDocument, e.what());
        }
        annotations.emplace_back(doc.value("dialogue_id", ""), checklist_from_json(doc));
    }
    return load_annotations(dialogues, annotations);
}

AnnotatorClient make_annotator_client(const std::string& address, double timeout_seconds) {
    auto [host, port] = parse_address(address);
    AnnotatorClient client;
    client.host = host;
    client.port = port;
    client.timeout_seconds = timeout_seconds;
    return client;
}

Checklist fetch_annotation(const AnnotatorClient& client, const Dialogue& d, int turn) {
    const json reply = http_post_json(client.host, client.port, "/annotate",
                                      {{"dialogue", dialogue_to_json(d)}, {"turn", turn}},
                                      client.timeout_seconds);
    Checklist checklist = checklist_from_json(reply);
    if (checklist.turn_index != turn) {
        throw Error(ErrorCode::EndpointMalformedReply, "annotation is for the wrong turn");
    }
    const ValidationReport report = validate_checklist(checklist);
    if (!report.ok()) {
        throw Error(ErrorCode::EndpointMalformedReply,
                    "annotation fails validation: " + report.violations.front().rule);
    }
    return checklist;
}

} // namespace checklist_rl
