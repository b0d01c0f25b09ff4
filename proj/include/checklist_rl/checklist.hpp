#pragma once

#include <map>
#include <string>
#include <vector>

#include "checklist_rl/trajectory.hpp"

namespace checklist_rl {

enum class ItemFocus { ToolCall, Reasoning, FinalReply, ToolResponse };

const char* item_focus_name(ItemFocus focus);
ItemFocus item_focus_from_name(const std::string& name);

struct EvidenceLocator {
    int turn = 0;
    int step = 0; // raw step index within the turn, 1-based

    bool operator==(const EvidenceLocator&) const = default;
};

struct ChecklistItem {
    std::string id; // unique within its turn
    std::vector<EvidenceLocator> evidence;
    ItemFocus focus = ItemFocus::ToolCall;
    std::string question;
    std::string pass_criteria;
    std::string fail_criteria;
    bool required_for_next_turn = false;
    std::vector<std::string> dependencies; // item ids within the same turn
    double weight = 0.0;

    bool operator==(const ChecklistItem&) const = default;
};

struct Checklist {
    int turn_index = 1;
    std::vector<ChecklistItem> items;

    const ChecklistItem* find_item(const std::string& id) const;
    int item_position(const std::string& id) const; // -1 if absent

    bool operator==(const Checklist&) const = default;
};

struct AnnotatedDialogue {
    Dialogue dialogue;
    std::map<int, Checklist> checklists; // turn index -> checklist
};

struct ChecklistViolation {
    std::string rule;    // WeightSumMismatch, DependencyCycle, ...
    std::string item_id; // empty for checklist-level rules
    std::string message;
};

struct ValidationReport {
    std::vector<ChecklistViolation> violations;
    bool ok() const { return violations.empty(); }
};

// Weight sums are accepted within 1e-6 of 1; annotated decimals rarely sum exactly.
inline constexpr double kWeightSumTolerance = 1e-6;

ValidationReport validate_checklist(const Checklist& c);

// Rescales weights to sum to 1. Throws AllZeroWeights when the sum is zero.
Checklist normalize_weights(const Checklist& c);

// Topological order over the dependency edges, deterministic by item-id
// tie-break. Throws DependencyCycle.
std::vector<std::string> dependency_order(const Checklist& c);

// Checklist interchange format: one document per line with fields
// `dialogue_id`, `turn`, `items`.
Checklist checklist_from_json(const json& doc);
json checklist_to_json(const Checklist& c, const std::string& dialogue_id);

struct AnnotationLoadResult {
    std::vector<AnnotatedDialogue> annotated;
    std::vector<ChecklistViolation> flagged; // unresolved evidence and similar
};

AnnotationLoadResult load_annotations(const std::vector<Dialogue>& dialogues,
                                      std::istream& annotation_stream);
AnnotationLoadResult load_annotations(const std::vector<Dialogue>& dialogues,
                                      const std::vector<std::pair<std::string, Checklist>>& annotations);

// Annotation endpoint hook: checklist generation itself happens behind the
// endpoint; the reply must be a checklist interchange document for the
// requested turn and is schema-validated here.
struct AnnotatorClient {
    std::string host;
    int port = 0;
    double timeout_seconds = 60.0;
};

AnnotatorClient make_annotator_client(const std::string& address, double timeout_seconds = 60.0);

// POST /annotate {"dialogue": <doc>, "turn": t} -> checklist document.
Checklist fetch_annotation(const AnnotatorClient& client, const Dialogue& d, int turn);

} // namespace checklist_rl
