#pragma once

#include <random>

#include "checklist_rl/advantage.hpp"
#include "checklist_rl/judge.hpp"
#include "checklist_rl/rollout.hpp"

namespace checklist_rl::testfix {

// Fixture F3: one turn, three items (weights 0.5/0.3/0.2), c2 and c3 depend
// on c1, c3 is the strict final-reply item. The canonical trace satisfies
// c1 at step 1, c2 at step 2, c3 at step 3.
inline Dialogue f3_dialogue() {
    Dialogue d;
    d.id = "f3";
    {
        ToolSchema lookup;
        lookup.name = "lookup";
        lookup.description = "city lookup";
        lookup.parameters["city"] = {"string", true, "city name"};
        d.tools.push_back(lookup);
        ToolSchema compute;
        compute.name = "compute";
        compute.description = "simple math";
        compute.parameters["n"] = {"integer", true, "operand"};
        d.tools.push_back(compute);
    }
    Turn turn;
    turn.index = 1;
    turn.steps.push_back(make_user_query("Plan the trip and confirm."));
    turn.steps.push_back(make_tool_call_action({{"lookup", json{{"city", "Paris"}}}}, "check the city"));
    turn.steps.push_back(make_tool_response({R"({"status":"ok","temp":21})"}, 0));
    turn.steps.push_back(make_tool_call_action({{"compute", json{{"n", 2}}}}));
    turn.steps.push_back(make_tool_response({R"({"result":4})"}, 0));
    turn.steps.push_back(make_reply("Booked! done-paris.", "wrap up"));
    d.turns.push_back(std::move(turn));
    return d;
}

inline Checklist f3_checklist() {
    Checklist c;
    c.turn_index = 1;
    ChecklistItem c1;
    c1.id = "c1";
    c1.evidence.push_back({1, 2});
    c1.focus = ItemFocus::ToolCall;
    c1.question = "Was lookup called for Paris?";
    c1.pass_criteria = "lookup(city=Paris) present";
    c1.fail_criteria = "missing or wrong city";
    c1.weight = 0.5;
    ChecklistItem c2;
    c2.id = "c2";
    c2.evidence.push_back({1, 4});
    c2.focus = ItemFocus::ToolCall;
    c2.question = "Was compute called with n=2?";
    c2.pass_criteria = "compute(n=2) present";
    c2.fail_criteria = "missing or wrong operand";
    c2.dependencies = {"c1"};
    c2.weight = 0.3;
    ChecklistItem c3;
    c3.id = "c3";
    c3.evidence.push_back({1, 6});
    c3.focus = ItemFocus::FinalReply;
    c3.question = "Does the reply confirm with done-paris?";
    c3.pass_criteria = "reply contains done-paris";
    c3.fail_criteria = "no confirmation";
    c3.required_for_next_turn = true;
    c3.dependencies = {"c1"};
    c3.weight = 0.2;
    c.items = {c1, c2, c3};
    return c;
}

inline std::map<std::string, std::string> f3_predicate_sources() {
    return {{"c1", "tool_called(name=\"lookup\", args.city=\"Paris\")"},
            {"c2", "tool_called(name=\"compute\", args.n=2)"},
            {"c3", "reply_contains(\"done-paris\")"}};
}

inline AnnotatedDialogue f3_annotated() {
    AnnotatedDialogue annotated;
    annotated.dialogue = f3_dialogue();
    annotated.checklists[1] = f3_checklist();
    return annotated;
}

inline JudgeVerdict verdict(int turn, int step, std::map<std::string, bool> labels) {
    JudgeVerdict v;
    v.turn_index = turn;
    v.step_index = step;
    v.labels = std::move(labels);
    return v;
}

// The F3 canonical raw label sequence: c1 true from step 1, c2 from 2, c3 from 3.
inline std::vector<JudgeVerdict> f3_perfect_verdicts() {
    return {verdict(1, 1, {{"c1", true}, {"c2", false}, {"c3", false}}),
            verdict(1, 2, {{"c1", true}, {"c2", true}, {"c3", false}}),
            verdict(1, 3, {{"c1", true}, {"c2", true}, {"c3", true}})};
}

// Randomized small instances for oracle-equivalence and invariant fuzzing.
struct FuzzInstance {
    std::map<int, Checklist> checklists;
    std::vector<std::map<int, SatisfactionTrace>> traces;
    int reference_turns = 1;
};

inline FuzzInstance random_instance(std::mt19937_64& rng, int max_group = 8, int max_turns = 4,
                                    int max_steps = 6, int max_items = 6) {
    auto pick = [&rng](int lo, int hi) {
        return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
    };
    FuzzInstance instance;
    const int turns = pick(1, max_turns);
    const int group = pick(2, max_group);
    instance.reference_turns = turns;
    for (int t = 1; t <= turns; ++t) {
        Checklist checklist;
        checklist.turn_index = t;
        const int items = pick(1, max_items);
        for (int k = 0; k < items; ++k) {
            ChecklistItem item;
            item.id = "i" + std::to_string(k + 1);
            item.question = "fuzz item " + item.id;
            item.weight = 0.05 + static_cast<double>(rng() % 1000) / 1000.0;
            item.required_for_next_turn = rng() % 4 == 0;
            for (int earlier = 0; earlier < k; ++earlier) {
                if (rng() % 10 < 3) item.dependencies.push_back("i" + std::to_string(earlier + 1));
            }
            checklist.items.push_back(std::move(item));
        }
        instance.checklists[t] = normalize_weights(checklist);
    }
    for (int i = 0; i < group; ++i) {
        std::map<int, SatisfactionTrace> per_turn;
        const int reached = pick(1, turns);
        for (int t = 1; t <= reached; ++t) {
            const Checklist& checklist = instance.checklists[t];
            const int steps = pick(0, max_steps);
            std::vector<JudgeVerdict> verdicts;
            for (int s = 1; s <= steps; ++s) {
                JudgeVerdict v;
                v.turn_index = t;
                v.step_index = s;
                for (const auto& item : checklist.items) {
                    v.labels[item.id] = rng() % 100 < 35;
                }
                verdicts.push_back(std::move(v));
            }
            per_turn[t] = latch_trace(checklist, verdicts);
        }
        instance.traces.push_back(std::move(per_turn));
    }
    return instance;
}

} // namespace checklist_rl::testfix
