#include "checklist_rl/rollout.hpp"

#include <cstdlib>
#include <future>
#include <istream>

namespace checklist_rl {

const char* termination_kind_name(TerminationKind kind) {
    switch (kind) {
    case TerminationKind::Completed: return "Completed";
    case TerminationKind::StrictnessGateFailed: return "StrictnessGateFailed";
    case TerminationKind::BudgetExceeded: return "BudgetExceeded";
    case TerminationKind::PolicyError: return "PolicyError";
    case TerminationKind::EnvironmentError: return "EnvironmentError";
    }
    return "?";
}

TerminationKind termination_kind_from_name(const std::string& name) {
    if (name == "Completed") return TerminationKind::Completed;
    if (name == "StrictnessGateFailed") return TerminationKind::StrictnessGateFailed;
    if (name == "BudgetExceeded") return TerminationKind::BudgetExceeded;
    if (name == "PolicyError") return TerminationKind::PolicyError;
    if (name == "EnvironmentError") return TerminationKind::EnvironmentError;
    throw Error(ErrorCode::MalformedDocument, "unknown termination kind: " + name);
}

Step ReplayPolicy::act(const HistoryPrefix& prefix) {
    const int turn = prefix.upto_turn;
    if (turn < 1 || turn > static_cast<int>(reference_.turns.size())) {
        throw Error(ErrorCode::OutOfRange, "replay policy has no reference turn " + std::to_string(turn));
    }
    int taken = 0;
    for (size_t i = prefix.current_turn_begin(); i < prefix.steps.size(); ++i) {
        if (prefix.steps[i].kind == StepKind::AgentAction) ++taken;
    }
    const Turn& reference_turn = reference_.turns[static_cast<size_t>(turn - 1)];
    int seen = 0;
    for (const auto& step : reference_turn.steps) {
        if (step.kind != StepKind::AgentAction) continue;
        if (seen == taken) return step;
        ++seen;
    }
    throw Error(ErrorCode::OutOfRange, "replay policy exhausted the reference actions of turn " +
                                           std::to_string(turn));
}

namespace {

JudgeVerdict carried_forward_verdict(const std::vector<JudgeVerdict>& verdicts, const Checklist& checklist,
                                     int step_index) {
    JudgeVerdict verdict;
    verdict.turn_index = checklist.turn_index;
    verdict.step_index = step_index;
    if (verdicts.empty()) {
        for (const auto& item : checklist.items) verdict.labels[item.id] = false;
    } else {
        verdict.labels = verdicts.back().labels;
    }
    return verdict;
}

} // namespace

RolloutRecord run_rollout(const AnnotatedDialogue& annotated, Policy& policy, const JudgeSpec& judge_spec,
                          const ReplayStore& store, const SimulatorSpec& sim, const RolloutBudget& budget,
                          uint64_t seed, const RolloutOptions& options) {
    if (budget.max_turns < 1 || budget.max_steps_per_turn < 1 || budget.max_total_steps < 1) {
        throw Error(ErrorCode::InvalidConfig, "rollout budget bounds must be >= 1");
    }
    const Dialogue& reference = annotated.dialogue;

    RolloutRecord record;
    record.group_id = options.group_id.empty() ? reference.id : options.group_id;
    record.rollout_index = options.rollout_index;
    record.seed = seed;
    record.checklists = annotated.checklists;
    record.realized.id = reference.id + "#" + std::to_string(options.rollout_index);
    record.realized.tools = reference.tools;
    record.realized.system_prompt = reference.system_prompt;

    policy.reset(seed);

    std::map<int, std::unique_ptr<RewardAccumulator>> accumulators;
    int total_actions = 0;
    bool stopped = false;

    for (const auto& reference_turn : reference.turns) {
        const int t = reference_turn.index;
        if (t > budget.max_turns) {
            record.termination = {TerminationKind::BudgetExceeded, 0, "max_turns"};
            stopped = true;
            break;
        }
        const Checklist& checklist = annotated.checklists.at(t);

        Turn turn;
        turn.index = t;
        turn.steps.push_back(reference_turn.steps.front()); // the reference user query
        record.realized.turns.push_back(std::move(turn));
        Turn& live = record.realized.turns.back();

        auto accumulator = std::make_unique<RewardAccumulator>(checklist);
        auto& verdicts = record.verdicts[t];
        int actions_this_turn = 0;
        bool turn_replied = false;

        while (!turn_replied) {
            if (actions_this_turn >= budget.max_steps_per_turn) {
                record.termination = {TerminationKind::BudgetExceeded, 0, "max_steps_per_turn"};
                live.incomplete = true;
                stopped = true;
                break;
            }
            if (total_actions >= budget.max_total_steps) {
                record.termination = {TerminationKind::BudgetExceeded, 0, "max_total_steps"};
                live.incomplete = true;
                stopped = true;
                break;
            }

            Step action;
            try {
                action = policy.act(full_prefix(record.realized));
                if (action.kind != StepKind::AgentAction ||
                    (action.tool_calls.empty() && action.content.empty())) {
                    throw Error(ErrorCode::StructuralViolation, "policy must return a well-formed AgentAction");
                }
            } catch (const std::exception& e) {
                record.termination = {TerminationKind::PolicyError, 0, e.what()};
                live.incomplete = true;
                stopped = true;
                break;
            }
            live.steps.push_back(action);
            ++actions_this_turn;
            ++total_actions;

            if (!action.tool_calls.empty()) {
                bool environment_failed = false;
                for (size_t k = 0; k < action.tool_calls.size(); ++k) {
                    try {
                        const ToolExecution result = execute(store, sim, action.tool_calls[k],
                                                             full_prefix(record.realized),
                                                             record.realized.tools);
                        live.steps.push_back(make_tool_response(result.response, static_cast<int>(k)));
                        record.source_tags.push_back(
                            {t, static_cast<int>(live.steps.size()), result.source});
                    } catch (const Error& e) {
                        record.termination = {TerminationKind::EnvironmentError, 0, e.what()};
                        environment_failed = true;
                        break;
                    }
                }
                if (environment_failed) {
                    live.incomplete = true;
                    stopped = true;
                    break;
                }
            }

            JudgeVerdict verdict;
            try {
                verdict = judge(judge_spec, full_prefix(record.realized), checklist);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::EndpointUnavailable || e.code() == ErrorCode::EndpointMalformedReply) {
                    // Keep the rollout alive: carry the previous labels forward.
                    verdict = carried_forward_verdict(verdicts, checklist, actions_this_turn);
                    ++record.judge_failures;
                } else {
                    throw;
                }
            }
            verdicts.push_back(verdict);
            accumulator->observe(verdict);

            if (action.is_final_reply()) turn_replied = true;
        }

        accumulators[t] = std::move(accumulator);
        if (stopped) break;

        bool strict_ok = true;
        for (const auto& item : checklist.items) {
            if (item.required_for_next_turn && !accumulators[t]->latched(item.id)) strict_ok = false;
        }
        if (!strict_ok) {
            record.termination = {TerminationKind::StrictnessGateFailed, t, ""};
            stopped = true;
            break;
        }
    }

    if (!stopped) record.termination = {TerminationKind::Completed, 0, ""};

    int realized_turns = 0;
    for (const auto& [t, accumulator] : accumulators) {
        record.grids[t] = accumulator->grid();
        record.summary.per_turn[t] = turn_reward(accumulator->grid(), annotated.checklists.at(t));
        realized_turns = std::max(realized_turns, t);
    }
    record.summary.denominator_turns =
        options.denominator_mode == DenominatorMode::ReferenceTurns
            ? std::max(static_cast<int>(reference.turns.size()), 1)
            : std::max(realized_turns, 1);
    record.summary.trajectory = trajectory_reward(record.summary.per_turn, record.summary.denominator_turns);
    return record;
}

namespace {

int thread_cap() {
    const char* env = std::getenv("CHECKLIST_RL_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

} // namespace

GroupResult run_group(const AnnotatedDialogue& annotated, const PolicyFactory& make_policy,
                      const JudgeSpec& judge_spec, const ReplayStore& store, const SimulatorSpec& sim,
                      const RolloutBudget& budget, int group_size, uint64_t base_seed,
                      const RolloutOptions& options) {
    if (group_size < 2) throw Error(ErrorCode::GroupTooSmall, "group size must be >= 2");
    GroupResult result;
    result.records.resize(static_cast<size_t>(group_size));

    auto run_one = [&](int i) {
        RolloutOptions opt = options;
        opt.rollout_index = i;
        if (opt.group_id.empty()) opt.group_id = annotated.dialogue.id;
        auto policy = make_policy(base_seed + static_cast<uint64_t>(i));
        result.records[static_cast<size_t>(i)] = run_rollout(annotated, *policy, judge_spec, store, sim,
                                                             budget, base_seed + static_cast<uint64_t>(i), opt);
    };

    const int threads = std::min(thread_cap(), group_size);
    if (threads <= 1) {
        for (int i = 0; i < group_size; ++i) run_one(i);
    } else {
        std::vector<std::future<void>> futures;
        for (int i = 0; i < group_size; ++i) {
            futures.push_back(std::async(std::launch::async, run_one, i));
        }
        for (auto& f : futures) f.get();
    }

    result.rewards = assemble_group_rewards(result.records);
    return result;
}

GroupRewards assemble_group_rewards(const std::vector<RolloutRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::GroupTooSmall, "no records");
    std::vector<std::map<int, SatisfactionTrace>> traces;
    for (const auto& record : records) {
        std::map<int, SatisfactionTrace> per_turn;
        for (const auto& [t, checklist] : record.checklists) {
            auto it = record.verdicts.find(t);
            if (it == record.verdicts.end()) continue; // turn never reached
            per_turn[t] = latch_trace(checklist, it->second);
        }
        traces.push_back(std::move(per_turn));
    }
    GroupRewards group = checklist_rl::assemble_group_rewards(
        records.front().checklists, traces, records.front().summary.denominator_turns,
        DenominatorMode::ReferenceTurns);
    // Records carry their own denominators (mode was fixed at rollout time).
    for (size_t i = 0; i < records.size(); ++i) {
        group.denominators[i] = records[i].summary.denominator_turns;
        double sum = 0.0;
        for (const auto& [t, outcome] : group.rollouts[i]) {
            (void)t;
            sum += outcome.reward;
        }
        group.trajectory[i] = sum / static_cast<double>(group.denominators[i]);
    }
    return group;
}

json record_to_json(const RolloutRecord& record) {
    json verdicts = json::array();
    for (const auto& [t, list] : record.verdicts) {
        (void)t;
        for (const auto& v : list) {
            verdicts.push_back({{"turn", v.turn_index}, {"step", v.step_index}, {"labels", v.labels}});
        }
    }
    json grids = json::array();
    for (const auto& [t, grid] : record.grids) {
        json flip = json::array();
        json backfill = json::array();
        for (const auto& row : grid.flip) {
            json r = json::array();
            for (char v : row) r.push_back(static_cast<int>(v));
            flip.push_back(std::move(r));
        }
        for (const auto& row : grid.backfill) {
            json r = json::array();
            for (char v : row) r.push_back(static_cast<int>(v));
            backfill.push_back(std::move(r));
        }
        grids.push_back({{"turn", t}, {"items", grid.item_ids}, {"flip", flip}, {"backfill", backfill}});
    }
    json checklists = json::array();
    for (const auto& [t, c] : record.checklists) {
        (void)t;
        checklists.push_back(checklist_to_json(c, record.group_id));
    }
    json per_turn = json::object();
    for (const auto& [t, r] : record.summary.per_turn) per_turn[std::to_string(t)] = r;
    json tags = json::array();
    for (const auto& tag : record.source_tags) {
        tags.push_back({{"turn", tag.turn}, {"step", tag.raw_step}, {"source", response_source_name(tag.source)}});
    }
    return {{"group_id", record.group_id},
            {"rollout_index", record.rollout_index},
            {"seed", record.seed},
            {"dialogue", dialogue_to_json(record.realized)},
            {"checklists", std::move(checklists)},
            {"verdicts", std::move(verdicts)},
            {"grids", std::move(grids)},
            {"summary",
             {{"per_turn", std::move(per_turn)},
              {"trajectory", record.summary.trajectory},
              {"denominator_turns", record.summary.denominator_turns}}},
            {"termination",
             {{"kind", termination_kind_name(record.termination.kind)},
              {"turn", record.termination.turn},
              {"detail", record.termination.detail}}},
            {"source_tags", std::move(tags)},
            {"judge_failures", record.judge_failures}};
}

RolloutRecord record_from_json(const json& doc) {
    RolloutRecord record;
    record.group_id = doc.value("group_id", "");
    record.rollout_index = doc.value("rollout_index", 0);
    record.seed = doc.value("seed", 0ULL);
    record.realized = dialogue_from_json(doc.at("dialogue"), ParseMode::Lenient);
    for (const auto& c : doc.value("checklists", json::array())) {
        Checklist checklist = checklist_from_json(c);
        record.checklists[checklist.turn_index] = std::move(checklist);
    }
    for (const auto& v : doc.value("verdicts", json::array())) {
        JudgeVerdict verdict;
        verdict.turn_index = v.at("turn").get<int>();
        verdict.step_index = v.at("step").get<int>();
        for (auto it = v.at("labels").begin(); it != v.at("labels").end(); ++it) {
            verdict.labels[it.key()] = it.value().get<bool>();
        }
        record.verdicts[verdict.turn_index].push_back(std::move(verdict));
    }
    for (const auto& g : doc.value("grids", json::array())) {
        RewardGrid grid;
        grid.turn_index = g.at("turn").get<int>();
        for (const auto& id : g.at("items")) grid.item_ids.push_back(id.get<std::string>());
        for (const auto& row : g.at("flip")) {
            std::vector<char> r;
            for (const auto& v : row) r.push_back(static_cast<char>(v.get<int>()));
            grid.flip.push_back(std::move(r));
        }
        for (const auto& row : g.at("backfill")) {
            std::vector<char> r;
            for (const auto& v : row) r.push_back(static_cast<char>(v.get<int>()));
            grid.backfill.push_back(std::move(r));
        }
        record.grids[grid.turn_index] = std::move(grid);
    }
    const json& summary = doc.at("summary");
    for (auto it = summary.at("per_turn").begin(); it != summary.at("per_turn").end(); ++it) {
        record.summary.per_turn[std::stoi(it.key())] = it.value().get<double>();
    }
    record.summary.trajectory = summary.at("trajectory").get<double>();
    record.summary.denominator_turns = summary.at("denominator_turns").get<int>();
    const json& termination = doc.at("termination");
    record.termination.kind = termination_kind_from_name(termination.at("kind").get<std::string>());
    record.termination.turn = termination.value("turn", 0);
    record.termination.detail = termination.value("detail", "");
    for (const auto& tag : doc.value("source_tags", json::array())) {
        SourceTag t;
        t.turn = tag.at("turn").get<int>();
        t.raw_step = tag.at("step").get<int>();
        t.source = tag.at("source").get<std::string>() == "Replayed" ? ResponseSource::Replayed
                                                                     : ResponseSource::Simulated;
        record.source_tags.push_back(t);
    }
    record.judge_failures = doc.value("judge_failures", 0);
    return record;
}

std::vector<RolloutRecord> parse_record_stream(std::istream& in) {
    std::vector<RolloutRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedDocument, e.what());
        }
        records.push_back(record_from_json(doc));
    }
    return records;
}

} // namespace checklist_rl
