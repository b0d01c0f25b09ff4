#include "checklist_rl/toyrl.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "checklist_rl/stable_hash.hpp"

namespace checklist_rl {

namespace {

std::string argument_value(const TaskSpec& spec, int turn, int invocation) {
    const uint64_t h = hash_combine(hash_combine(hash_combine(spec.seed, "arg"), static_cast<uint64_t>(turn)),
                                    static_cast<uint64_t>(invocation));
    return "a" + std::to_string(h % static_cast<uint64_t>(spec.argument_choices));
}

std::string invocation_tool(int turn, int invocation) {
    return "tool_t" + std::to_string(turn) + "_" + std::to_string(invocation);
}

std::string call_item_id(int turn, int invocation) {
    return "t" + std::to_string(turn) + "_call" + std::to_string(invocation);
}

std::string reply_item_id(int turn) { return "t" + std::to_string(turn) + "_reply"; }

std::string reply_token(int turn) { return "done-t" + std::to_string(turn); }

double next_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

ToyTask generate_task(const TaskSpec& spec) {
    if (spec.turns < 1 || spec.invocations_per_turn < 1 || spec.argument_choices < 1 ||
        spec.argument_choices > 8) {
        throw Error(ErrorCode::InvalidConfig, "task spec out of range");
    }
    ToyTask task;
    Dialogue& d = task.annotated.dialogue;
    d.id = "toy-" + std::to_string(spec.seed) + "-" + std::to_string(spec.turns) + "x" +
           std::to_string(spec.invocations_per_turn);

    for (int t = 1; t <= spec.turns; ++t) {
        for (int k = 1; k <= spec.invocations_per_turn; ++k) {
            ToolSchema schema;
            schema.name = invocation_tool(t, k);
            schema.description = "Required worker " + std::to_string(k) + " for objective " + std::to_string(t);
            schema.parameters["v"] = {"string", true, "selector value"};
            d.tools.push_back(std::move(schema));
        }
    }
    for (int j = 1; j <= spec.distractor_tools; ++j) {
        ToolSchema schema;
        schema.name = "noise_" + std::to_string(j);
        schema.description = "Unrelated tool " + std::to_string(j);
        schema.parameters["v"] = {"string", true, "selector value"};
        d.tools.push_back(std::move(schema));
    }

    for (int t = 1; t <= spec.turns; ++t) {
        Turn turn;
        turn.index = t;
        turn.steps.push_back(make_user_query("Objective " + std::to_string(t) +
                                             ": run the required tools in order, then confirm."));
        Checklist checklist;
        checklist.turn_index = t;
        const double weight = 1.0 / static_cast<double>(spec.invocations_per_turn + 1);

        for (int k = 1; k <= spec.invocations_per_turn; ++k) {
            const std::string tool = invocation_tool(t, k);
            const std::string value = argument_value(spec, t, k);
            ToolCall call{tool, json{{"v", value}}};
            turn.steps.push_back(make_tool_call_action({call}));
            turn.steps.push_back(make_tool_response("ok:" + tool + ":" + value, 0));

            ChecklistItem item;
            item.id = call_item_id(t, k);
            item.evidence.push_back({t, 2 * k}); // the action step in the canonical trace
            item.focus = ItemFocus::ToolCall;
            item.question = "Was " + tool + " called with v=" + value + "?";
            item.pass_criteria = tool + " invoked with v=" + value;
            item.fail_criteria = "missing or wrong arguments";
            if (k > 1) item.dependencies.push_back(call_item_id(t, k - 1));
            item.weight = weight;
            checklist.items.push_back(std::move(item));

            task.predicates[call_item_id(t, k)] =
                parse_predicate("tool_called(name=\"" + tool + "\", args.v=\"" + value + "\")");
        }

        turn.steps.push_back(make_reply("All steps finished: " + reply_token(t) + "."));
        ChecklistItem reply_item;
        reply_item.id = reply_item_id(t);
        reply_item.evidence.push_back({t, static_cast<int>(turn.steps.size())});
        reply_item.focus = ItemFocus::FinalReply;
        reply_item.question = "Does the final reply confirm with " + reply_token(t) + "?";
        reply_item.pass_criteria = "reply contains " + reply_token(t);
        reply_item.fail_criteria = "no confirmation token";
        reply_item.required_for_next_turn = true;
        reply_item.dependencies.push_back(call_item_id(t, spec.invocations_per_turn));
        reply_item.weight = weight;
        checklist.items.push_back(std::move(reply_item));
        task.predicates[reply_item_id(t)] = parse_predicate("reply_contains(\"" + reply_token(t) + "\")");

        d.turns.push_back(std::move(turn));
        task.annotated.checklists[t] = normalize_weights(checklist);
    }

    // Action templates: required invocations turn-major, then one reply per
    // turn, then distractor calls.
    for (int t = 1; t <= spec.turns; ++t) {
        for (int k = 1; k <= spec.invocations_per_turn; ++k) {
            ToolCall call{invocation_tool(t, k), json{{"v", argument_value(spec, t, k)}}};
            task.action_templates.push_back(make_tool_call_action({call}));
        }
    }
    for (int t = 1; t <= spec.turns; ++t) {
        task.action_templates.push_back(make_reply("All steps finished: " + reply_token(t) + "."));
    }
    for (int j = 1; j <= spec.distractor_tools; ++j) {
        ToolCall call{"noise_" + std::to_string(j), json{{"v", "x"}}};
        task.action_templates.push_back(make_tool_call_action({call}));
    }

    task.scripted_judge.kind = JudgeSpec::Kind::Scripted;
    task.scripted_judge.predicates = task.predicates;
    task.store = build_replay_store(d);
    task.budget.max_turns = spec.turns;
    task.budget.max_steps_per_turn = 2 * (spec.invocations_per_turn + 1);
    task.budget.max_total_steps = spec.turns * task.budget.max_steps_per_turn;
    return task;
}

std::string ToyTask::state_key(const HistoryPrefix& prefix) const {
    const int t = prefix.upto_turn;
    auto it = annotated.checklists.find(t);
    if (it == annotated.checklists.end()) {
        throw Error(ErrorCode::OutOfRange, "prefix turn has no checklist: " + std::to_string(t));
    }
    unsigned mask = 0;
    for (size_t c = 0; c < it->second.items.size(); ++c) {
        if (evaluate_predicate(predicates, it->second.items[c].id, prefix)) mask |= (1u << c);
    }
    return "t" + std::to_string(t) + "|m" + std::to_string(mask);
}

int ToyTask::match_action(const Step& step) const {
    for (size_t a = 0; a < action_templates.size(); ++a) {
        const Step& tmpl = action_templates[a];
        if (tmpl.tool_calls.empty() != step.tool_calls.empty()) continue;
        if (tmpl.tool_calls.empty()) {
            if (tmpl.content == step.content) return static_cast<int>(a);
        } else if (tmpl.tool_calls.size() == step.tool_calls.size()) {
            bool same = true;
            for (size_t k = 0; k < tmpl.tool_calls.size(); ++k) {
                if (tmpl.tool_calls[k].tool_name != step.tool_calls[k].tool_name ||
                    tmpl.tool_calls[k].arguments != step.tool_calls[k].arguments) {
                    same = false;
                    break;
                }
            }
            if (same) return static_cast<int>(a);
        }
    }
    return -1;
}

std::vector<double> SoftmaxPolicy::row(const std::string& key) const {
    auto it = logits.find(key);
    if (it != logits.end()) return it->second;
    return std::vector<double>(static_cast<size_t>(action_count), 0.0); // unvisited states are uniform
}

std::vector<double> SoftmaxPolicy::probabilities(const std::string& key) const {
    const std::vector<double> l = row(key);
    double max_logit = l.empty() ? 0.0 : l[0];
    for (double v : l) max_logit = std::max(max_logit, v);
    std::vector<double> p(l.size());
    double z = 0.0;
    for (size_t i = 0; i < l.size(); ++i) {
        p[i] = std::exp((l[i] - max_logit) / temperature);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

namespace {

class ToySamplingPolicy : public Policy {
public:
    ToySamplingPolicy(const ToyTask& task, const SoftmaxPolicy& params, uint64_t seed)
        : task_(task), params_(params), rng_(seed) {}

    void reset(uint64_t seed) override { rng_.seed(seed); }

    Step act(const HistoryPrefix& prefix) override {
        const std::string key = task_.state_key(prefix);
        const std::vector<double> p = params_.probabilities(key);
        const double u = next_unit(rng_);
        double cum = 0.0;
        size_t chosen = p.size() - 1;
        for (size_t i = 0; i < p.size(); ++i) {
            cum += p[i];
            if (u < cum) {
                chosen = i;
                break;
            }
        }
        return task_.action_templates[chosen];
    }

private:
    const ToyTask& task_;
    const SoftmaxPolicy& params_;
    std::mt19937_64 rng_;
};

} // namespace

std::unique_ptr<Policy> make_toy_policy(const ToyTask& task, const SoftmaxPolicy& params, uint64_t seed) {
    return std::make_unique<ToySamplingPolicy>(task, params, seed);
}

std::vector<Decision> extract_decisions(const ToyTask& task, const Dialogue& realized) {
    std::vector<Decision> decisions;
    for (const auto& turn : realized.turns) {
        int ordinal = 0;
        for (size_t pos = 0; pos < turn.steps.size(); ++pos) {
            const Step& step = turn.steps[pos];
            if (step.kind != StepKind::AgentAction) continue;
            ++ordinal;
            // State as the policy saw it: the prefix up to just before this action.
            HistoryPrefix prefix = history_prefix(realized, turn.index, static_cast<int>(pos));
            const int action = task.match_action(step);
            if (action < 0) {
                throw Error(ErrorCode::ShapeMismatch, "realized action is not in the template set");
            }
            decisions.push_back({task.state_key(prefix), action, turn.index, ordinal});
        }
    }
    return decisions;
}

namespace {

// d log pi(a|k) / d logit_j and the entropy gradient for one state row.
void accumulate_gradient(const SoftmaxPolicy& policy, const std::string& key, int action, double advantage,
                         double entropy_bonus, std::map<std::string, std::vector<double>>& grad) {
    const std::vector<double> p = policy.probabilities(key);
    auto& g = grad[key];
    if (g.empty()) g.assign(p.size(), 0.0);
    const double inv_temp = 1.0 / policy.temperature;
    double entropy = 0.0;
    for (double v : p) {
        if (v > 0.0) entropy -= v * std::log(v);
    }
    for (size_t j = 0; j < p.size(); ++j) {
        const double indicator = static_cast<int>(j) == action ? 1.0 : 0.0;
        g[j] += advantage * (indicator - p[j]) * inv_temp;
        if (entropy_bonus != 0.0 && p[j] > 0.0) {
            g[j] += entropy_bonus * (-(p[j] * inv_temp) * (std::log(p[j]) + entropy));
        }
    }
}

} // namespace

SoftmaxPolicy policy_gradient_update(const SoftmaxPolicy& policy, const ToyTask& task,
                                     const std::vector<RolloutRecord>& records, const AdvantageTable& table,
                                     const TrainConfig& cfg) {
    if (table.granularity != cfg.granularity) {
        throw Error(ErrorCode::ShapeMismatch, "advantage table granularity disagrees with the config");
    }
    if (policy.action_count != static_cast<int>(task.action_templates.size())) {
        throw Error(ErrorCode::ShapeMismatch, "policy action count disagrees with the task");
    }
    std::map<std::string, std::vector<double>> grad;
    for (size_t i = 0; i < records.size(); ++i) {
        for (const Decision& d : extract_decisions(task, records[i].realized)) {
            const double advantage = table.at(static_cast<int>(i), d.turn, d.step);
            accumulate_gradient(policy, d.state_key, d.action_index, advantage, cfg.entropy_bonus, grad);
        }
    }
    SoftmaxPolicy updated = policy;
    for (const auto& [key, g] : grad) {
        bool any = false;
        for (double v : g) any = any || v != 0.0;
        if (!any) continue; // zero gradient: leave the row unmaterialized
        auto it = updated.logits.find(key);
        if (it == updated.logits.end()) {
            it = updated.logits.emplace(key, std::vector<double>(static_cast<size_t>(policy.action_count), 0.0))
                     .first;
        }
        for (size_t j = 0; j < g.size(); ++j) it->second[j] += cfg.learning_rate * g[j];
    }
    return updated;
}

double update_objective(const SoftmaxPolicy& policy, const std::vector<Decision>& decisions,
                        const std::vector<double>& advantages, double entropy_bonus) {
    if (decisions.size() != advantages.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one advantage per decision required");
    }
    double objective = 0.0;
    for (size_t d = 0; d < decisions.size(); ++d) {
        const std::vector<double> p = policy.probabilities(decisions[d].state_key);
        objective += advantages[d] * std::log(p[static_cast<size_t>(decisions[d].action_index)]);
        if (entropy_bonus != 0.0) {
            double entropy = 0.0;
            for (double v : p) {
                if (v > 0.0) entropy -= v * std::log(v);
            }
            objective += entropy_bonus * entropy;
        }
    }
    return objective;
}

namespace {

double evaluate_policy(const ToyTask& task, const SoftmaxPolicy& params, int rollouts, uint64_t seed_base) {
    double total = 0.0;
    const SimulatorSpec sim = make_echo_simulator();
    for (int j = 0; j < rollouts; ++j) {
        const uint64_t seed = hash_combine(seed_base, static_cast<uint64_t>(j));
        auto policy = make_toy_policy(task, params, seed);
        RolloutOptions options;
        options.rollout_index = j;
        const RolloutRecord record = run_rollout(task.annotated, *policy, task.scripted_judge, task.store,
                                                 sim, task.budget, seed, options);
        total += record.summary.trajectory;
    }
    return total / static_cast<double>(rollouts);
}

} // namespace

std::vector<CurvePoint> train_single_seed(const TrainConfig& cfg, const ToyTask& task, uint64_t seed) {
    if (cfg.group_size < 2 || cfg.learning_rate <= 0.0) {
        throw Error(ErrorCode::InvalidConfig, "group size must be >= 2 and learning rate positive");
    }
    SoftmaxPolicy params;
    params.action_count = static_cast<int>(task.action_templates.size());
    params.temperature = cfg.temperature;

    const SimulatorSpec sim = make_echo_simulator();
    std::vector<CurvePoint> curve;
    for (int update = 1; update <= cfg.updates; ++update) {
        const uint64_t update_seed = hash_combine(hash_combine(seed, "update"), static_cast<uint64_t>(update));
        JudgeSpec train_judge = task.scripted_judge;
        if (cfg.judge_noise > 0.0) {
            train_judge = make_noisy(task.scripted_judge, cfg.judge_noise, hash_combine(update_seed, "noise"));
        }
        PolicyFactory factory = [&](uint64_t s) { return make_toy_policy(task, params, s); };
        const GroupResult group = run_group(task.annotated, factory, train_judge, task.store, sim,
                                            task.budget, cfg.group_size, hash_combine(update_seed, "group"));
        const AdvantageTable table = compute_advantages(group.rewards, cfg.granularity, cfg.normalizer);
        params = policy_gradient_update(params, task, group.records, table, cfg);

        if (update % cfg.eval_every == 0) {
            // Held-out stream, clean judging: curves measure true task reward.
            const double mean = evaluate_policy(task, params, cfg.eval_rollouts,
                                                hash_combine(hash_combine(seed, "eval"),
                                                             static_cast<uint64_t>(update)));
            curve.push_back({update, mean});
        }
    }
    return curve;
}

std::vector<CurveRow> train(const TrainConfig& cfg, const ToyTask& task) {
    std::vector<CurveRow> rows;
    for (uint64_t seed : cfg.seeds) {
        for (const CurvePoint& point : train_single_seed(cfg, task, seed)) {
            rows.push_back({point.update, seed, cfg.granularity, cfg.group_size, cfg.judge_noise,
                            point.mean_validation_reward});
        }
    }
    return rows;
}

std::string curve_rows_tsv(const std::vector<CurveRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "update\tseed\tgranularity\tgroup_size\tepsilon\tmean_reward\n";
    for (const auto& row : rows) {
        out << row.update << '\t' << row.seed << '\t' << granularity_name(row.granularity) << '\t'
            << row.group_size << '\t' << row.judge_noise << '\t' << row.mean_reward << '\n';
    }
    return out.str();
}

std::vector<CurveRow> parse_curve_tsv(std::istream& in) {
    std::vector<CurveRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream fields(line);
        CurveRow row;
        std::string granularity;
        if (!(fields >> row.update >> row.seed >> granularity >> row.group_size >> row.judge_noise >>
              row.mean_reward)) {
            throw Error(ErrorCode::MalformedDocument, "bad curve row: " + line);
        }
        row.granularity = granularity_from_name(granularity);
        rows.push_back(row);
    }
    return rows;
}

} // namespace checklist_rl
