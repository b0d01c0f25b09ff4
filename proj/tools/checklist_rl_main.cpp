#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "checklist_rl/brute_force.hpp"
#include "checklist_rl/datapipe.hpp"
#include "checklist_rl/rollout.hpp"
#include "checklist_rl/stable_hash.hpp"
#include "checklist_rl/toyrl.hpp"

namespace fs = std::filesystem;
using namespace checklist_rl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidationFailure = 1;
constexpr int kExitOperationalFailure = 2;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << content;
}

std::string checksum_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

// Every command writes exactly one manifest describing its resolved
// configuration and the checksums of what it produced. Artifact names are
// directory-relative so reruns compare byte-for-byte.
struct Manifest {
    std::string command;
    std::string config_path;
    json config = json::object();
    std::vector<uint64_t> seeds;
    std::string out_dir;
    std::map<std::string, std::string> artifacts;

    void add_artifact(const fs::path& dir, const std::string& name, const std::string& content) {
        write_file(dir / name, content);
        artifacts[name] = checksum_hex(content);
    }

    void finalize(const fs::path& dir) const {
        json doc = {{"command", command}, {"config_path", config_path}, {"config", config},
                    {"seeds", seeds},     {"output_dir", out_dir},      {"artifacts", artifacts}};
        write_file(dir / "manifest.json", doc.dump(2) + "\n");
    }
};

std::vector<Dialogue> load_dialogues(const fs::path& path, ParseMode mode) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    return parse_dialogue_stream(in, mode);
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
    std::string trajectories;
    std::string checklists;
    std::string out;
    bool lenient = false;
};

int cmd_validate(const ValidateArgs& args) {
    json issues = json::array();
    std::vector<Dialogue> dialogues;
    const auto lines = read_lines(args.trajectories);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            dialogues.push_back(
                parse_dialogue(lines[i], args.lenient ? ParseMode::Lenient : ParseMode::Strict));
        } catch (const Error& e) {
            issues.push_back({{"line", i + 1}, {"kind", error_code_name(e.code())}, {"message", e.what()}});
        }
    }
    if (!args.checklists.empty()) {
        try {
            std::ifstream annotation_stream(args.checklists);
            if (!annotation_stream) throw Error(ErrorCode::IoFailure, "cannot read " + args.checklists);
            const AnnotationLoadResult loaded = load_annotations(dialogues, annotation_stream);
            for (const auto& flag : loaded.flagged) {
                issues.push_back({{"kind", flag.rule}, {"item", flag.item_id}, {"message", flag.message}});
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::IoFailure) throw;
            issues.push_back({{"kind", error_code_name(e.code())}, {"message", e.what()}});
        }
    }

    Manifest manifest;
    manifest.command = "validate";
    manifest.config = {{"trajectories", args.trajectories},
                       {"checklists", args.checklists},
                       {"lenient", args.lenient}};
    manifest.out_dir = args.out;
    if (!args.out.empty()) {
        std::string report;
        for (const auto& issue : issues) report += issue.dump() + "\n";
        manifest.add_artifact(args.out, "validation_report.jsonl", report);
        manifest.finalize(args.out);
    }
    for (const auto& issue : issues) std::cerr << issue.dump() << "\n";
    std::cout << "validate: " << dialogues.size() << " dialogues, " << issues.size() << " issues\n";
    return issues.empty() ? kExitOk : kExitValidationFailure;
}

// ------------------------------------------------------------------ filter

struct FilterArgs {
    std::string input;
    std::string out;
    std::string rules;
    std::string reasoning = "required";
    std::string unknown_args = "reject";
    std::string split;
    uint64_t split_seed = 0;
};

int cmd_filter(const FilterArgs& args) {
    FilterConfig config;
    if (!args.rules.empty()) {
        config.enabled_rules.clear();
        std::istringstream in(args.rules);
        std::string token;
        while (std::getline(in, token, ',')) config.enabled_rules.insert(std::stoi(token));
    }
    config.reasoning_required = args.reasoning == "required";
    config.reject_unknown_args = args.unknown_args == "reject";

    const auto lines = read_lines(args.input);
    std::string pass_stream;
    std::string reject_stream;
    std::vector<std::pair<std::string, bool>> ids_with_complexity;
    int rejected = 0;
    for (const auto& line : lines) {
        if (line.empty()) continue;
        const FilterReport report = filter_dialogue(line, config);
        if (report.pass) {
            pass_stream += line + "\n";
            bool complex_flag = false;
            try {
                complex_flag = is_complex_dialogue(parse_dialogue(line, ParseMode::Lenient));
            } catch (const Error&) {
            }
            ids_with_complexity.emplace_back(report.dialogue_id, complex_flag);
        } else {
            ++rejected;
            reject_stream += filter_report_to_json(report).dump() + "\n";
        }
    }
    const CorpusStats stats = corpus_stats(lines, config);

    Manifest manifest;
    manifest.command = "filter";
    manifest.config = {{"input", args.input},
                       {"rules", args.rules.empty() ? "all" : args.rules},
                       {"reasoning", args.reasoning},
                       {"unknown_args", args.unknown_args},
                       {"split", args.split},
                       {"split_seed", args.split_seed}};
    manifest.seeds = {args.split_seed};
    manifest.out_dir = args.out;
    manifest.add_artifact(args.out, "pass.jsonl", pass_stream);
    manifest.add_artifact(args.out, "rejects.jsonl", reject_stream);
    manifest.add_artifact(args.out, "stats.json", corpus_stats_to_json(stats).dump(2) + "\n");

    if (!args.split.empty()) {
        SplitSizes sizes;
        std::istringstream in(args.split);
        std::string token;
        std::vector<int> parts;
        while (std::getline(in, token, ',')) parts.push_back(std::stoi(token));
        if (parts.size() != 3) throw Error(ErrorCode::InvalidConfig, "--split expects n1,n2,n3");
        sizes.cold_start = parts[0];
        sizes.rl = parts[1];
        sizes.validation = parts[2];
        const SplitResult split = sample_split(ids_with_complexity, sizes, args.split_seed);
        const json doc = {{"cold_start", split.cold_start},
                          {"rl", split.rl},
                          {"validation", split.validation}};
        manifest.add_artifact(args.out, "splits.json", doc.dump(2) + "\n");
    }
    manifest.finalize(args.out);
    std::cout << "filter: " << stats.passed << " passed, " << rejected << " rejected\n";
    return kExitOk;
}

// ----------------------------------------------------------------- rollout

struct RolloutArgs {
    std::string trajectories;
    std::string checklists;
    std::string predicates;
    std::string out;
    std::string judge = "scripted";
    double judge_noise = 0.0;
    uint64_t judge_seed = 0;
    std::string judge_endpoint;
    std::string sim = "echo";
    std::string templates;
    std::string sim_endpoint;
    std::string policy = "replay";
    std::string granularity = "all";
    std::string normalizer = "constant1";
    std::string denominator = "reference";
    int group_size = 2;
    uint64_t seed = 0;
    int max_turns = 30;
    int max_steps_per_turn = 16;
    int max_total_steps = 256;
};

int cmd_rollout(const RolloutArgs& args) {
    const auto dialogues = load_dialogues(args.trajectories, ParseMode::Strict);
    std::ifstream annotation_stream(args.checklists);
    if (!annotation_stream) throw Error(ErrorCode::IoFailure, "cannot read " + args.checklists);
    const AnnotationLoadResult loaded = load_annotations(dialogues, annotation_stream);

    JudgeSpec judge_spec;
    if (args.judge == "external") {
        judge_spec = make_external(args.judge_endpoint);
    } else {
        judge_spec = args.predicates.empty() ? scripted_predicates(json::object())
                                             : scripted_predicates(json::parse(read_file(args.predicates)));
        if (args.judge == "noisy" || args.judge_noise > 0.0) {
            judge_spec = make_noisy(judge_spec, args.judge_noise, args.judge_seed);
        }
    }
    SimulatorSpec sim;
    if (args.sim == "echo") {
        sim = make_echo_simulator();
    } else if (args.sim == "template") {
        sim = load_template_simulator(json::parse(read_file(args.templates)));
    } else if (args.sim == "external") {
        sim = make_external_simulator(args.sim_endpoint);
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown simulator: " + args.sim);
    }
    if (args.policy != "replay") throw Error(ErrorCode::InvalidConfig, "unknown policy: " + args.policy);

    RolloutBudget budget{args.max_turns, args.max_steps_per_turn, args.max_total_steps};
    RolloutOptions options;
    options.denominator_mode = args.denominator == "realized" ? DenominatorMode::RealizedTurns
                                                              : DenominatorMode::ReferenceTurns;

    std::string records_stream;
    std::string advantages;
    for (const auto& annotated : loaded.annotated) {
        const ReplayStore store = build_replay_store(annotated.dialogue);
        PolicyFactory factory = [&](uint64_t) -> std::unique_ptr<Policy> {
            return std::make_unique<ReplayPolicy>(annotated.dialogue);
        };
        const GroupResult group = run_group(annotated, factory, judge_spec, store, sim, budget,
                                            args.group_size, args.seed, options);
        for (const auto& record : group.records) {
            records_stream += record_to_json(record).dump() + "\n";
        }
        NormalizerSpec normalizer = normalizer_from_name(args.normalizer);
        std::vector<Granularity> granularities;
        if (args.granularity == "all") {
            granularities = {Granularity::Trajectory, Granularity::Turn, Granularity::Step};
        } else {
            granularities = {granularity_from_name(args.granularity)};
        }
        for (Granularity g : granularities) {
            const AdvantageTable table = compute_advantages(group.rewards, g, normalizer);
            std::string tsv = advantage_table_tsv(table, annotated.dialogue.id);
            if (!advantages.empty()) {
                tsv = tsv.substr(tsv.find('\n') + 1); // keep a single header
            }
            advantages += tsv;
        }
    }

    Manifest manifest;
    manifest.command = "rollout";
    manifest.config = {{"trajectories", args.trajectories},
                       {"checklists", args.checklists},
                       {"predicates", args.predicates},
                       {"judge", args.judge},
                       {"judge_noise", args.judge_noise},
                       {"judge_seed", args.judge_seed},
                       {"sim", args.sim},
                       {"policy", args.policy},
                       {"granularity", args.granularity},
                       {"normalizer", args.normalizer},
                       {"denominator", args.denominator},
                       {"group_size", args.group_size},
                       {"budget",
                        {{"max_turns", args.max_turns},
                         {"max_steps_per_turn", args.max_steps_per_turn},
                         {"max_total_steps", args.max_total_steps}}}};
    manifest.seeds = {args.seed, args.judge_seed};
    manifest.out_dir = args.out;
    manifest.add_artifact(args.out, "records.jsonl", records_stream);
    manifest.add_artifact(args.out, "advantages.tsv", advantages);
    manifest.finalize(args.out);
    std::cout << "rollout: " << loaded.annotated.size() << " group(s) of " << args.group_size << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string out;
    std::vector<uint64_t> seeds;
    std::vector<int> group_sizes;
    std::vector<std::string> granularities;
    double judge_noise = -1.0;
    std::string normalizer;
    int updates = -1;
};

int cmd_train(const TrainArgs& args) {
    json config = json::object();
    if (!args.config.empty()) config = json::parse(read_file(args.config));
    const json task_doc = config.value("task", json::object());
    TaskSpec task_spec;
    task_spec.turns = task_doc.value("turns", 2);
    task_spec.invocations_per_turn = task_doc.value("invocations_per_turn", 2);
    task_spec.distractor_tools = task_doc.value("distractor_tools", 2);
    task_spec.argument_choices = task_doc.value("argument_choices", 4);
    task_spec.seed = task_doc.value("seed", 7ULL);

    const json train_doc = config.value("train", json::object());
    TrainConfig base;
    base.updates = args.updates > 0 ? args.updates : train_doc.value("updates", 300);
    base.learning_rate = train_doc.value("learning_rate", 0.1);
    base.entropy_bonus = train_doc.value("entropy_bonus", 0.01);
    base.temperature = train_doc.value("temperature", 1.0);
    base.eval_every = train_doc.value("eval_every", 10);
    base.eval_rollouts = train_doc.value("eval_rollouts", 16);
    base.judge_noise = args.judge_noise >= 0.0 ? args.judge_noise : train_doc.value("judge_noise", 0.0);
    base.normalizer = normalizer_from_name(
        !args.normalizer.empty() ? args.normalizer : train_doc.value("normalizer", std::string("constant1")));
    if (!args.seeds.empty()) {
        base.seeds = args.seeds;
    } else if (train_doc.contains("seeds")) {
        base.seeds.clear();
        for (const auto& s : train_doc["seeds"]) base.seeds.push_back(s.get<uint64_t>());
    }
    std::vector<std::string> granularities = args.granularities;
    if (granularities.empty()) {
        for (const auto& g : train_doc.value("granularities", json::array({"Trajectory"}))) {
            granularities.push_back(g.get<std::string>());
        }
    }
    std::vector<int> group_sizes = args.group_sizes;
    if (group_sizes.empty()) {
        for (const auto& g : train_doc.value("group_sizes", json::array({8}))) {
            group_sizes.push_back(g.get<int>());
        }
    }

    const ToyTask task = generate_task(task_spec);

    Manifest manifest;
    manifest.command = "train";
    manifest.config_path = args.config;
    manifest.config = {{"task",
                        {{"turns", task_spec.turns},
                         {"invocations_per_turn", task_spec.invocations_per_turn},
                         {"distractor_tools", task_spec.distractor_tools},
                         {"argument_choices", task_spec.argument_choices},
                         {"seed", task_spec.seed}}},
                       {"train",
                        {{"updates", base.updates},
                         {"learning_rate", base.learning_rate},
                         {"entropy_bonus", base.entropy_bonus},
                         {"temperature", base.temperature},
                         {"eval_every", base.eval_every},
                         {"eval_rollouts", base.eval_rollouts},
                         {"judge_noise", base.judge_noise},
                         {"normalizer",
                          base.normalizer.kind == NormalizerSpec::Kind::Constant1 ? "constant1" : "stddev"},
                         {"granularities", granularities},
                         {"group_sizes", group_sizes},
                         {"seeds", base.seeds}}}};
    manifest.seeds = base.seeds;
    manifest.out_dir = args.out;

    for (const auto& granularity : granularities) {
        for (int group_size : group_sizes) {
            TrainConfig cfg = base;
            cfg.granularity = granularity_from_name(granularity);
            cfg.group_size = group_size;
            const std::vector<CurveRow> rows = train(cfg, task);
            std::string name = std::string("curves_") + granularity_name(cfg.granularity) + "_g" +
                               std::to_string(group_size) + ".tsv";
            for (auto& c : name) c = static_cast<char>(std::tolower(c));
            manifest.add_artifact(args.out, name, curve_rows_tsv(rows));
        }
    }
    manifest.finalize(args.out);
    std::cout << "train: " << granularities.size() * group_sizes.size() << " curve file(s)\n";
    return kExitOk;
}

// ------------------------------------------------------------------ report

struct SettingKey {
    std::string granularity;
    int group_size = 0;
    double epsilon = 0.0;
    bool operator<(const SettingKey& other) const {
        return std::tie(granularity, group_size, epsilon) <
               std::tie(other.granularity, other.group_size, other.epsilon);
    }
};

struct SeriesStats {
    double mean = 0.0;
    double se = 0.0; // sample standard error; NaN-free, absent flagged separately
    int n = 0;
};

SeriesStats stats_at(const std::vector<CurveRow>& rows, int update) {
    std::vector<double> values;
    for (const auto& row : rows) {
        if (row.update == update) values.push_back(row.mean_reward);
    }
    SeriesStats out;
    out.n = static_cast<int>(values.size());
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() >= 2) {
        double sq = 0.0;
        for (double v : values) sq += (v - out.mean) * (v - out.mean);
        out.se = std::sqrt(sq / static_cast<double>(values.size() - 1)) /
                 std::sqrt(static_cast<double>(values.size()));
    }
    return out;
}

struct ReportArgs {
    std::vector<std::string> curves;
    std::string out;
    std::string acceptance;
    int checkpoint_update = 0; // 0: 10% of the final update
};

int cmd_report(const ReportArgs& args) {
    std::map<SettingKey, std::vector<CurveRow>> settings;
    for (const auto& file : args.curves) {
        std::ifstream in(file);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + file);
        for (const auto& row : parse_curve_tsv(in)) {
            settings[{granularity_name(row.granularity), row.group_size, row.judge_noise}].push_back(row);
        }
    }
    if (settings.empty()) throw Error(ErrorCode::MalformedDocument, "no curve rows found");

    int final_update = 0;
    for (const auto& [key, rows] : settings) {
        (void)key;
        for (const auto& row : rows) final_update = std::max(final_update, row.update);
    }
    int checkpoint = args.checkpoint_update;
    json acceptance_config = json::object();
    if (!args.acceptance.empty()) acceptance_config = json::parse(read_file(args.acceptance));
    if (acceptance_config.contains("checkpoint_update")) {
        checkpoint = acceptance_config["checkpoint_update"].get<int>();
    }
    if (checkpoint == 0) checkpoint = std::max(1, final_update / 10);

    std::ostringstream summary;
    summary.precision(10);
    summary << "granularity\tgroup_size\tepsilon\tphase\tupdate\tmean\tse\tseeds\n";
    std::ostringstream plot;
    plot.precision(10);
    plot << "granularity\tgroup_size\tepsilon\tupdate\tmean\tse\tseeds\n";
    for (const auto& [key, rows] : settings) {
        std::set<int> updates;
        for (const auto& row : rows) updates.insert(row.update);
        for (int update : updates) {
            const SeriesStats s = stats_at(rows, update);
            plot << key.granularity << '\t' << key.group_size << '\t' << key.epsilon << '\t' << update << '\t'
                 << s.mean << '\t' << (s.n >= 2 ? std::to_string(s.se) : "absent") << '\t' << s.n << '\n';
        }
        for (const auto& [phase, update] :
             std::vector<std::pair<std::string, int>>{{"early", checkpoint}, {"final", final_update}}) {
            const SeriesStats s = stats_at(rows, update);
            summary << key.granularity << '\t' << key.group_size << '\t' << key.epsilon << '\t' << phase
                    << '\t' << update << '\t' << s.mean << '\t'
                    << (s.n >= 2 ? std::to_string(s.se) : "absent") << '\t' << s.n << '\n';
        }
    }

    Manifest manifest;
    manifest.command = "report";
    manifest.config_path = args.acceptance;
    manifest.config = {{"curves", args.curves},
                       {"checkpoint_update", checkpoint},
                       {"final_update", final_update}};
    manifest.out_dir = args.out;
    manifest.add_artifact(args.out, "summary.tsv", summary.str());
    manifest.add_artifact(args.out, "curve_means.tsv", plot.str());

    bool all_pass = true;
    if (acceptance_config.contains("comparisons")) {
        json results = json::array();
        auto select = [&](const json& filter) {
            std::vector<CurveRow> matched;
            for (const auto& [key, rows] : settings) {
                if (filter.contains("granularity") &&
                    filter["granularity"].get<std::string>() != key.granularity) {
                    continue;
                }
                if (filter.contains("group_size") && filter["group_size"].get<int>() != key.group_size) {
                    continue;
                }
                if (filter.contains("epsilon") &&
                    std::fabs(filter["epsilon"].get<double>() - key.epsilon) > 1e-12) {
                    continue;
                }
                matched.insert(matched.end(), rows.begin(), rows.end());
            }
            return matched;
        };
        for (const auto& comparison : acceptance_config["comparisons"]) {
            const int update =
                comparison.value("metric", std::string("final")) == "early" ? checkpoint : final_update;
            const SeriesStats a = stats_at(select(comparison.at("a")), update);
            const SeriesStats b = stats_at(select(comparison.at("b")), update);
            const double margin = a.mean - b.mean;
            const double pooled = std::sqrt(a.se * a.se + b.se * b.se);
            const bool strict = comparison.value("strict", true);
            const bool pass = a.n > 0 && b.n > 0 && (strict ? margin > pooled : margin >= pooled);
            all_pass = all_pass && pass;
            results.push_back({{"name", comparison.value("name", "unnamed")},
                               {"update", update},
                               {"mean_a", a.mean},
                               {"mean_b", b.mean},
                               {"margin", margin},
                               {"pooled_se", pooled},
                               {"strict", strict},
                               {"pass", pass}});
        }
        const json doc = {{"checkpoint_update", checkpoint},
                          {"final_update", final_update},
                          {"criteria", results},
                          {"all_pass", all_pass}};
        manifest.add_artifact(args.out, "acceptance_report.json", doc.dump(2) + "\n");
        std::cout << doc.dump(2) << "\n";
    }
    manifest.finalize(args.out);
    return all_pass ? kExitOk : kExitValidationFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Checklist-reward shaping and group-relative advantage toolkit"};
    app.require_subcommand(1);

    ValidateArgs validate_args;
    auto* validate = app.add_subcommand("validate", "Validate trajectories and checklists");
    validate->add_option("--trajectories", validate_args.trajectories)->required();
    validate->add_option("--checklists", validate_args.checklists);
    validate->add_option("--out", validate_args.out);
    validate->add_flag("--lenient", validate_args.lenient);

    FilterArgs filter_args;
    auto* filter = app.add_subcommand("filter", "Rule-based corpus filtering, stats, splits");
    filter->add_option("--input", filter_args.input)->required();
    filter->add_option("--out", filter_args.out)->required();
    filter->add_option("--rules", filter_args.rules, "comma-separated subset, e.g. 5,6");
    filter->add_option("--reasoning", filter_args.reasoning)->check(CLI::IsMember({"required", "forbidden"}));
    filter->add_option("--unknown-args", filter_args.unknown_args)->check(CLI::IsMember({"reject", "ignore"}));
    filter->add_option("--split", filter_args.split, "cold_start,rl,validation sizes");
    filter->add_option("--split-seed", filter_args.split_seed);

    RolloutArgs rollout_args;
    auto* rollout = app.add_subcommand("rollout", "Run rollout groups against annotated dialogues");
    rollout->add_option("--trajectories", rollout_args.trajectories)->required();
    rollout->add_option("--checklists", rollout_args.checklists)->required();
    rollout->add_option("--predicates", rollout_args.predicates);
    rollout->add_option("--out", rollout_args.out)->required();
    rollout->add_option("--judge", rollout_args.judge)->check(CLI::IsMember({"scripted", "noisy", "external"}));
    rollout->add_option("--judge-noise", rollout_args.judge_noise);
    rollout->add_option("--judge-seed", rollout_args.judge_seed);
    rollout->add_option("--judge-endpoint", rollout_args.judge_endpoint);
    rollout->add_option("--sim", rollout_args.sim);
    rollout->add_option("--templates", rollout_args.templates);
    rollout->add_option("--sim-endpoint", rollout_args.sim_endpoint);
    rollout->add_option("--policy", rollout_args.policy);
    rollout->add_option("--granularity", rollout_args.granularity);
    rollout->add_option("--normalizer", rollout_args.normalizer);
    rollout->add_option("--denominator", rollout_args.denominator)
        ->check(CLI::IsMember({"reference", "realized"}));
    rollout->add_option("--group-size", rollout_args.group_size);
    rollout->add_option("--seed", rollout_args.seed);
    rollout->add_option("--max-turns", rollout_args.max_turns);
    rollout->add_option("--max-steps-per-turn", rollout_args.max_steps_per_turn);
    rollout->add_option("--max-total-steps", rollout_args.max_total_steps);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Toy policy-gradient training sweeps");
    train_cmd->add_option("--config", train_args.config);
    train_cmd->add_option("--out", train_args.out)->required();
    train_cmd->add_option("--seed", train_args.seeds);
    train_cmd->add_option("--group-size", train_args.group_sizes);
    train_cmd->add_option("--granularity", train_args.granularities);
    train_cmd->add_option("--judge-noise", train_args.judge_noise);
    train_cmd->add_option("--normalizer", train_args.normalizer);
    train_cmd->add_option("--updates", train_args.updates);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Summaries and acceptance checks over curve files");
    report->add_option("--curves", report_args.curves)->required();
    report->add_option("--out", report_args.out)->required();
    report->add_option("--acceptance", report_args.acceptance);
    report->add_option("--checkpoint-update", report_args.checkpoint_update);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitOperationalFailure;
    }

    try {
        if (validate->parsed()) return cmd_validate(validate_args);
        if (filter->parsed()) return cmd_filter(filter_args);
        if (rollout->parsed()) return cmd_rollout(rollout_args);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (report->parsed()) return cmd_report(report_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOperationalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOperationalFailure;
    }
    return kExitOperationalFailure;
}
