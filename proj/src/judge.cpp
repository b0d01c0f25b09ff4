#include "checklist_rl/judge.hpp"

#include <cctype>
#include <functional>
#include <set>

#include "checklist_rl/http_client.hpp"
#include "checklist_rl/stable_hash.hpp"

namespace checklist_rl {

namespace {

struct Token {
    enum class Kind { Ident, String, Number, Literal, LParen, RParen, Comma, Equals, End };
    Kind kind;
    std::string text;
    json value;
};

class Lexer {
public:
    explicit Lexer(const std::string& source) : src_(source) {}

    Token next() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ >= src_.size()) return {Token::Kind::End, "", {}};
        const char c = src_[pos_];
        if (c == '(') { ++pos_; return {Token::Kind::LParen, "(", {}}; }
        if (c == ')') { ++pos_; return {Token::Kind::RParen, ")", {}}; }
        if (c == ',') { ++pos_; return {Token::Kind::Comma, ",", {}}; }
        if (c == '=') { ++pos_; return {Token::Kind::Equals, "=", {}}; }
        if (c == '"') return lex_string();
        return lex_word();
    }

private:
    Token lex_string() {
        const size_t start = pos_;
        ++pos_;
        while (pos_ < src_.size()) {
            if (src_[pos_] == '\\') {
                pos_ += 2;
                continue;
            }
            if (src_[pos_] == '"') {
                ++pos_;
                const std::string quoted = src_.substr(start, pos_ - start);
                try {
                    return {Token::Kind::String, quoted, json::parse(quoted)};
                } catch (const json::parse_error&) {
                    throw Error(ErrorCode::MalformedDocument, "bad string literal in predicate: " + quoted);
                }
            }
            ++pos_;
        }
        throw Error(ErrorCode::MalformedDocument, "unterminated string in predicate");
    }

    Token lex_word() {
        const size_t start = pos_;
        while (pos_ < src_.size() && src_.find_first_of("(),= \t\n\r\"", pos_) != pos_) ++pos_;
        if (pos_ == start) {
            throw Error(ErrorCode::MalformedDocument,
                        std::string("unexpected character in predicate: ") + src_[pos_]);
        }
        const std::string word = src_.substr(start, pos_ - start);
        if (word == "true") return {Token::Kind::Literal, word, json(true)};
        if (word == "false") return {Token::Kind::Literal, word, json(false)};
        if (word == "null") return {Token::Kind::Literal, word, json(nullptr)};
        // Anything parseable as a JSON number is a number; the rest are idents.
        if (word.find_first_not_of("0123456789+-.eE") == std::string::npos &&
            (std::isdigit(static_cast<unsigned char>(word[0])) || word[0] == '-')) {
            try {
                return {Token::Kind::Number, word, json::parse(word)};
            } catch (const json::parse_error&) {
            }
        }
        return {Token::Kind::Ident, word, {}};
    }

    const std::string& src_;
    size_t pos_ = 0;
};

struct Arg {
    std::optional<std::string> name; // named form key
    std::optional<std::string> ident; // bare identifier (item ref or path)
    json value;                       // value when a literal was given
    bool has_value = false;
};

std::vector<Arg> parse_args(Lexer& lex) {
    std::vector<Arg> args;
    Token tok = lex.next();
    if (tok.kind == Token::Kind::RParen) return args;
    while (true) {
        Arg arg;
        if (tok.kind == Token::Kind::Ident) {
            Token after = lex.next();
            if (after.kind == Token::Kind::Equals) {
                arg.name = tok.text;
                Token val = lex.next();
                if (val.kind != Token::Kind::String && val.kind != Token::Kind::Number &&
                    val.kind != Token::Kind::Literal) {
                    throw Error(ErrorCode::MalformedDocument, "expected a value after = in predicate");
                }
                arg.value = val.value;
                arg.has_value = true;
                tok = lex.next();
            } else {
                arg.ident = tok.text;
                tok = after;
            }
        } else if (tok.kind == Token::Kind::String || tok.kind == Token::Kind::Number ||
                   tok.kind == Token::Kind::Literal) {
            arg.value = tok.value;
            arg.has_value = true;
            tok = lex.next();
        } else {
            throw Error(ErrorCode::MalformedDocument, "unexpected token in predicate arguments");
        }
        args.push_back(std::move(arg));
        if (tok.kind == Token::Kind::RParen) break;
        if (tok.kind != Token::Kind::Comma) {
            throw Error(ErrorCode::MalformedDocument, "expected , or ) in predicate arguments");
        }
        tok = lex.next();
    }
    return args;
}

} // namespace

Predicate parse_predicate(const std::string& expression) {
    Lexer lex(expression);
    Token head = lex.next();
    if (head.kind != Token::Kind::Ident) {
        throw Error(ErrorCode::MalformedDocument, "predicate must start with a name: " + expression);
    }
    Token paren = lex.next();
    if (paren.kind != Token::Kind::LParen) {
        throw Error(ErrorCode::MalformedDocument, "expected ( after " + head.text);
    }
    std::vector<Arg> args = parse_args(lex);
    if (lex.next().kind != Token::Kind::End) {
        throw Error(ErrorCode::MalformedDocument, "trailing input after predicate: " + expression);
    }

    Predicate p;
    if (head.text == "tool_called") {
        p.kind = Predicate::Kind::ToolCalled;
        for (const auto& arg : args) {
            if (!arg.name || !arg.has_value) {
                throw Error(ErrorCode::MalformedDocument, "tool_called takes name=... and args.path=...");
            }
            if (*arg.name == "name") {
                if (!arg.value.is_string()) {
                    throw Error(ErrorCode::MalformedDocument, "tool_called name must be a string");
                }
                p.tool_name = arg.value.get<std::string>();
            } else if (arg.name->rfind("args.", 0) == 0) {
                p.arg_constraints.emplace_back(arg.name->substr(5), arg.value);
            } else {
                throw Error(ErrorCode::MalformedDocument, "unknown tool_called argument: " + *arg.name);
            }
        }
        if (p.tool_name.empty()) {
            throw Error(ErrorCode::MalformedDocument, "tool_called requires name=...");
        }
        return p;
    }
    if (head.text == "reply_contains" || head.text == "reasoning_contains") {
        p.kind = head.text == "reply_contains" ? Predicate::Kind::ReplyContains
                                               : Predicate::Kind::ReasoningContains;
        if (args.size() != 1 || !args[0].has_value || !args[0].value.is_string()) {
            throw Error(ErrorCode::MalformedDocument, head.text + " takes one string argument");
        }
        p.text = args[0].value.get<std::string>();
        return p;
    }
    if (head.text == "response_field") {
        p.kind = Predicate::Kind::ResponseField;
        if (args.size() != 2) {
            throw Error(ErrorCode::MalformedDocument, "response_field takes (path, value)");
        }
        if (args[0].ident) {
            p.path = *args[0].ident;
        } else if (args[0].has_value && args[0].value.is_string()) {
            p.path = args[0].value.get<std::string>();
        } else {
            throw Error(ErrorCode::MalformedDocument, "response_field path must be a path or string");
        }
        if (!args[1].has_value) {
            throw Error(ErrorCode::MalformedDocument, "response_field value must be a literal");
        }
        p.value = args[1].value;
        return p;
    }
    if (head.text == "all_of" || head.text == "any_of" || head.text == "not") {
        p.kind = head.text == "all_of" ? Predicate::Kind::AllOf
                 : head.text == "any_of" ? Predicate::Kind::AnyOf
                                         : Predicate::Kind::Not;
        for (const auto& arg : args) {
            if (!arg.ident) {
                throw Error(ErrorCode::MalformedDocument, head.text + " takes item ids");
            }
            p.refs.push_back(*arg.ident);
        }
        if (p.refs.empty() || (p.kind == Predicate::Kind::Not && p.refs.size() != 1)) {
            throw Error(ErrorCode::MalformedDocument, head.text + " has the wrong number of item ids");
        }
        return p;
    }
    throw Error(ErrorCode::UnknownPredicateKind, head.text);
}

namespace {

const json* json_at_path(const json& root, const std::string& dotted_path) {
    const json* node = &root;
    size_t begin = 0;
    while (begin <= dotted_path.size()) {
        const size_t dot = dotted_path.find('.', begin);
        const std::string key = dotted_path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (!node->is_object() || !node->contains(key)) return nullptr;
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    return node;
}

class PredicateEvaluator {
public:
    PredicateEvaluator(const std::map<std::string, Predicate>& predicates, const HistoryPrefix& prefix)
        : predicates_(predicates), prefix_(prefix) {}

    bool eval(const std::string& item_id) {
        auto memo = memo_.find(item_id);
        if (memo != memo_.end()) return memo->second;
        auto it = predicates_.find(item_id);
        // Items without a bound predicate judge false rather than aborting a rollout.
        const bool result = it == predicates_.end() ? false : eval_node(it->second);
        memo_[item_id] = result;
        return result;
    }

private:
    bool eval_node(const Predicate& p) {
        switch (p.kind) {
        case Predicate::Kind::ToolCalled: return eval_tool_called(p);
        case Predicate::Kind::ReplyContains: return eval_contains(p, /*reasoning=*/false);
        case Predicate::Kind::ReasoningContains: return eval_contains(p, /*reasoning=*/true);
        case Predicate::Kind::ResponseField: return eval_response_field(p);
        case Predicate::Kind::AllOf:
            for (const auto& ref : p.refs) {
                if (!eval(ref)) return false;
            }
            return true;
        case Predicate::Kind::AnyOf:
            for (const auto& ref : p.refs) {
                if (eval(ref)) return true;
            }
            return false;
        case Predicate::Kind::Not: return !eval(p.refs[0]);
        }
        return false;
    }

    bool eval_tool_called(const Predicate& p) const {
        for (size_t i = prefix_.current_turn_begin(); i < prefix_.steps.size(); ++i) {
            const Step& step = prefix_.steps[i];
            if (step.kind != StepKind::AgentAction) continue;
            for (const auto& call : step.tool_calls) {
                if (call.tool_name != p.tool_name) continue;
                bool all_match = true;
                for (const auto& [path, expected] : p.arg_constraints) {
                    const json* actual = json_at_path(call.arguments, path);
                    if (actual == nullptr || *actual != expected) {
                        all_match = false;
                        break;
                    }
                }
                if (all_match) return true;
            }
        }
        return false;
    }

    bool eval_contains(const Predicate& p, bool reasoning) const {
        for (size_t i = prefix_.current_turn_begin(); i < prefix_.steps.size(); ++i) {
            const Step& step = prefix_.steps[i];
            if (step.kind != StepKind::AgentAction) continue;
            if (reasoning) {
                if (step.reasoning && step.reasoning->find(p.text) != std::string::npos) return true;
            } else {
                if (step.is_final_reply() && step.content.find(p.text) != std::string::npos) return true;
            }
        }
        return false;
    }

    bool eval_response_field(const Predicate& p) const {
        for (size_t i = prefix_.current_turn_begin(); i < prefix_.steps.size(); ++i) {
            const Step& step = prefix_.steps[i];
            if (step.kind != StepKind::ToolResponse) continue;
            json payload;
            try {
                payload = json::parse(step.content);
            } catch (const json::parse_error&) {
                continue;
            }
            const json* actual = json_at_path(payload, p.path);
            if (actual != nullptr && *actual == p.value) return true;
        }
        return false;
    }

    const std::map<std::string, Predicate>& predicates_;
    const HistoryPrefix& prefix_;
    std::map<std::string, bool> memo_;
};

void check_reference_graph(const std::map<std::string, Predicate>& predicates) {
    for (const auto& [id, p] : predicates) {
        for (const auto& ref : p.refs) {
            if (!predicates.count(ref)) {
                throw Error(ErrorCode::UnboundItemId, id + " references unknown item " + ref);
            }
        }
    }
    // DFS cycle check over combinator references.
    std::map<std::string, int> state; // 0 fresh, 1 in-stack, 2 done
    std::function<void(const std::string&)> visit = [&](const std::string& id) {
        state[id] = 1;
        for (const auto& ref : predicates.at(id).refs) {
            const int s = state[ref];
            if (s == 1) throw Error(ErrorCode::DependencyCycle, "predicate references cycle at " + ref);
            if (s == 0) visit(ref);
        }
        state[id] = 2;
    };
    for (const auto& [id, p] : predicates) {
        if (state[id] == 0) visit(id);
    }
}

int current_action_ordinal(const HistoryPrefix& prefix) {
    int ordinal = 0;
    for (size_t i = prefix.current_turn_begin(); i < prefix.steps.size(); ++i) {
        if (prefix.steps[i].kind == StepKind::AgentAction) ++ordinal;
    }
    return ordinal;
}

JudgeVerdict external_judge(const JudgeSpec& spec, const HistoryPrefix& prefix, const Checklist& checklist) {
    json items = json::array();
    for (const auto& item : checklist.items) {
        items.push_back({{"id", item.id},
                         {"question", item.question},
                         {"pass", item.pass_criteria},
                         {"fail", item.fail_criteria},
                         {"focus", item_focus_name(item.focus)}});
    }
    json steps = json::array();
    for (const auto& step : prefix.steps) steps.push_back(step_to_message(step));
    const json request = {{"dialogue_id", prefix.dialogue_id},
                          {"turn", prefix.upto_turn},
                          {"step", current_action_ordinal(prefix)},
                          {"prefix", std::move(steps)},
                          {"items", std::move(items)}};

    Error last(ErrorCode::EndpointUnavailable, "no attempt made");
    for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
        try {
            const json reply = http_post_json(spec.host, spec.port, "/judge", request, spec.timeout_seconds);
            if (!reply.is_object() || !reply.contains("labels") || !reply["labels"].is_object()) {
                throw Error(ErrorCode::EndpointMalformedReply, "reply is missing a labels object");
            }
            JudgeVerdict verdict;
            verdict.turn_index = prefix.upto_turn;
            verdict.step_index = current_action_ordinal(prefix);
            for (const auto& item : checklist.items) {
                if (!reply["labels"].contains(item.id) || !reply["labels"][item.id].is_boolean()) {
                    throw Error(ErrorCode::EndpointMalformedReply, "reply lacks a boolean label for " + item.id);
                }
                verdict.labels[item.id] = reply["labels"][item.id].get<bool>();
            }
            return verdict;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EndpointUnavailable && e.code() != ErrorCode::EndpointMalformedReply) {
                throw;
            }
            last = e;
        }
    }
    throw last;
}

} // namespace

JudgeSpec scripted_predicates(const json& document) {
    if (!document.is_object()) {
        throw Error(ErrorCode::MalformedDocument, "predicate document must be an object");
    }
    const json& map = document.contains("predicates") ? document["predicates"] : document;
    std::map<std::string, std::string> expressions;
    for (auto it = map.begin(); it != map.end(); ++it) {
        if (!it.value().is_string()) {
            throw Error(ErrorCode::MalformedDocument, "predicate for " + it.key() + " must be a string");
        }
        expressions[it.key()] = it.value().get<std::string>();
    }
    return scripted_predicates(expressions);
}

JudgeSpec scripted_predicates(const std::map<std::string, std::string>& expressions) {
    JudgeSpec spec;
    spec.kind = JudgeSpec::Kind::Scripted;
    for (const auto& [id, expr] : expressions) {
        spec.predicates[id] = parse_predicate(expr);
    }
    check_reference_graph(spec.predicates);
    return spec;
}

JudgeSpec make_noisy(JudgeSpec inner, double flip_probability, uint64_t seed) {
    if (flip_probability < 0.0 || flip_probability > 1.0) {
        throw Error(ErrorCode::InvalidConfig, "flip probability must be in [0,1]");
    }
    JudgeSpec spec;
    spec.kind = JudgeSpec::Kind::Noisy;
    spec.flip_probability = flip_probability;
    spec.seed = seed;
    spec.inner = std::make_shared<JudgeSpec>(std::move(inner));
    return spec;
}

JudgeSpec make_external(const std::string& address, double timeout_seconds, int max_retries) {
    auto [host, port] = parse_address(address);
    JudgeSpec spec;
    spec.kind = JudgeSpec::Kind::External;
    spec.host = host;
    spec.port = port;
    spec.timeout_seconds = timeout_seconds;
    spec.max_retries = max_retries;
    return spec;
}

bool evaluate_predicate(const std::map<std::string, Predicate>& predicates, const std::string& item_id,
                        const HistoryPrefix& prefix) {
    PredicateEvaluator evaluator(predicates, prefix);
    return evaluator.eval(item_id);
}

namespace {

JudgeVerdict judge_once(const JudgeSpec& spec, const HistoryPrefix& prefix, const Checklist& checklist,
                        int vote) {
    switch (spec.kind) {
    case JudgeSpec::Kind::Scripted: {
        JudgeVerdict verdict;
        verdict.turn_index = checklist.turn_index;
        verdict.step_index = current_action_ordinal(prefix);
        PredicateEvaluator evaluator(spec.predicates, prefix);
        for (const auto& item : checklist.items) {
            verdict.labels[item.id] = evaluator.eval(item.id);
        }
        return verdict;
    }
    case JudgeSpec::Kind::Noisy: {
        JudgeVerdict verdict = judge_once(*spec.inner, prefix, checklist, vote);
        for (auto& [item_id, label] : verdict.labels) {
            uint64_t h = spec.seed;
            h = hash_combine(h, prefix.dialogue_id);
            h = hash_combine(h, static_cast<uint64_t>(verdict.turn_index));
            h = hash_combine(h, static_cast<uint64_t>(verdict.step_index));
            h = hash_combine(h, item_id);
            h = hash_combine(h, static_cast<uint64_t>(vote));
            if (hash_to_unit(h) < spec.flip_probability) label = !label;
        }
        return verdict;
    }
    case JudgeSpec::Kind::External:
        return external_judge(spec, prefix, checklist);
    }
    throw Error(ErrorCode::InvalidConfig, "unhandled judge kind");
}

} // namespace

JudgeVerdict judge(const JudgeSpec& spec, const HistoryPrefix& prefix, const Checklist& checklist) {
    if (prefix.upto_turn != checklist.turn_index) {
        throw Error(ErrorCode::OutOfRange,
                    "prefix is at turn " + std::to_string(prefix.upto_turn) + " but checklist is for turn " +
                        std::to_string(checklist.turn_index));
    }
    JudgeVerdict verdict = judge_once(spec, prefix, checklist, 0);
    if (spec.majority_votes > 1) {
        std::map<std::string, int> true_counts;
        for (const auto& [item_id, label] : verdict.labels) true_counts[item_id] = label ? 1 : 0;
        for (int vote = 1; vote < spec.majority_votes; ++vote) {
            const JudgeVerdict next = judge_once(spec, prefix, checklist, vote);
            for (const auto& [item_id, label] : next.labels) true_counts[item_id] += label ? 1 : 0;
        }
        for (auto& [item_id, label] : verdict.labels) {
            const int trues = true_counts[item_id];
            const int falses = spec.majority_votes - trues;
            if (trues != falses) label = trues > falses;
        }
    }
    return verdict;
}

} // namespace checklist_rl
