#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"

using namespace checklist_rl;

namespace {

HistoryPrefix f3_prefix(int step) { return history_prefix(testfix::f3_dialogue(), 1, step); }

JudgeSpec f3_judge() { return scripted_predicates(testfix::f3_predicate_sources()); }

JudgeSpec spec_of(std::map<std::string, std::string> sources) { return scripted_predicates(sources); }

} // namespace

TEST_CASE("scripted predicates match tool calls with argument paths") {
    const JudgeSpec spec = f3_judge();
    const Checklist checklist = testfix::f3_checklist();

    const JudgeVerdict after_first = judge(spec, f3_prefix(3), checklist);
    CHECK(after_first.labels.at("c1"));
    CHECK_FALSE(after_first.labels.at("c2"));
    CHECK_FALSE(after_first.labels.at("c3"));
    CHECK(after_first.step_index == 1);

    const JudgeVerdict after_reply = judge(spec, f3_prefix(6), checklist);
    CHECK(after_reply.labels.at("c1"));
    CHECK(after_reply.labels.at("c2"));
    CHECK(after_reply.labels.at("c3"));
    CHECK(after_reply.step_index == 3);
}

TEST_CASE("reply_contains is false before any final reply") {
    const JudgeSpec spec = spec_of({{"c1", "reply_contains(\"refund\")"}});
    Checklist checklist;
    checklist.turn_index = 1;
    ChecklistItem item;
    item.id = "c1";
    item.question = "?";
    item.weight = 1.0;
    checklist.items = {item};
    CHECK_FALSE(judge(spec, f3_prefix(3), checklist).labels.at("c1"));
}

TEST_CASE("argument constraints distinguish numeric spellings as equal values") {
    const JudgeSpec spec = spec_of({{"n", "tool_called(name=\"compute\", args.n=2.0)"}});
    Checklist checklist;
    checklist.turn_index = 1;
    ChecklistItem item;
    item.id = "n";
    item.question = "?";
    item.weight = 1.0;
    checklist.items = {item};
    CHECK(judge(spec, f3_prefix(5), checklist).labels.at("n")); // call used integer 2
}

TEST_CASE("combinators and reference validation") {
    const auto sources = std::map<std::string, std::string>{
        {"a", "tool_called(name=\"lookup\", args.city=\"Paris\")"},
        {"b", "reply_contains(\"done-paris\")"},
        {"both", "all_of(a, b)"},
        {"either", "any_of(a, b)"},
        {"nay", "not(b)"}};
    const JudgeSpec spec = scripted_predicates(sources);
    Checklist checklist;
    checklist.turn_index = 1;
    for (const auto& id : {"a", "b", "both", "either", "nay"}) {
        ChecklistItem item;
        item.id = id;
        item.question = "?";
        item.weight = 0.2;
        checklist.items.push_back(item);
    }
    const JudgeVerdict mid = judge(spec, f3_prefix(3), checklist);
    CHECK(mid.labels.at("a"));
    CHECK_FALSE(mid.labels.at("b"));
    CHECK_FALSE(mid.labels.at("both"));
    CHECK(mid.labels.at("either"));
    CHECK(mid.labels.at("nay"));
}

TEST_CASE("predicate errors") {
    CHECK_THROWS_AS(parse_predicate("frobnicate(name=\"x\")"), Error);
    try {
        parse_predicate("frobnicate(name=\"x\")");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownPredicateKind);
    }
    CHECK_THROWS_AS(parse_predicate("tool_called(name=\"x\""), Error);
    CHECK_THROWS_AS(parse_predicate("reply_contains()"), Error);

    // Unbound reference inside a combinator.
    CHECK_THROWS_AS(spec_of({{"a", "all_of(missing)"}}), Error);
    try {
        spec_of({{"a", "all_of(missing)"}});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnboundItemId);
    }
    // Reference cycles are rejected at construction.
    CHECK_THROWS_AS(spec_of({{"a", "not(b)"}, {"b", "not(a)"}}), Error);
}

TEST_CASE("response_field inspects parsed tool responses") {
    const JudgeSpec spec = spec_of({{"r", "response_field(status, \"ok\")"}});
    Checklist checklist;
    checklist.turn_index = 1;
    ChecklistItem item;
    item.id = "r";
    item.question = "?";
    item.weight = 1.0;
    checklist.items = {item};
    CHECK(judge(spec, f3_prefix(3), checklist).labels.at("r"));
    CHECK_FALSE(judge(spec, f3_prefix(2), checklist).labels.at("r"));
}

TEST_CASE("predicates see only the current turn") {
    Dialogue d = testfix::f3_dialogue();
    Turn turn2;
    turn2.index = 2;
    turn2.steps.push_back(make_user_query("again"));
    turn2.steps.push_back(make_reply("nothing here"));
    d.turns.push_back(turn2);

    Checklist checklist = testfix::f3_checklist();
    checklist.turn_index = 2;
    const JudgeVerdict v = judge(f3_judge(), history_prefix(d, 2, 2), checklist);
    CHECK_FALSE(v.labels.at("c1")); // turn 1's lookup does not leak into turn 2
}

TEST_CASE("noisy judge with zero flip probability matches the inner judge") {
    const JudgeSpec noisy = make_noisy(f3_judge(), 0.0, 99);
    const JudgeVerdict inner = judge(f3_judge(), f3_prefix(6), testfix::f3_checklist());
    const JudgeVerdict wrapped = judge(noisy, f3_prefix(6), testfix::f3_checklist());
    CHECK(inner.labels == wrapped.labels);
}

TEST_CASE("noisy judge with certain flips inverts every label") {
    const JudgeSpec noisy = make_noisy(f3_judge(), 1.0, 99);
    const JudgeVerdict wrapped = judge(noisy, f3_prefix(6), testfix::f3_checklist());
    CHECK_FALSE(wrapped.labels.at("c1"));
    CHECK_FALSE(wrapped.labels.at("c2"));
    CHECK_FALSE(wrapped.labels.at("c3"));
}

TEST_CASE("noisy judging is reproducible and order independent") {
    const JudgeSpec noisy = make_noisy(f3_judge(), 0.5, 1234);
    const JudgeVerdict a = judge(noisy, f3_prefix(6), testfix::f3_checklist());
    const JudgeVerdict b = judge(noisy, f3_prefix(6), testfix::f3_checklist());
    CHECK(a.labels == b.labels);
}

TEST_CASE("majority voting suppresses noise") {
    JudgeSpec noisy = make_noisy(f3_judge(), 0.35, 4242);
    const Checklist checklist = testfix::f3_checklist();
    const HistoryPrefix clean = f3_prefix(6);
    const JudgeVerdict reference = judge(f3_judge(), clean, checklist);

    auto flip_rate = [&](int votes) {
        int flips = 0;
        int total = 0;
        for (int trial = 0; trial < 3000; ++trial) {
            JudgeSpec spec = make_noisy(f3_judge(), 0.35, 50000 + static_cast<uint64_t>(trial));
            spec.majority_votes = votes;
            const JudgeVerdict v = judge(spec, clean, checklist);
            for (const auto& [id, label] : v.labels) {
                ++total;
                if (label != reference.labels.at(id)) ++flips;
            }
        }
        return static_cast<double>(flips) / total;
    };
    const double single = flip_rate(1);
    const double voted = flip_rate(5);
    CHECK(single == doctest::Approx(0.35).epsilon(0.1));
    // Majority of five at p=0.35: P(>=3 flips) ~ 0.235.
    CHECK(voted == doctest::Approx(0.2352).epsilon(0.15));
    CHECK(voted < single);

    // Voting with a single vote is the plain judge, and voting is reproducible.
    noisy.majority_votes = 1;
    const JudgeVerdict a = judge(noisy, clean, checklist);
    noisy.majority_votes = 5;
    const JudgeVerdict b = judge(noisy, clean, checklist);
    const JudgeVerdict c = judge(noisy, clean, checklist);
    CHECK(b.labels == c.labels);
    (void)a;
}

TEST_CASE("flip rate concentrates near epsilon") {
    const double epsilon = 0.15;
    const Checklist checklist = testfix::f3_checklist();
    const HistoryPrefix clean = f3_prefix(6);
    const JudgeVerdict reference = judge(f3_judge(), clean, checklist);
    int flips = 0;
    int total = 0;
    for (int trial = 0; trial < 5000; ++trial) {
        const JudgeSpec noisy = make_noisy(f3_judge(), epsilon, 90000 + static_cast<uint64_t>(trial));
        const JudgeVerdict v = judge(noisy, clean, checklist);
        for (const auto& [id, label] : v.labels) {
            ++total;
            if (label != reference.labels.at(id)) ++flips;
        }
    }
    REQUIRE(total >= 10000);
    const double rate = static_cast<double>(flips) / total;
    CHECK(rate == doctest::Approx(epsilon).epsilon(0.0667)); // +-0.01 absolute
    CHECK(std::fabs(rate - epsilon) < 0.01);
}

TEST_CASE("verdict labels cover exactly the checklist items") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto instance = testfix::random_instance(rng, 2, 1, 3, 6);
        const Checklist& checklist = instance.checklists.at(1);
        const JudgeVerdict v = judge(f3_judge(), f3_prefix(6), checklist);
        REQUIRE(v.labels.size() == checklist.items.size());
        for (const auto& item : checklist.items) REQUIRE(v.labels.count(item.id) == 1);
    }
}

TEST_CASE("external judge speaks the wire contract") {
    httplib::Server server;
    std::atomic<int> failures_to_serve{0};
    server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
        if (failures_to_serve.fetch_sub(1) > 0) {
            res.status = 500;
            return;
        }
        const json request = json::parse(req.body);
        REQUIRE(request.contains("dialogue_id"));
        REQUIRE(request.contains("prefix"));
        REQUIRE(request.at("items").is_array());
        json labels = json::object();
        for (const auto& item : request.at("items")) {
            // Deterministic stand-in: pass iff the question mentions "lookup".
            labels[item.at("id").get<std::string>()] =
                item.at("question").get<std::string>().find("lookup") != std::string::npos;
        }
        res.set_content(json{{"labels", labels}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const JudgeSpec spec = make_external("127.0.0.1:" + std::to_string(port), 5.0, 2);

    SUBCASE("labels arrive for every item") {
        const JudgeVerdict v = judge(spec, f3_prefix(6), testfix::f3_checklist());
        CHECK(v.labels.at("c1"));
        CHECK_FALSE(v.labels.at("c2"));
        CHECK_FALSE(v.labels.at("c3"));
    }
    SUBCASE("transient failures are retried") {
        failures_to_serve = 2;
        const JudgeVerdict v = judge(spec, f3_prefix(6), testfix::f3_checklist());
        CHECK(v.labels.at("c1"));
    }
    SUBCASE("exhausted retries surface EndpointUnavailable") {
        failures_to_serve = 10;
        CHECK_THROWS_AS(judge(spec, f3_prefix(6), testfix::f3_checklist()), Error);
    }

    server.stop();
    serving.join();
}

TEST_CASE("external judge rejects incomplete label maps") {
    httplib::Server server;
    server.Post("/judge", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"labels", {{"c1", true}}}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const JudgeSpec spec = make_external("127.0.0.1:" + std::to_string(port), 5.0, 1);
    try {
        judge(spec, f3_prefix(6), testfix::f3_checklist());
        FAIL("expected malformed-reply failure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EndpointMalformedReply);
    }
    server.stop();
    serving.join();
}
