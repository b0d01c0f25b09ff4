#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"

using namespace checklist_rl;

namespace {

json random_document(std::mt19937_64& rng, int depth) {
    switch (rng() % (depth > 0 ? 7 : 5)) {
    case 0: return json(static_cast<int64_t>(rng() % 1000) - 500);
    case 1: return json(static_cast<double>(rng() % 10000) / 8.0 - 600.0);
    case 2: return json("s" + std::to_string(rng() % 50));
    case 3: return json(rng() % 2 == 0);
    case 4: return json(nullptr);
    case 5: {
        json arr = json::array();
        const int n = static_cast<int>(rng() % 4);
        for (int i = 0; i < n; ++i) arr.push_back(random_document(rng, depth - 1));
        return arr;
    }
    default: {
        json obj = json::object();
        const int n = static_cast<int>(rng() % 4);
        for (int i = 0; i < n; ++i) {
            obj["k" + std::to_string(rng() % 8)] = random_document(rng, depth - 1);
        }
        return obj;
    }
    }
}

// Re-serialize with shuffled key insertion order; nlohmann re-sorts, so parse
// from a hand-built unordered text instead.
std::string reorder_keys_text(const json& doc) {
    if (!doc.is_object() || doc.empty()) return doc.dump();
    std::vector<std::string> keys;
    for (auto it = doc.begin(); it != doc.end(); ++it) keys.push_back(it.key());
    std::rotate(keys.begin(), keys.begin() + 1, keys.end());
    std::string out = "{";
    for (size_t i = 0; i < keys.size(); ++i) {
        if (i > 0) out += ",";
        out += json(keys[i]).dump() + ":" + doc.at(keys[i]).dump();
    }
    out += "}";
    return out;
}

} // namespace

TEST_CASE("canonicalize is key-order invariant") {
    const json a = json::parse(R"({"b":1,"a":2})");
    const json b = json::parse(R"({"a":2,"b":1})");
    CHECK(canonicalize(a) == canonicalize(b));
}

TEST_CASE("canonicalize merges numeric spellings") {
    CHECK(canonicalize(json::parse(R"({"x":1.0})")) == canonicalize(json::parse(R"({"x":1})")));
    CHECK(canonicalize(json(1.5)) == "1.5");
    CHECK(canonicalize(json(-0.0)) == "0");
    CHECK(canonicalize(json(1e300)) != canonicalize(json(1)));
}

TEST_CASE("canonicalize keeps list order significant") {
    CHECK(canonicalize(json::parse(R"({"x":[1,2]})")) != canonicalize(json::parse(R"({"x":[2,1]})")));
}

TEST_CASE("non-finite numbers are rejected") {
    CHECK_THROWS_AS(canonicalize(json(std::numeric_limits<double>::infinity())), Error);
    CHECK_THROWS_AS(canonicalize(json(std::nan(""))), Error);
}

TEST_CASE("canonicalize is idempotent and a congruence on fuzzed documents") {
    std::mt19937_64 rng(23);
    int checked = 0;
    while (checked < 10000) {
        const json doc = random_document(rng, 3);
        const std::string fp = canonicalize(doc);
        // Round-tripping the canonical text yields the same fingerprint.
        REQUIRE(canonicalize(json::parse(fp)) == fp);
        // Textual reorder of keys parses to the same fingerprint.
        if (doc.is_object() && !doc.empty()) {
            REQUIRE(canonicalize(json::parse(reorder_keys_text(doc))) == fp);
        }
        ++checked;
    }
}

TEST_CASE("build_replay_store counts distinct calls") {
    Dialogue d = testfix::f3_dialogue();
    // Add a third distinct call to the dialogue's single turn.
    Turn& turn = d.turns[0];
    turn.steps.insert(turn.steps.end() - 1, make_tool_call_action({{"compute", json{{"n", 3}}}}));
    turn.steps.insert(turn.steps.end() - 1, make_tool_response("nine", 0));
    const ReplayStore store = build_replay_store(d);
    CHECK(store.entries.size() == 3);
    CHECK(store.collision_warnings.empty());
}

TEST_CASE("identical repeated calls deduplicate without warnings") {
    Dialogue d = testfix::f3_dialogue();
    Turn& turn = d.turns[0];
    turn.steps.insert(turn.steps.end() - 1, make_tool_call_action({{"lookup", json{{"city", "Paris"}}}}));
    turn.steps.insert(turn.steps.end() - 1, make_tool_response(R"({"status":"ok","temp":21})", 0));
    const ReplayStore store = build_replay_store(d);
    CHECK(store.entries.size() == 2);
    CHECK(store.collision_warnings.empty());
}

TEST_CASE("diverging responses keep the first and warn") {
    Dialogue d = testfix::f3_dialogue();
    Turn& turn = d.turns[0];
    turn.steps.insert(turn.steps.end() - 1, make_tool_call_action({{"lookup", json{{"city", "Paris"}}}}));
    turn.steps.insert(turn.steps.end() - 1, make_tool_response("something else", 0));
    const ReplayStore store = build_replay_store(d);
    CHECK(store.entries.size() == 2);
    REQUIRE(store.collision_warnings.size() == 1);
    CHECK(store.lookup("lookup", json{{"city", "Paris"}})->response == R"({"status":"ok","temp":21})");
}

TEST_CASE("execute replays recorded calls byte-identically") {
    const Dialogue d = testfix::f3_dialogue();
    const ReplayStore store = build_replay_store(d);
    const HistoryPrefix prefix = history_prefix(d, 1, 2);

    const ToolExecution hit = execute(store, make_echo_simulator(), {"lookup", json{{"city", "Paris"}}},
                                      prefix, d.tools);
    CHECK(hit.source == ResponseSource::Replayed);
    CHECK(hit.response == R"({"status":"ok","temp":21})");
}

TEST_CASE("key-reordered and numerically respelled arguments still replay") {
    const Dialogue d = testfix::f3_dialogue();
    const ReplayStore store = build_replay_store(d);
    const HistoryPrefix prefix = history_prefix(d, 1, 2);

    const json respelled = json::parse(R"({"n":2.0})");
    const ToolExecution hit = execute(store, make_echo_simulator(), {"compute", respelled}, prefix, d.tools);
    CHECK(hit.source == ResponseSource::Replayed);
    CHECK(hit.response == R"({"result":4})");
}

TEST_CASE("novel arguments fall back to the simulator") {
    const Dialogue d = testfix::f3_dialogue();
    const ReplayStore store = build_replay_store(d);
    const HistoryPrefix prefix = history_prefix(d, 1, 2);

    SUBCASE("echo embeds the call") {
        const ToolExecution miss = execute(store, make_echo_simulator(), {"lookup", json{{"city", "Oslo"}}},
                                           prefix, d.tools);
        CHECK(miss.source == ResponseSource::Simulated);
        CHECK(miss.response.find("Oslo") != std::string::npos);
        CHECK(miss.response.find("lookup") != std::string::npos);
    }
    SUBCASE("template substitutes argument values") {
        const SimulatorSpec sim = make_template_simulator({{"lookup", "{city} is sunny"}});
        const ToolExecution miss = execute(store, sim, {"lookup", json{{"city", "Oslo"}}}, prefix, d.tools);
        CHECK(miss.source == ResponseSource::Simulated);
        CHECK(miss.response == "Oslo is sunny");
    }
    SUBCASE("template falls back to default then echo") {
        const SimulatorSpec with_default = make_template_simulator({}, std::string("{tool} ran"));
        CHECK(execute(store, with_default, {"compute", json{{"n", 9}}}, prefix, d.tools).response ==
              "compute ran");
        const SimulatorSpec bare = make_template_simulator({});
        CHECK(execute(store, bare, {"compute", json{{"n", 9}}}, prefix, d.tools).source ==
              ResponseSource::Simulated);
    }
    SUBCASE("unknown tools are rejected") {
        CHECK_THROWS_AS(execute(store, make_echo_simulator(), {"ghost", json::object()}, prefix, d.tools),
                        Error);
    }
}

TEST_CASE("replay fidelity holds for every recorded pair") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        Dialogue d;
        d.id = "rf-" + std::to_string(trial);
        ToolSchema schema;
        schema.name = "probe";
        schema.parameters["q"] = {"string", true, ""};
        schema.parameters["k"] = {"integer", false, ""};
        d.tools.push_back(schema);
        Turn turn;
        turn.index = 1;
        turn.steps.push_back(make_user_query("go"));
        const int calls = 1 + static_cast<int>(rng() % 5);
        for (int k = 0; k < calls; ++k) {
            json args = {{"q", "v" + std::to_string(rng() % 4)}, {"k", static_cast<int>(rng() % 3)}};
            turn.steps.push_back(make_tool_call_action({{"probe", args}}));
            turn.steps.push_back(make_tool_response("resp-" + std::to_string(rng() % 1000), 0));
        }
        turn.steps.push_back(make_reply("done"));
        d.turns.push_back(std::move(turn));

        const ReplayStore store = build_replay_store(d);
        const HistoryPrefix prefix = history_prefix(d, 1, 1);
        const Turn& t = d.turns[0];
        for (size_t i = 0; i < t.steps.size(); ++i) {
            if (t.steps[i].kind != StepKind::AgentAction || t.steps[i].tool_calls.empty()) continue;
            const Step& response = t.steps[i + 1];
            const ToolExecution replayed =
                execute(store, make_echo_simulator(), t.steps[i].tool_calls[0], prefix, d.tools);
            REQUIRE(replayed.source == ResponseSource::Replayed);
            if (store.collision_warnings.empty()) {
                REQUIRE(replayed.response == response.content);
            }
        }
    }
}

TEST_CASE("external simulator wire contract with in-dialogue exemplars") {
    httplib::Server server;
    server.Post("/simulate", [&](const httplib::Request& req, httplib::Response& res) {
        const json request = json::parse(req.body);
        REQUIRE(request.at("tool").at("name").is_string());
        REQUIRE(request.contains("exemplars"));
        REQUIRE(request.contains("prefix_digest"));
        CHECK(request.at("exemplars").size() <= 4);
        res.set_content(json{{"response_text", "simulated:" + request.at("name").get<std::string>()}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const Dialogue d = testfix::f3_dialogue();
    const ReplayStore store = build_replay_store(d);
    const SimulatorSpec sim = make_external_simulator("127.0.0.1:" + std::to_string(port));
    const ToolExecution out =
        execute(store, sim, {"lookup", json{{"city", "Oslo"}}}, history_prefix(d, 1, 2), d.tools);
    CHECK(out.source == ResponseSource::Simulated);
    CHECK(out.response == "simulated:lookup");

    server.stop();
    serving.join();

    // With the endpoint gone the simulator is unavailable.
    CHECK_THROWS_AS(execute(store, sim, {"lookup", json{{"city", "Oslo"}}}, history_prefix(d, 1, 2), d.tools),
                    Error);
}
