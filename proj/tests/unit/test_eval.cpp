#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <thread>

using namespace codemem;
using namespace codemem::eval;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::IoError;
}

RunOptions replay_opts(const std::string& target = "traces") {
    RunOptions o;
    o.driver_spec = "replay:" + testing::asset(target).string();
    return o;
}

TaskRecord rec(const std::string& id, std::size_t run, bool passed, std::size_t calls = 1, double wall = 1.0, std::size_t tokens = 0) {
    TaskRecord r;
    r.task_id = id;
    r.label = "x";
    r.run_index = run;
    r.passed = passed;
    r.assistant_calls = calls;
    r.wall_time = wall;
    r.total_tokens = tokens;
    return r;
}

std::vector<TaskRecord> grid(std::size_t tasks, const std::vector<std::size_t>& passed_per_run) {
    std::vector<TaskRecord> out;
    for (std::size_t run = 0; run < passed_per_run.size(); ++run) {
        for (std::size_t t = 0; t < tasks; ++t) out.push_back(rec("t" + std::to_string(t), run, t < passed_per_run[run]));
    }
    return out;
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

} // namespace

TEST_CASE("the desk suite parses") {
    const auto tasks = load_suite(testing::asset("suites/desk.json"));
    REQUIRE(tasks.size() == 5);
    CHECK(tasks[0].task_id == "case_study");
    for (const auto& t : tasks) {
        CHECK(t.difficulty >= 1);
        CHECK(t.difficulty <= 5);
        CHECK(std::filesystem::exists(t.fixture));
    }
    CHECK(tasks[0].replies == std::vector<std::string>{"no log required", "ok"});
}

TEST_CASE("bad suites are rejected") {
    testing::TempDir dir;
    const auto f = dir.path() / "s.json";
    write(f, "{");
    CHECK(kind_of([&] { load_suite(f); }) == ErrorKind::SuiteParseError);
    write(f, R"({"nope":[]})");
    CHECK(kind_of([&] { load_suite(f); }) == ErrorKind::SuiteParseError);
    write(f, R"({"tasks":[{"task_id":"a","difficulty":7}]})");
    CHECK(kind_of([&] { load_suite(f); }) == ErrorKind::SuiteParseError);
    write(f, R"({"tasks":[{"task_id":"a","checker":{"type":"rule","rules":[{"id":"vibes"}]}}]})");
    CHECK(kind_of([&] { load_suite(f); }) == ErrorKind::SuiteParseError);
    write(f, R"({"tasks":[{"task_id":"a"},{"task_id":"a"}]})");
    CHECK(kind_of([&] { load_suite(f); }) == ErrorKind::SuiteParseError);
    write(f, R"({"tasks":[]})");
    CHECK(load_suite(f).empty());
    CHECK(run_suite({}, replay_opts()).empty());
}

TEST_CASE("missing fixture is reported") {
    TaskSpec t;
    t.task_id = "x";
    t.fixture = "/no/such/fixture.json";
    CHECK(kind_of([&] { run_task(t, replay_opts()); }) == ErrorKind::FixtureMissing);
}

TEST_CASE("one task suite with the golden trace passes") {
    const auto task = load_task(testing::asset("tasks/case_study.json"));
    const auto records = run_suite({task}, replay_opts());
    REQUIRE(records.size() == 1);
    CHECK(records[0].passed);
    CHECK(records[0].failures.empty());
    CHECK(records[0].assistant_calls == orchestrator::load_trace(testing::asset("traces/case_study.jsonl")).size());
    CHECK(records[0].status == "done");
}

TEST_CASE("a trace that ignores the negative filter fails the rule checker") {
    const auto task = load_task(testing::asset("tasks/case_study.json"));
    auto opts = replay_opts("traces/case_study_adversarial.jsonl");
    const auto r = run_task(task, opts);
    CHECK_FALSE(r.passed);
    CHECK(std::any_of(r.failures.begin(), r.failures.end(),
                      [](const std::string& f) { return f.rfind("no_upload_from_domain:", 0) == 0 && f.find("agentr.dev") != std::string::npos; }));
}

TEST_CASE("driver errors fail the record instead of throwing") {
    testing::TempDir dir;
    write(dir.path() / "case_study.jsonl", R"({"step":1,"context_hash":null,"action":{"kind":"tool_call","name":"search_functions","args":{"query":"x"}}})" "\n");
    const auto task = load_task(testing::asset("tasks/case_study.json"));
    RunOptions o;
    o.driver_spec = "replay:" + dir.path().string();
    const auto r = run_task(task, o);
    CHECK_FALSE(r.passed);
    REQUIRE(!r.failures.empty());
    CHECK(r.failures[0].rfind("TraceExhausted", 0) == 0);
    CHECK(r.status == "failed");
}

TEST_CASE("aggregate examples") {
    auto all = grid(25, {25});
    CHECK(aggregate("x", all).correctness_min == 100.0);
    const auto two = aggregate("x", grid(25, {24, 25}));
    CHECK(two.correctness_min == 96.0); // min(24/25, 25/25)
    CHECK(two.runs == 2);
    CHECK(two.tasks == 25);

    std::vector<TaskRecord> lat{rec("a", 0, true, 2, 4.0), rec("b", 0, true, 4, 1.0), rec("c", 0, true, 6, 3.0), rec("d", 0, false, 8, 2.0)};
    const auto row = aggregate("x", lat);
    CHECK(row.p50_latency == 2.0); // sorted 1,2,3,4: lower median
    CHECK(row.avg_calls == 5.0);
    CHECK(row.correctness_min == 75.0);
}

TEST_CASE("incomplete grids are refused") {
    auto g = grid(3, {3, 3});
    g.pop_back();
    CHECK(kind_of([&] { aggregate("x", g); }) == ErrorKind::IncompleteGrid);
    auto dup = grid(3, {3});
    dup.push_back(dup.front());
    CHECK(kind_of([&] { aggregate("x", dup); }) == ErrorKind::IncompleteGrid);
    CHECK(kind_of([&] { aggregate("x", {}); }) == ErrorKind::IncompleteGrid);
}

TEST_CASE("aggregation ignores record order") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> calls(0, 20), coin(0, 1);
    std::uniform_real_distribution<double> wall(0.1, 30);
    std::vector<TaskRecord> records;
    for (std::size_t run = 0; run < 3; ++run) {
        for (int t = 0; t < 9; ++t) {
            records.push_back(rec("t" + std::to_string(t), run, coin(rng) == 1, static_cast<std::size_t>(calls(rng)), wall(rng), 7));
        }
    }
    const auto base = to_json(aggregate("x", records));
    for (int i = 0; i < 200; ++i) {
        std::shuffle(records.begin(), records.end(), rng);
        REQUIRE(to_json(aggregate("x", records)) == base);
    }
}

TEST_CASE("reference record set aggregates to 96 percent and 7 calls") {
    const auto records = load_records(testing::asset("records/reference_25.json"));
    REQUIRE(records.size() == 25);
    std::size_t passed = 0, calls = 0;
    for (const auto& r : records) {
        passed += r.passed ? 1 : 0;
        calls += r.assistant_calls;
    }
    CHECK(passed == 24);
    CHECK(calls == 175);
    const auto rows = aggregate_by_label(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].correctness_min == 96.0);
    CHECK(rows[0].avg_calls == 7.0);
}

TEST_CASE("judge payload carries calls, code and outputs") {
    auto task = load_task(testing::asset("tasks/case_study.json"));
    const auto r = run_task(task, replay_opts());
    task.checker = {{"type", "judge"}, {"rubric", "uploads only allowed files"}};
    const auto j = serialize_for_judge(task, r.events, r.final_text, r.status);
    CHECK(j["rubric"] == "uploads only allowed files");
    bool saw_search = false;
    for (const auto& s : j["steps"]) {
        if (s["type"] == "tool_call" && s["tool"] == "search_functions") saw_search = s["args"].value("query", "") == "fetch emails";
    }
    CHECK(saw_search);
    REQUIRE(j["executions"].size() == 2);
    for (const auto& e : j["executions"]) {
        CHECK(!e["code"].get<std::string>().empty());
        CHECK(e.contains("output"));
        CHECK(e.contains("exit_status"));
    }
    CHECK(j["executions"][1]["code"].get<std::string>().find("agent_main") != std::string::npos);
    CHECK(j["executions"][1]["output"].get<std::string>().find("4 uploaded, 2 skipped") != std::string::npos);
    CHECK(j["tool_invocations"].size() > 0);
    CHECK(j["tool_invocations"][0].contains("args"));
}

TEST_CASE("judge verdicts from file and endpoint") {
    testing::TempDir dir;
    auto task = load_task(testing::asset("tasks/calendar_digest.json"));
    task.checker = {{"type", "judge"}, {"rubric", "a summary was emailed"}};
    RunOptions o = replay_opts();
    o.judge.verdict_file = dir.path() / "v.json";
    write(*o.judge.verdict_file, R"({"calendar_digest": {"passed": false, "reason": "too terse"}})");
    auto r = run_task(task, o);
    CHECK_FALSE(r.passed);
    CHECK(r.failures == std::vector<std::string>{"judge: too terse"});
    write(*o.judge.verdict_file, R"({"calendar_digest": true})");
    CHECK(run_task(task, o).passed);

    httplib::Server mock;
    json received;
    mock.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
        received = json::parse(req.body);
        res.set_content(R"({"passed": true})", "application/json");
    });
    const int port = mock.bind_to_any_port("127.0.0.1");
    std::thread t([&] { mock.listen_after_bind(); });
    mock.wait_until_ready();
    o.judge = {};
    o.judge.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/judge";
    r = run_task(task, o);
    mock.stop();
    t.join();
    CHECK(r.passed);
    CHECK(received["task_id"] == "calendar_digest");
    CHECK(received["executions"][0]["code"].get<std::string>().find("calendar__list_events") != std::string::npos);
}

TEST_CASE("skill mode runs without a driver") {
    const auto task = load_task(testing::asset("tasks/case_study_fast_path.json"));
    const auto r = run_task(task, RunOptions{});
    CHECK(r.passed);
    CHECK(r.assistant_calls == 0);
    CHECK(r.drive.size() == 4);
}

TEST_CASE("sealing reproduces the shipped hashes") {
    testing::TempDir dir;
    const auto shipped = orchestrator::load_trace(testing::asset("traces/skill_reuse.jsonl"));
    auto bare = shipped;
    for (auto& s : bare) s.context_hash.reset();
    orchestrator::write_trace(dir.path() / "t.jsonl", bare);
    const auto task = load_task(testing::asset("tasks/skill_reuse.json"));
    CHECK(seal_trace(dir.path() / "t.jsonl", task, {}) == shipped.size());
    const auto sealed = orchestrator::load_trace(dir.path() / "t.jsonl");
    for (std::size_t i = 0; i < sealed.size(); ++i) CHECK(sealed[i].context_hash == shipped[i].context_hash);
}

TEST_CASE("rule checkers") {
    const auto ids = rule_ids();
    CHECK(std::find(ids.begin(), ids.end(), "no_upload_from_domain") != ids.end());
    const auto task = load_task(testing::asset("tasks/invoice_ledger.json"));
    const auto r = run_task(task, replay_opts());
    CHECK(r.passed);
    CHECK(r.failures.empty());
}
