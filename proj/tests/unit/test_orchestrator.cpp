#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "codemem/orchestrator.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace codemem;
using namespace codemem::orchestrator;

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

std::shared_ptr<ReplayDriver> replay(const std::vector<json>& actions) {
    std::vector<TraceStep> steps;
    for (const auto& a : actions) {
        TraceStep s;
        s.step = steps.size() + 1;
        s.action = action_from_json(a);
        steps.push_back(s);
    }
    return std::make_shared<ReplayDriver>(steps, "replay:test");
}

json tool(const std::string& name, json args = json::object()) { return {{"kind", "tool_call"}, {"name", name}, {"args", args}}; }
json final_text(const std::string& text) { return {{"kind", "final"}, {"text", text}}; }
json ask(const std::string& text) { return {{"kind", "ask_user"}, {"text", text}}; }

struct Rig {
    registry::Registry registry;
    skillbank::SkillBank bank;
    std::unique_ptr<Orchestrator> orch;

    explicit Rig(OrchestratorConfig cfg = {}) {
        registry.import_manifest(read_json_file(testing::asset("manifests/case_study_tools.json")));
        orch = std::make_unique<Orchestrator>(cfg, registry, bank);
    }

    std::string session(std::shared_ptr<Driver> driver, SessionOptions so = {}) {
        so.driver = std::move(driver);
        if (!so.fixture) so.fixture = toolhost::load_fixture_file(testing::asset("fixtures/case_study.json"));
        return orch->create_session(std::move(so));
    }

    std::size_t count(const std::string& sid, EventKind kind) {
        std::size_t n = 0;
        for (const auto& e : orch->trajectory(sid)->events()) n += e.kind == kind ? 1 : 0;
        return n;
    }
};

const std::string kBridgeSkillDescription =
    "Upload PDF and XLSX attachments from recent emails to OneDrive by company, skipping @agentr.dev senders";

} // namespace

TEST_CASE("system prompt is the pinned asset") {
    const auto asset = read_text_file(testing::asset("prompts/system_v1.txt"));
    CHECK(system_prompt_text() == asset);
    CHECK(system_prompt_version() == "system_v1");
    CHECK(sha256_hex(system_prompt_text()) == "cdfb68d98c7df07b3fd858c93c1bd0e3dfc9b4c6d7357cbf5dea3f3bbd96029b");
}

TEST_CASE("core tool specs name every core tool") {
    std::set<std::string> names;
    for (const auto& s : core_tool_specs()) names.insert(s["function"]["name"].get<std::string>());
    for (const char* n : {"search_functions", "load_functions", "write_todos", "execute_code", "register_skill"}) {
        CHECK(names.count(n) == 1);
    }
}

TEST_CASE("final right away gives one assistant event and status done") {
    Rig rig;
    const auto sid = rig.session(replay({final_text("hi")}));
    const auto out = rig.orch->run_session(sid, "hello");
    CHECK(out.status == SessionStatus::done);
    CHECK(out.final_text == "hi");
    CHECK(out.driver_calls == 1);
    CHECK(rig.count(sid, EventKind::assistant_action) == 1);
    CHECK(rig.orch->session_info(sid).status == SessionStatus::done);
}

TEST_CASE("ask_user pauses and the next message resumes") {
    Rig rig;
    const auto sid = rig.session(replay({ask("Would you like me to add a memory log so duplicates are skipped?"), final_text("ok")}));
    auto out = rig.orch->run_session(sid, "move my attachments");
    CHECK(out.status == SessionStatus::awaiting_user);
    CHECK(rig.orch->session_info(sid).status == SessionStatus::awaiting_user);
    out = rig.orch->run_session(sid, "no log required");
    CHECK(out.status == SessionStatus::done);
    const auto ctx = rig.orch->visible_context(sid);
    REQUIRE(ctx.size() == 5);
    CHECK(ctx[3] == Message{"user", "no log required"});
}

TEST_CASE("exhausted trace fails the session and keeps the trajectory") {
    Rig rig;
    const auto sid = rig.session(replay({tool("search_functions", {{"query", "email"}})}));
    CHECK(kind_of([&] { rig.orch->run_session(sid, "go"); }) == ErrorKind::TraceExhausted);
    CHECK(rig.orch->session_info(sid).status == SessionStatus::failed);
    CHECK(rig.count(sid, EventKind::tool_result) == 1);
    CHECK(kind_of([&] { rig.orch->run_session(sid, "again"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("divergent context names the step") {
    std::vector<TraceStep> steps(2);
    steps[0].step = 1;
    steps[0].action = action_from_json(tool("search_functions", {{"query", "email"}}));
    steps[1].step = 2;
    steps[1].context_hash = std::string(64, '0');
    steps[1].action = action_from_json(final_text("x"));
    Rig rig;
    const auto sid = rig.session(std::make_shared<ReplayDriver>(steps, "t"));
    try {
        rig.orch->run_session(sid, "go");
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TraceDivergence);
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("step limit fails the session") {
    Rig rig;
    SessionOptions so;
    so.max_steps = 2;
    const auto sid = rig.session(replay({tool("search_functions", {{"query", "a"}}), tool("search_functions", {{"query", "b"}}),
                                         final_text("never")}),
                                 so);
    CHECK(kind_of([&] { rig.orch->run_session(sid, "go"); }) == ErrorKind::StepLimitExceeded);
    CHECK(rig.orch->session_info(sid).status == SessionStatus::failed);
    CHECK(rig.count(sid, EventKind::assistant_action) == 2);
}

TEST_CASE("tool errors become visible text instead of aborting") {
    Rig rig;
    const auto sid = rig.session(replay({tool("no_such_tool"), tool("load_functions", {{"names", "x"}}),
                                         tool("register_skill", {{"name", "s"}, {"description", "d"}}), final_text("done")}));
    rig.orch->run_session(sid, "go");
    std::vector<std::string> texts;
    for (const auto& e : rig.orch->trajectory(sid)->events()) {
        if (e.kind == EventKind::tool_result) texts.push_back(e.data["text"]);
    }
    REQUIRE(texts.size() == 3);
    CHECK(texts[0].rfind("error: UnknownTool: ", 0) == 0);
    CHECK(texts[1].rfind("error: InvalidArgument: ", 0) == 0);
    CHECK(texts[2].rfind("error: ValidationMissing: ", 0) == 0);
}

TEST_CASE("failed execution with an open plan adds a recovery note") {
    Rig rig;
    const json plan = {{"todos", {{{"status", "completed"}, {"content", "Look around"}}, {{"status", "in_progress"}, {"content", "Process sample"}}}}};
    const auto sid = rig.session(replay({tool("write_todos", plan), tool("execute_code", {{"code", "raise SystemExit(3)"}}), final_text("stop")}));
    rig.orch->run_session(sid, "go");
    const auto events = rig.orch->trajectory(sid)->events();
    const auto it = std::find_if(events.begin(), events.end(), [](const Event& e) { return e.kind == EventKind::recovery; });
    REQUIRE(it != events.end());
    CHECK(it->data["next_item"] == "Process sample");
    CHECK(it->data["text"].get<std::string>().find("Resume at the first item that is not completed: Process sample") != std::string::npos);
    const auto ctx = rig.orch->visible_context(sid);
    CHECK(std::any_of(ctx.begin(), ctx.end(), [](const Message& m) { return m.role == "system" && m.content.find("Process sample") != std::string::npos; }));
}

TEST_CASE("context over budget is truncated but the first request stays") {
    Rig rig;
    SessionOptions so;
    so.token_budget = 1200;
    const std::string noisy = "print('x' * 12000)";
    const json plan = {{"todos", {{{"status", "in_progress"}, {"content", "Print a lot"}}}}};
    const auto sid = rig.session(replay({tool("write_todos", plan), tool("execute_code", {{"code", noisy}}), final_text("done")}), so);
    rig.orch->run_session(sid, "the original request");
    CHECK(rig.count(sid, EventKind::context_truncated) >= 1);
    const auto ctx = rig.orch->visible_context(sid);
    CHECK(ctx[0].role == "system");
    CHECK(ctx[1] == Message{"user", "the original request"});
    CHECK(ctx[2].content.rfind("Earlier conversation was truncated", 0) == 0);
    CHECK(ctx[2].content.find("Print a lot") != std::string::npos);
    for (const auto& m : ctx) CHECK(m.content.find(std::string(200, 'x')) == std::string::npos);
}

TEST_CASE("golden exploration trace ends registered and done") {
    Rig rig;
    auto driver = ReplayDriver::from_file(testing::asset("traces/case_study.jsonl"));
    const auto first = load_trace(testing::asset("traces/case_study.jsonl")).front();
    CHECK(first.action.name == "search_functions");
    CHECK(first.action.args == json{{"query", "fetch emails"}, {"k", 5}});

    const auto sid = rig.session(driver);
    CHECK(rig.orch->run_session(sid, eval::load_task(testing::asset("tasks/case_study.json")).prompt).status == SessionStatus::awaiting_user);
    CHECK(rig.orch->run_session(sid, "no log required").status == SessionStatus::awaiting_user);
    CHECK(rig.orch->run_session(sid, "ok").status == SessionStatus::done);

    std::vector<std::string> actions;
    for (const auto& e : rig.orch->trajectory(sid)->events()) {
        if (e.kind != EventKind::assistant_action) continue;
        const auto& a = e.data["action"];
        actions.push_back(a["kind"] == "tool_call" ? a["name"].get<std::string>() : a["kind"].get<std::string>());
    }
    const std::vector<std::string> expected{"search_functions", "load_functions", "write_todos", "execute_code",
                                            "ask_user",         "write_todos",    "execute_code", "write_todos",
                                            "ask_user",         "register_skill", "write_todos",  "final"};
    CHECK(actions == expected);
    const auto skill = rig.bank.get_skill("outlook_onedrive_bridge");
    CHECK(skill.version == 1);
    CHECK(skill.source == read_text_file(testing::asset("skills/outlook_onedrive_bridge.py")));
    CHECK(skill.required_tools == std::vector<std::string>{"onedrive__upload_file", "outlook__get_attachment", "outlook__list_emails"});
    CHECK(rig.orch->host().drive(sid).size() == 4);
    CHECK(rig.orch->todo_store().get_todos(sid).all_completed());
}

TEST_CASE("the model never sees bridge payload bytes") {
    Rig rig;
    auto world = toolhost::load_fixture_file(testing::asset("fixtures/case_study.json"));
    std::vector<std::string> sentinels;
    for (auto& e : world.emails) {
        for (auto& a : e.attachments) {
            a.content = "PAYLOAD-SENTINEL-" + e.id + "-" + a.filename + std::string(64, '#');
            sentinels.push_back(a.content.substr(0, 30));
        }
    }
    SessionOptions so;
    so.fixture = world;
    const auto sid = rig.session(ReplayDriver::from_file(testing::asset("traces/case_study.jsonl")), so);
    rig.orch->run_session(sid, eval::load_task(testing::asset("tasks/case_study.json")).prompt);
    rig.orch->run_session(sid, "no log required");
    rig.orch->run_session(sid, "ok");
    // the payloads did travel through the bridge
    std::size_t seen_in_invocations = 0;
    for (const auto& e : rig.orch->trajectory(sid)->events()) {
        if (e.kind == EventKind::invocation && e.data.dump().find("PAYLOAD-SENTINEL") != std::string::npos) ++seen_in_invocations;
    }
    CHECK(seen_in_invocations > 0);
    for (const auto& m : rig.orch->visible_context(sid)) {
        CHECK(m.content.find("PAYLOAD-SENTINEL") == std::string::npos);
    }
}

TEST_CASE("run_skill is driver free") {
    Rig rig;
    eval::install_skill(rig.bank, rig.registry,
                        {"outlook_onedrive_bridge", testing::asset("skills/outlook_onedrive_bridge.py"), kBridgeSkillDescription});
    const auto sid = rig.session(nullptr);
    const auto r = rig.orch->run_skill(sid, "outlook_onedrive_bridge", std::nullopt, {{"days_back", 15}});
    CHECK(r.succeeded());
    CHECK(r.stdout_tail.find("4 uploaded, 2 skipped") != std::string::npos);
    CHECK(rig.orch->session_info(sid).driver_calls == 0);
    CHECK(rig.count(sid, EventKind::assistant_action) == 0);
    CHECK(rig.orch->host().drive(sid).size() == 4);
    CHECK(kind_of([&] { rig.orch->run_skill(sid, "missing", std::nullopt, json::object()); }) == ErrorKind::UnknownSkill);
    CHECK(kind_of([&] { rig.orch->run_skill("nope", "outlook_onedrive_bridge", std::nullopt, json::object()); }) ==
          ErrorKind::UnknownSession);
}

TEST_CASE("sessions survive a restart") {
    testing::TempDir dir;
    std::string sid;
    std::vector<Event> before;
    {
        OrchestratorConfig cfg;
        cfg.data_dir = dir.path();
        Rig rig(cfg);
        const json plan = {{"todos", {{{"status", "completed"}, {"content", "One"}}}}};
        sid = rig.session(replay({tool("write_todos", plan), final_text("hi")}));
        rig.orch->run_session(sid, "hello");
        before = rig.orch->trajectory(sid)->events();
    }
    OrchestratorConfig cfg;
    cfg.data_dir = dir.path();
    Rig again(cfg);
    REQUIRE(again.orch->has_session(sid));
    const auto after = again.orch->trajectory(sid)->events();
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(to_json(after[i]) == to_json(before[i]));
    }
    CHECK(again.orch->session_info(sid).status == SessionStatus::done);
    CHECK(again.orch->todo_store().get_todos(sid).items.size() == 1);
    CHECK(again.orch->host().has_fixture(sid));
    CHECK(kind_of([&] { again.orch->create_session({sid}); }) == ErrorKind::DuplicateName);
}

TEST_CASE("context hash is sha256 over role:content lines") {
    const std::vector<Message> msgs{{"system", "a"}, {"user", "b\nc"}};
    CHECK(context_hash(msgs) == sha256_hex("system:a\nuser:b\nc\n"));
}

TEST_CASE("trace files round trip") {
    testing::TempDir dir;
    std::vector<TraceStep> steps(2);
    steps[0].step = 1;
    steps[0].context_hash = "abc";
    steps[0].action = action_from_json(tool("execute_code", {{"code", "print(1)"}}));
    steps[0].latency_s = 1.5;
    steps[1].step = 2;
    steps[1].action = action_from_json(final_text("done"));
    write_trace(dir.path() / "t.jsonl", steps);
    const auto back = load_trace(dir.path() / "t.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].context_hash == std::optional<std::string>("abc"));
    CHECK(back[0].latency_s == std::optional<double>(1.5));
    CHECK(to_json(back[0].action) == to_json(steps[0].action));
    CHECK(!back[1].context_hash);
    CHECK(kind_of([] { (void)action_from_json(json{{"kind", "dance"}}); }) == ErrorKind::DriverError);
}

TEST_CASE("http driver speaks chat completions") {
    httplib::Server mock;
    json seen;
    int calls = 0;
    mock.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        ++calls;
        json msg;
        if (calls == 1) {
            msg = {{"role", "assistant"},
                   {"content", nullptr},
                   {"tool_calls", {{{"type", "function"}, {"function", {{"name", "search_functions"}, {"arguments", "{\"query\":\"fetch emails\"}"}}}}}}};
        } else if (calls == 2) {
            msg = {{"role", "assistant"},
                   {"tool_calls", {{{"type", "function"}, {"function", {{"name", "ask_user"}, {"arguments", "{\"question\":\"which folder?\"}"}}}}}}};
        } else {
            msg = {{"role", "assistant"}, {"content", "all done"}};
        }
        res.set_content(json{{"choices", {{{"message", msg}}}}, {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}.dump(),
                        "application/json");
    });
    mock.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = mock.bind_to_any_port("127.0.0.1");
    std::thread t([&] { mock.listen_after_bind(); });
    mock.wait_until_ready();

    HttpDriverConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "test-model";
    HttpDriver driver(cfg);
    const std::vector<Message> ctx{{"system", "sys"}, {"user", "go"}, {"tool", "out"}};
    auto r = driver.next(ctx, core_tool_specs());
    CHECK(r.action.kind == AssistantAction::Kind::tool_call);
    CHECK(r.action.name == "search_functions");
    CHECK(r.action.args["query"] == "fetch emails");
    CHECK(r.prompt_tokens == 11);
    CHECK(seen["model"] == "test-model");
    CHECK(seen["messages"][2]["role"] == "user");
    CHECK(seen["messages"][2]["content"] == "tool result:\nout");
    CHECK(seen["tools"].back()["function"]["name"] == "ask_user");
    r = driver.next(ctx, core_tool_specs());
    CHECK(r.action.kind == AssistantAction::Kind::ask_user);
    CHECK(r.action.text == "which folder?");
    r = driver.next(ctx, core_tool_specs());
    CHECK(r.action.kind == AssistantAction::Kind::final);
    CHECK(r.action.text == "all done");

    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    CHECK(kind_of([&] { HttpDriver(cfg).next(ctx, json::array()); }) == ErrorKind::HttpError);
    mock.stop();
    t.join();

    CHECK(kind_of([] { (void)make_driver("carrier-pigeon:x"); }) == ErrorKind::BadConfig);
    CHECK(kind_of([] { (void)make_driver("replay:/no/such/trace.jsonl"); }) == ErrorKind::IoError);
    CHECK(kind_of([] { (void)HttpDriver::parse_response(json{{"choices", json::array()}}); }) == ErrorKind::DriverError);
}

TEST_CASE("trajectory waits for new events") {
    Trajectory traj("s");
    std::thread writer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        traj.append(EventKind::status, {{"status", "active"}});
    });
    const auto got = traj.wait_since(0, std::chrono::milliseconds(2000));
    writer.join();
    REQUIRE(got.size() == 1);
    CHECK(got[0].seq == 1);
    CHECK(traj.wait_since(1, std::chrono::milliseconds(10)).empty());
}
