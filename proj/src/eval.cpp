#include "codemem/eval.hpp"

#include "codemem/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <set>
#include <thread>

namespace codemem::eval {

namespace fs = std::filesystem;
using orchestrator::Event;
using orchestrator::EventKind;

namespace {

[[noreturn]] void bad_suite(const std::string& msg) { throw Error(ErrorKind::SuiteParseError, msg); }

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
std::optional<T> opt(const json& doc, const char* key) {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    return doc[key].get<T>();
}

} // namespace

TaskSpec task_from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) bad_suite("task must be a JSON object");
    TaskSpec t;
    try {
        t.task_id = doc.at("task_id").get<std::string>();
        t.prompt = doc.value("prompt", "");
        t.difficulty = doc.value("difficulty", 1);
        if (doc.contains("fixture")) t.fixture = resolve(base_dir, doc["fixture"].get<std::string>());
        for (const auto& m : doc.value("manifests", json::array())) t.manifests.push_back(resolve(base_dir, m.get<std::string>()));
        for (const auto& s : doc.value("skills", json::array())) {
            t.skills.push_back({s.at("name").get<std::string>(), resolve(base_dir, s.at("file").get<std::string>()),
                                s.value("description", "")});
        }
        t.replies = doc.value("replies", std::vector<std::string>{});
        t.mode = doc.value("mode", "session");
        t.skill = doc.value("skill", "");
        t.skill_args = doc.value("skill_args", json::object());
        t.trace = doc.value("trace", t.task_id + ".jsonl");
        t.payload_size = opt<std::size_t>(doc, "payload_size");
        t.token_budget = opt<std::size_t>(doc, "token_budget");
        t.max_steps = opt<std::size_t>(doc, "max_steps");
        t.auto_register = opt<bool>(doc, "auto_register");
        t.checker = doc.value("checker", json{{"type", "rule"}, {"rules", json::array()}});
    } catch (const json::exception& e) {
        bad_suite("task '" + doc.value("task_id", std::string("?")) + "': " + e.what());
    }
    if (t.task_id.empty()) bad_suite("task_id must not be empty");
    if (t.difficulty < 1 || t.difficulty > 5) bad_suite("task '" + t.task_id + "': difficulty must be 1..5");
    if (t.mode != "session" && t.mode != "skill") bad_suite("task '" + t.task_id + "': mode must be session or skill");
    if (t.mode == "skill" && t.skill.empty()) bad_suite("task '" + t.task_id + "': skill mode needs 'skill'");
    const auto type = t.checker.value("type", "");
    if (type == "rule") {
        if (!t.checker.contains("rules") || !t.checker["rules"].is_array()) bad_suite("task '" + t.task_id + "': rules must be an array");
        const auto ids = rule_ids();
        for (const auto& r : t.checker["rules"]) {
            const auto id = r.value("id", "");
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) bad_suite("task '" + t.task_id + "': unknown rule '" + id + "'");
        }
    } else if (type != "judge") {
        bad_suite("task '" + t.task_id + "': checker type must be rule or judge");
    }
    return t;
}

TaskSpec load_task(const fs::path& file) {
    json doc;
    try {
        doc = read_json_file(file);
    } catch (const Error& e) {
        bad_suite(e.what());
    }
    return task_from_json(doc, file.parent_path());
}

std::vector<TaskSpec> load_suite(const fs::path& file) {
    json doc;
    try {
        doc = read_json_file(file);
    } catch (const Error& e) {
        bad_suite(e.what());
    }
    if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array()) bad_suite("suite needs a 'tasks' array");
    std::vector<TaskSpec> tasks;
    std::set<std::string> seen;
    for (const auto& entry : doc["tasks"]) {
        auto t = entry.is_string() ? load_task(resolve(file.parent_path(), entry.get<std::string>()))
                                   : task_from_json(entry, file.parent_path());
        if (!seen.insert(t.task_id).second) bad_suite("duplicate task_id '" + t.task_id + "'");
        tasks.push_back(std::move(t));
    }
    return tasks;
}

// ---------------------------------------------------------------------------

json to_json(const TaskRecord& r, bool with_events) {
    json drive = json::array();
    for (const auto& [path, _] : r.drive) drive.push_back(path);
    json j{{"task_id", r.task_id},
           {"label", r.label},
           {"run_index", r.run_index},
           {"passed", r.passed},
           {"assistant_calls", r.assistant_calls},
           {"wall_time", r.wall_time},
           {"total_tokens", r.total_tokens},
           {"status", r.status},
           {"final_text", r.final_text},
           {"failures", r.failures},
           {"drive", drive},
           {"todos", todos::items_to_json(r.todos)}};
    if (with_events) {
        json events = json::array();
        for (const auto& e : r.events) events.push_back(orchestrator::to_json(e));
        j["events"] = events;
    }
    return j;
}

TaskRecord record_from_json(const json& j) {
    TaskRecord r;
    try {
        r.task_id = j.at("task_id").get<std::string>();
        r.label = j.value("label", "");
        r.run_index = j.value("run_index", std::size_t{0});
        r.passed = j.at("passed").get<bool>();
        r.assistant_calls = j.value("assistant_calls", std::size_t{0});
        r.wall_time = j.value("wall_time", 0.0);
        r.total_tokens = j.value("total_tokens", std::size_t{0});
        r.status = j.value("status", "");
        r.final_text = j.value("final_text", "");
        r.failures = j.value("failures", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("bad task record: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// rule checkers

namespace {

using Rule = std::function<std::vector<std::string>(const json& params, const CheckContext& ctx)>;

std::vector<toolhost::InvocationRecord> invocations(const std::vector<Event>& events) {
    std::vector<toolhost::InvocationRecord> out;
    for (const auto& e : events) {
        if (e.kind == EventKind::invocation) out.push_back(toolhost::invocation_from_json(e.data));
    }
    return out;
}

std::string domain_of(const std::string& address) {
    const auto at = address.rfind('@');
    std::string d = at == std::string::npos ? "" : address.substr(at + 1);
    std::transform(d.begin(), d.end(), d.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return d;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> check_count(const std::string& what, std::size_t actual, const json& params) {
    std::vector<std::string> out;
    if (params.contains("count") && actual != params["count"].get<std::size_t>()) {
        out.push_back(what + " is " + std::to_string(actual) + ", expected " + params["count"].dump());
    }
    if (params.contains("min") && actual < params["min"].get<std::size_t>()) {
        out.push_back(what + " is " + std::to_string(actual) + ", expected at least " + params["min"].dump());
    }
    if (params.contains("max") && actual > params["max"].get<std::size_t>()) {
        out.push_back(what + " is " + std::to_string(actual) + ", expected at most " + params["max"].dump());
    }
    return out;
}

const std::map<std::string, Rule>& rules() {
    static const std::map<std::string, Rule> table{
        {"drive_file_count",
         [](const json& p, const CheckContext& c) {
             const auto prefix = p.value("prefix", "");
             std::size_t n = 0;
             for (const auto& [path, _] : c.final_world.drive) n += path.rfind(prefix, 0) == 0 ? 1 : 0;
             return check_count("drive file count", n, p);
         }},
        {"drive_contains",
         [](const json& p, const CheckContext& c) {
             std::vector<std::string> out;
             for (const auto& path : p.value("paths", std::vector<std::string>{})) {
                 if (!c.final_world.drive.count(path)) out.push_back("drive lacks '" + path + "'");
             }
             return out;
         }},
        {"no_upload_from_domain",
         // an upload counts as sourced from a sender when its bytes equal one of that sender's attachments
         [](const json& p, const CheckContext& c) {
             const auto domain = lower(p.at("domain").get<std::string>());
             std::map<std::string, std::string> banned; // content -> "email/filename"
             for (const auto& e : c.initial.emails) {
                 if (domain_of(e.from_address) != domain) continue;
                 for (const auto& a : e.attachments) banned[a.content] = e.id + "/" + a.filename;
             }
             std::vector<std::string> out;
             for (const auto& inv : invocations(c.events)) {
                 if (inv.tool != "onedrive__upload_file" || !inv.ok) continue;
                 const auto it = banned.find(inv.args.value("content", ""));
                 if (it != banned.end()) {
                     out.push_back("upload of '" + inv.args.value("path", "") + "' comes from " + it->second + " (@" + domain + ")");
                 }
             }
             for (const auto& [path, content] : c.final_world.drive) {
                 const auto it = banned.find(content);
                 if (it != banned.end()) out.push_back("drive file '" + path + "' comes from " + it->second + " (@" + domain + ")");
             }
             return out;
         }},
        {"excluded_emails",
         [](const json& p, const CheckContext& c) {
             std::set<std::string> stored;
             for (const auto& [_, content] : c.final_world.drive) stored.insert(content);
             std::size_t excluded = 0;
             for (const auto& e : c.initial.emails) {
                 const bool any = std::any_of(e.attachments.begin(), e.attachments.end(),
                                              [&](const auto& a) { return stored.count(a.content) > 0; });
                 excluded += any ? 0 : 1;
             }
             return check_count("excluded email count", excluded, p);
         }},
        {"skill_registered",
         [](const json& p, const CheckContext& c) {
             const auto name = p.at("name").get<std::string>();
             for (const auto& e : c.events) {
                 if (e.kind == EventKind::skill_registered && e.data.value("name", "") == name) return std::vector<std::string>{};
             }
             return std::vector<std::string>{"skill '" + name + "' was not registered"};
         }},
        {"final_text_contains",
         [](const json& p, const CheckContext& c) {
             const auto text = p.at("text").get<std::string>();
             if (lower(c.final_text).find(lower(text)) != std::string::npos) return std::vector<std::string>{};
             return std::vector<std::string>{"final answer does not mention '" + text + "'"};
         }},
        {"todos_completed",
         [](const json&, const CheckContext& c) {
             if (c.todos.empty()) return std::vector<std::string>{"no todo list was written"};
             for (const auto& t : c.todos) {
                 if (t.status != todos::Status::completed) return std::vector<std::string>{"todo '" + t.content + "' is not completed"};
             }
             return std::vector<std::string>{};
         }},
        {"invocation_count",
         [](const json& p, const CheckContext& c) {
             const auto tool = p.value("tool", "");
             const bool ok_only = p.value("ok_only", true);
             std::size_t n = 0;
             for (const auto& inv : invocations(c.events)) {
                 if ((tool.empty() || inv.tool == tool) && (!ok_only || inv.ok)) ++n;
             }
             return check_count("invocations of '" + tool + "'", n, p);
         }},
        {"outbox_count",
         [](const json& p, const CheckContext& c) { return check_count("sent email count", c.final_world.outbox.size(), p); }},
        {"outbox_contains",
         [](const json& p, const CheckContext& c) {
             const auto to = p.value("to", "");
             const auto text = lower(p.value("text", ""));
             for (const auto& m : c.final_world.outbox) {
                 if (!to.empty() && m.value("to", "") != to) continue;
                 if (lower(m.value("subject", "") + "\n" + m.value("body", "")).find(text) != std::string::npos) {
                     return std::vector<std::string>{};
                 }
             }
             return std::vector<std::string>{"no sent email to '" + to + "' mentions '" + text + "'"};
         }},
        {"sheet_rows",
         [](const json& p, const CheckContext& c) {
             const auto sheet = p.at("sheet").get<std::string>();
             const auto it = c.final_world.sheets.find(sheet);
             const std::vector<json> none;
             const auto& rows = it == c.final_world.sheets.end() ? none : it->second;
             auto out = check_count("rows in sheet '" + sheet + "'", rows.size(), p);
             if (p.contains("rows") && json(rows) != p["rows"]) {
                 out.push_back("rows in sheet '" + sheet + "' are " + json(rows).dump() + ", expected " + p["rows"].dump());
             }
             return out;
         }},
        {"status",
         [](const json& p, const CheckContext& c) {
             const auto want = p.at("equals").get<std::string>();
             if (c.status == want) return std::vector<std::string>{};
             return std::vector<std::string>{"session status is " + c.status + ", expected " + want};
         }},
    };
    return table;
}

} // namespace

std::vector<std::string> rule_ids() {
    std::vector<std::string> out;
    for (const auto& [id, _] : rules()) out.push_back(id);
    return out;
}

std::vector<std::string> apply_rule(const json& rule, const CheckContext& ctx) {
    const auto id = rule.value("id", "");
    const auto it = rules().find(id);
    if (it == rules().end()) bad_suite("unknown rule '" + id + "'");
    try {
        return it->second(rule.value("params", json::object()), ctx);
    } catch (const json::exception& e) {
        bad_suite("rule '" + id + "' has bad params: " + e.what());
    }
}

// ---------------------------------------------------------------------------

json serialize_for_judge(const TaskSpec& task, const std::vector<Event>& events, const std::string& final_text,
                         const std::string& status) {
    json steps = json::array(), executions = json::array(), calls = json::array();
    for (const auto& e : events) {
        switch (e.kind) {
        case EventKind::user_message: steps.push_back({{"seq", e.seq}, {"type", "user"}, {"text", e.data.value("text", "")}}); break;
        case EventKind::assistant_action: {
            const auto& a = e.data.at("action");
            json step{{"seq", e.seq}, {"type", a.value("kind", "")}};
            if (a.value("kind", "") == "tool_call") {
                step["tool"] = a.value("name", "");
                step["args"] = a.value("args", json::object());
            } else {
                step["text"] = a.value("text", "");
            }
            steps.push_back(step);
            break;
        }
        case EventKind::tool_result:
            steps.push_back({{"seq", e.seq}, {"type", "tool_result"}, {"tool", e.data.value("tool", "")}, {"output", e.data.value("text", "")}});
            break;
        case EventKind::execution_result: {
            const auto& ex = e.data.at("execution");
            executions.push_back({{"seq", e.seq},
                                  {"execution_id", ex.value("execution_id", "")},
                                  {"via", e.data.value("via", "")},
                                  {"code", e.data.value("code", "")},
                                  {"exit_status", ex.value("exit_status", "")},
                                  {"stdout_tail", ex.value("stdout_tail", "")},
                                  {"output", e.data.value("visible", "")}});
            break;
        }
        case EventKind::invocation:
            calls.push_back({{"seq", e.seq},
                             {"tool", e.data.value("tool", "")},
                             {"args", e.data.value("args", json::object())},
                             {"ok", e.data.value("ok", false)}});
            break;
        default: break;
        }
    }
    return {{"task_id", task.task_id},
            {"prompt", task.prompt},
            {"rubric", task.checker.value("rubric", "")},
            {"status", status},
            {"final_text", final_text},
            {"steps", steps},
            {"executions", executions},
            {"tool_invocations", calls}};
}

namespace {

std::vector<std::string> ask_judge(const JudgeConfig& judge, const TaskSpec& task, const json& payload) {
    if (judge.verdict_file) {
        const auto verdicts = read_json_file(*judge.verdict_file);
        if (!verdicts.contains(task.task_id)) return {"judge verdict file has no entry for '" + task.task_id + "'"};
        const auto& v = verdicts[task.task_id];
        const bool passed = v.is_boolean() ? v.get<bool>() : v.value("passed", false);
        if (passed) return {};
        return {"judge: " + (v.is_object() ? v.value("reason", std::string("failed")) : std::string("failed"))};
    }
    if (judge.endpoint.empty()) throw Error(ErrorKind::BadConfig, "task '" + task.task_id + "' needs a judge endpoint or verdict file");
    const auto scheme_end = judge.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::BadConfig, "judge endpoint must be an http URL");
    const auto path_start = judge.endpoint.find('/', scheme_end + 3);
    httplib::Client client(judge.endpoint.substr(0, path_start));
    client.set_read_timeout(120, 0);
    const std::string path = path_start == std::string::npos ? "/" : judge.endpoint.substr(path_start);
    auto res = client.Post(path, payload.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
    if (!res) throw Error(ErrorKind::HttpError, "judge request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorKind::HttpError, "judge returned HTTP " + std::to_string(res->status));
    json verdict;
    try {
        verdict = json::parse(res->body);
    } catch (const json::exception&) {
        throw Error(ErrorKind::HttpError, "judge response is not JSON");
    }
    if (verdict.value("passed", false)) return {};
    return {"judge: " + verdict.value("reason", std::string("failed"))};
}

} // namespace

// ---------------------------------------------------------------------------

skillbank::Skill install_skill(skillbank::SkillBank& bank, const registry::Registry& registry, const SeedSkill& seed) {
    skillbank::SkillDraft draft;
    draft.name = seed.name;
    draft.description = seed.description;
    draft.source = read_text_file(seed.file);
    for (const auto& tool : registry.names()) {
        if (draft.source.find(tool) != std::string::npos) draft.required_tools.push_back(tool);
    }
    draft.validation = {"shipped", "shipped", true};
    skillbank::RegistrationChecks checks;
    checks.execution_succeeded = [](const skillbank::ValidationRecord& v) { return v.execution_id == "shipped"; };
    checks.tool_known = [&registry](const std::string& t) { return registry.contains(t); };
    return bank.register_skill(std::move(draft), checks);
}

std::shared_ptr<orchestrator::Driver> driver_for_task(const std::string& spec, const TaskSpec& task) {
    if (spec.rfind("replay:", 0) == 0) {
        const fs::path target = spec.substr(7);
        const fs::path file = fs::is_directory(target) ? target / task.trace : target;
        if (!fs::exists(file)) throw Error(ErrorKind::IoError, "no trace for task '" + task.task_id + "' at " + file.string());
        return orchestrator::ReplayDriver::from_file(file);
    }
    return orchestrator::make_driver(spec);
}

TaskRecord run_task(const TaskSpec& task, const RunOptions& options, std::size_t run_index,
                    std::shared_ptr<orchestrator::Driver> driver) {
    if (task.fixture.empty() || !fs::exists(task.fixture)) {
        throw Error(ErrorKind::FixtureMissing, "task '" + task.task_id + "' fixture not found: " + task.fixture.string());
    }
    registry::Registry registry;
    for (const auto& m : task.manifests) registry.import_manifest(read_json_file(m));
    skillbank::SkillBank bank;
    for (const auto& s : task.skills) install_skill(bank, registry, s);

    auto world = toolhost::load_fixture_file(task.fixture);
    if (task.payload_size) toolhost::resize_payloads(world, *task.payload_size);
    const auto initial = world;

    orchestrator::OrchestratorConfig cfg;
    cfg.sandbox = options.sandbox;
    cfg.limits = options.limits;
    orchestrator::Orchestrator orch(cfg, registry, bank);

    TaskRecord rec;
    rec.task_id = task.task_id;
    rec.label = options.label;
    rec.run_index = run_index;

    orchestrator::SessionOptions so;
    so.session_id = task.task_id + "-r" + std::to_string(run_index);
    so.fixture = std::move(world);
    so.token_budget = task.token_budget;
    so.max_steps = task.max_steps;
    so.auto_register = task.auto_register;

    const auto t0 = std::chrono::steady_clock::now();
    std::string run_error;
    std::string final_text;
    std::string sid;
    try {
        if (task.mode == "session" && !driver) driver = driver_for_task(options.driver_spec, task);
        so.driver = driver;
        sid = orch.create_session(std::move(so));
        if (task.mode == "skill") {
            const auto result = orch.run_skill(sid, task.skill, std::nullopt, task.skill_args);
            final_text = result.stdout_tail;
            if (!result.succeeded()) run_error = "skill run ended with " + std::string(sandbox::to_string(result.exit_status));
        } else {
            std::string message = task.prompt;
            std::size_t next_reply = 0;
            while (true) {
                const auto outcome = orch.run_session(sid, message);
                final_text = outcome.final_text;
                if (outcome.status != orchestrator::SessionStatus::awaiting_user || next_reply >= task.replies.size()) break;
                message = task.replies[next_reply++];
            }
        }
    } catch (const Error& e) {
        if (sid.empty()) throw;
        run_error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto info = orch.session_info(sid);
    rec.status = std::string(orchestrator::to_string(info.status));
    rec.assistant_calls = info.driver_calls;
    rec.final_text = final_text;
    rec.events = orch.trajectory(sid)->events();
    for (const auto& e : rec.events) {
        if (e.kind != EventKind::assistant_action) continue;
        const auto& usage = e.data.value("usage", json::object());
        rec.total_tokens += usage.value("prompt_tokens", std::size_t{0}) + usage.value("completion_tokens", std::size_t{0});
    }
    const auto final_world = orch.host().fixture(sid);
    rec.drive = final_world.drive;
    rec.todos = orch.todo_store().get_todos(sid).items;

    if (!run_error.empty()) rec.failures.push_back(run_error);
    const CheckContext ctx{task, initial, final_world, rec.events, rec.todos, bank, rec.status, rec.final_text};
    if (task.checker.value("type", "") == "judge") {
        for (auto& f : ask_judge(options.judge, task, serialize_for_judge(task, rec.events, rec.final_text, rec.status))) {
            rec.failures.push_back(std::move(f));
        }
    } else {
        for (const auto& rule : task.checker["rules"]) {
            for (auto& f : apply_rule(rule, ctx)) rec.failures.push_back(rule.value("id", "") + ": " + f);
        }
    }
    rec.passed = rec.failures.empty();
    return rec;
}

std::vector<TaskRecord> run_suite(const std::vector<TaskSpec>& tasks, const RunOptions& options) {
    const std::size_t n = tasks.size() * options.repeats;
    std::vector<TaskRecord> records(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                records[i] = run_task(tasks[i / options.repeats], options, i % options.repeats);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, n));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return records;
}

// ---------------------------------------------------------------------------

json to_json(const SummaryRow& row) {
    return {{"label", row.label},           {"correctness_min", row.correctness_min}, {"avg_calls", row.avg_calls},
            {"p50_latency", row.p50_latency}, {"total_tokens", row.total_tokens},     {"runs", row.runs},
            {"tasks", row.tasks}};
}

SummaryRow aggregate(const std::string& label, const std::vector<TaskRecord>& records) {
    if (records.empty()) throw Error(ErrorKind::IncompleteGrid, "label '" + label + "' has no records");
    std::set<std::string> task_ids;
    std::set<std::size_t> runs;
    std::set<std::pair<std::string, std::size_t>> cells;
    for (const auto& r : records) {
        task_ids.insert(r.task_id);
        runs.insert(r.run_index);
        if (!cells.emplace(r.task_id, r.run_index).second) {
            throw Error(ErrorKind::IncompleteGrid,
                        "task '" + r.task_id + "' run " + std::to_string(r.run_index) + " appears twice under '" + label + "'");
        }
    }
    if (cells.size() != task_ids.size() * runs.size()) {
        throw Error(ErrorKind::IncompleteGrid, "label '" + label + "' has " + std::to_string(cells.size()) + " of " +
                                                   std::to_string(task_ids.size() * runs.size()) + " (task, run) records");
    }

    SummaryRow row;
    row.label = label;
    row.tasks = task_ids.size();
    row.runs = runs.size();
    std::map<std::size_t, std::size_t> passed_per_run;
    std::size_t calls = 0;
    std::vector<double> times;
    for (const auto& r : records) {
        passed_per_run[r.run_index] += r.passed ? 1 : 0;
        calls += r.assistant_calls;
        row.total_tokens += r.total_tokens;
        times.push_back(r.wall_time);
    }
    row.correctness_min = 100.0;
    for (const auto run : runs) {
        row.correctness_min = std::min(row.correctness_min, 100.0 * static_cast<double>(passed_per_run[run]) /
                                                                static_cast<double>(task_ids.size()));
    }
    row.avg_calls = static_cast<double>(calls) / static_cast<double>(records.size());
    std::sort(times.begin(), times.end());
    row.p50_latency = times[(times.size() - 1) / 2];
    return row;
}

std::vector<SummaryRow> aggregate_by_label(const std::vector<TaskRecord>& records) {
    std::map<std::string, std::vector<TaskRecord>> groups;
    for (const auto& r : records) groups[r.label].push_back(r);
    std::vector<SummaryRow> rows;
    for (const auto& [label, group] : groups) rows.push_back(aggregate(label, group));
    return rows;
}

std::vector<TaskRecord> load_records(const fs::path& file) {
    const auto doc = read_json_file(file);
    const auto default_label = doc.value("label", std::string("codemem"));
    std::vector<TaskRecord> out;
    for (const auto& j : doc.value("records", json::array())) {
        auto r = record_from_json(j);
        if (r.label.empty()) r.label = default_label;
        out.push_back(std::move(r));
    }
    return out;
}

json suite_report(const std::vector<TaskRecord>& records) {
    json rows = json::array(), recs = json::array();
    if (!records.empty()) {
        for (const auto& row : aggregate_by_label(records)) rows.push_back(to_json(row));
    }
    for (const auto& r : records) recs.push_back(to_json(r));
    return {{"rows", rows}, {"records", recs}};
}

std::size_t seal_trace(const fs::path& trace_file, const TaskSpec& task, const RunOptions& options) {
    auto driver = orchestrator::ReplayDriver::from_file(trace_file);
    driver->set_recording(true);
    const auto steps = orchestrator::load_trace(trace_file).size();
    const auto rec = run_task(task, options, 0, driver);
    if (driver->position() != steps) {
        throw Error(ErrorKind::TraceDivergence, "trace " + trace_file.string() + " has " + std::to_string(steps) +
                                                    " steps but the run used " + std::to_string(driver->position()) +
                                                    (rec.failures.empty() ? "" : " (" + rec.failures.front() + ")"));
    }
    orchestrator::write_trace(trace_file, driver->recorded());
    return steps;
}

} // namespace codemem::eval
