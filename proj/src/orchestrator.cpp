#include "codemem/orchestrator.hpp"

#include "codemem/error.hpp"
#include "codemem/tokens.hpp"

#include <algorithm>
#include <regex>

namespace codemem::orchestrator {

namespace detail {
extern const std::string_view kSystemPrompt;
extern const std::string_view kSystemPromptVersion;
} // namespace detail

namespace fs = std::filesystem;

std::string_view system_prompt_text() { return detail::kSystemPrompt; }
std::string_view system_prompt_version() { return detail::kSystemPromptVersion; }

namespace {

json fn(const std::string& name, const std::string& description, json properties, json required) {
    return {{"type", "function"},
            {"function",
             {{"name", name},
              {"description", description},
              {"parameters", {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}}}}}};
}

} // namespace

json core_tool_specs() {
    static const json specs = [] {
        json s = json::array();
        s.push_back(fn("search_functions", "Find tools by keyword; returns name and summary per hit.",
                       {{"query", {{"type", "string"}}}, {"k", {{"type", "integer"}}}}, {"query"}));
        s.push_back(fn("load_functions", "Load full schemas so the tools become callable from sandbox code.",
                       {{"names", {{"type", "array"}, {"items", {{"type", "string"}}}}}}, {"names"}));
        s.push_back(fn("write_todos", "Replace the task checklist.",
                       {{"todos",
                         {{"type", "array"},
                          {"items",
                           {{"type", "object"},
                            {"properties",
                             {{"status", {{"type", "string"}, {"enum", {"pending", "in_progress", "completed"}}}},
                              {"content", {{"type", "string"}}}}},
                            {"required", {"status", "content"}}}}}}},
                       {"todos"}));
        s.push_back(fn("execute_code", "Run a Python script in the sandbox; loaded tools are async functions.",
                       {{"code", {{"type", "string"}}}}, {"code"}));
        s.push_back(fn("register_skill", "Save validated code as a versioned skill.",
                       {{"name", {{"type", "string"}}},
                        {"description", {{"type", "string"}}},
                        {"code", {{"type", "string"}}},
                        {"entrypoint", {{"type", "string"}}},
                        {"user_confirmed", {{"type", "boolean"}}}},
                       {"name", "description"}));
        s.push_back(fn("search_skills", "Find saved skills by keyword.",
                       {{"query", {{"type", "string"}}}, {"k", {{"type", "integer"}}}}, {"query"}));
        s.push_back(fn("load_skill", "Make a saved skill callable from execute_code.",
                       {{"name", {{"type", "string"}}}, {"version", {{"type", "integer"}}}}, {"name"}));
        s.push_back(fn("run_skill", "Run a saved skill directly with JSON arguments.",
                       {{"name", {{"type", "string"}}}, {"version", {{"type", "integer"}}}, {"args", {{"type", "object"}}}},
                       {"name"}));
        return s;
    }();
    return specs;
}

std::string_view to_string(SessionStatus s) noexcept {
    switch (s) {
    case SessionStatus::active: return "active";
    case SessionStatus::awaiting_user: return "awaiting_user";
    case SessionStatus::done: return "done";
    case SessionStatus::failed: return "failed";
    }
    return "failed";
}

SessionStatus session_status_from_string(std::string_view s) {
    for (auto v : {SessionStatus::active, SessionStatus::awaiting_user, SessionStatus::done, SessionStatus::failed}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorKind::ParseError, "unknown session status '" + std::string(s) + "'");
}

json to_json(const SessionInfo& s) {
    json skills = json::array();
    for (const auto& r : s.loaded_skills) skills.push_back({{"name", r.name}, {"version", r.version}});
    return {{"session_id", s.session_id},   {"created_at", s.created_at}, {"status", std::string(to_string(s.status))},
            {"loaded_tools", s.loaded_tools}, {"loaded_skills", skills},  {"driver", s.driver},
            {"event_count", s.event_count}, {"driver_calls", s.driver_calls}};
}

struct Orchestrator::Session {
    std::string id;
    std::string created_at;
    SessionStatus status = SessionStatus::active;
    registry::LoadedSet loaded;
    std::vector<sandbox::SkillRef> skills;
    std::shared_ptr<Trajectory> trajectory;
    std::shared_ptr<Driver> driver;
    std::size_t max_steps = 40;
    std::size_t token_budget = 200000;
    bool auto_register = false;
    sandbox::Limits limits;
    std::optional<std::string> clock;
    std::size_t driver_calls = 0;
    std::map<std::string, bool> executions; // id -> succeeded
    std::string last_execution;
    std::string last_success_code;
    std::mutex run_mutex;
    mutable std::mutex state_mutex;
};

namespace {

bool valid_session_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_\\-]{1,64}");
    return std::regex_match(id, re);
}

std::string require_string(const json& args, const char* key) {
    if (!args.contains(key) || !args[key].is_string()) {
        throw Error(ErrorKind::InvalidArgument, std::string("'") + key + "' must be a string");
    }
    return args[key].get<std::string>();
}

std::size_t optional_k(const json& args) {
    if (!args.contains("k") || args["k"].is_null()) return 5;
    if (!args["k"].is_number_integer() || args["k"].get<long long>() < 1) {
        throw Error(ErrorKind::InvalidArgument, "'k' must be a positive integer");
    }
    return args["k"].get<std::size_t>();
}

std::optional<int> optional_version(const json& args) {
    if (!args.contains("version") || args["version"].is_null()) return std::nullopt;
    if (!args["version"].is_number_integer()) throw Error(ErrorKind::InvalidArgument, "'version' must be an integer");
    return args["version"].get<int>();
}

json execution_summary(const sandbox::ExecutionResult& r) {
    json j = sandbox::to_json(r);
    j.erase("bridge_calls");
    j["bridge_call_count"] = r.bridge_calls.size();
    return j;
}

} // namespace

Orchestrator::Orchestrator(OrchestratorConfig config, registry::Registry& registry, skillbank::SkillBank& skills)
    : config_(std::move(config)), registry_(registry), skills_(skills) {
    if (config_.data_dir) {
        todos_ = std::make_unique<todos::TodoStore>(*config_.data_dir / "sessions");
    } else {
        todos_ = std::make_unique<todos::TodoStore>();
    }
    host_ = std::make_unique<toolhost::ToolHost>(registry_);
    sandbox_ = std::make_unique<sandbox::Sandbox>(config_.sandbox, registry_, skills_, *host_);
    if (config_.data_dir) load_persisted();
}

Orchestrator::~Orchestrator() = default;

std::shared_ptr<Orchestrator::Session> Orchestrator::find(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorKind::UnknownSession, "unknown session '" + session_id + "'");
    return it->second;
}

bool Orchestrator::has_session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return sessions_.count(session_id) > 0;
}

void Orchestrator::persist(const Session& s) const {
    if (!config_.data_dir) return;
    json skills = json::array();
    json doc;
    {
        std::lock_guard lock(s.state_mutex);
        for (const auto& r : s.skills) skills.push_back({{"name", r.name}, {"version", r.version}});
        doc = {{"session_id", s.id},
               {"created_at", s.created_at},
               {"status", std::string(to_string(s.status))},
               {"loaded_tools", s.loaded},
               {"loaded_skills", skills},
               {"driver", s.driver ? s.driver->describe() : ""},
               {"driver_calls", s.driver_calls},
               {"max_steps", s.max_steps},
               {"token_budget", s.token_budget},
               {"auto_register", s.auto_register}};
        if (s.clock) doc["clock"] = *s.clock;
    }
    write_file_atomic(*config_.data_dir / "sessions" / s.id / "session.json", doc.dump(2) + "\n");
}

void Orchestrator::load_persisted() {
    const fs::path root = *config_.data_dir / "sessions";
    if (!fs::exists(root)) return;
    for (const auto& entry : fs::directory_iterator(root)) {
        const auto meta_file = entry.path() / "session.json";
        if (!entry.is_directory() || !fs::exists(meta_file)) continue;
        const auto meta = read_json_file(meta_file);
        auto s = std::make_shared<Session>();
        s->id = meta.at("session_id").get<std::string>();
        s->created_at = meta.value("created_at", "");
        s->status = session_status_from_string(meta.value("status", "active"));
        for (const auto& t : meta.value("loaded_tools", json::array())) s->loaded.insert(t.get<std::string>());
        for (const auto& r : meta.value("loaded_skills", json::array())) {
            s->skills.push_back({r.at("name").get<std::string>(), r.value("version", 0)});
        }
        s->driver_calls = meta.value("driver_calls", std::size_t{0});
        s->max_steps = meta.value("max_steps", config_.max_steps);
        s->token_budget = meta.value("token_budget", config_.token_budget);
        s->auto_register = meta.value("auto_register", config_.auto_register);
        s->limits = config_.limits;
        if (meta.contains("clock")) s->clock = meta["clock"].get<std::string>();
        s->trajectory = Trajectory::load(s->id, entry.path() / "events.jsonl");
        for (const auto& e : s->trajectory->events()) {
            if (e.kind != EventKind::execution_result) continue;
            const auto& ex = e.data.at("execution");
            const bool ok = ex.value("exit_status", "") == "success";
            s->executions[ex.value("execution_id", "")] = ok;
            s->last_execution = ex.value("execution_id", "");
            if (ok && e.data.value("via", "") == "execute_code") s->last_success_code = e.data.value("code", "");
        }
        todos_->open_session(s->id);
        // drive state is not persisted; the world restarts from the saved fixture
        if (fs::exists(entry.path() / "fixture.json")) {
            host_->load_fixture(s->id, toolhost::load_fixture_file(entry.path() / "fixture.json"));
        }
        sessions_[s->id] = s;
    }
}

std::string Orchestrator::create_session(SessionOptions options) {
    auto s = std::make_shared<Session>();
    s->id = options.session_id.empty() ? "s-" + random_hex(6) : options.session_id;
    if (!valid_session_id(s->id)) throw Error(ErrorKind::InvalidArgument, "invalid session id '" + s->id + "'");
    s->created_at = utc_now_iso();
    s->driver = std::move(options.driver);
    s->max_steps = options.max_steps.value_or(config_.max_steps);
    s->token_budget = options.token_budget.value_or(config_.token_budget);
    s->auto_register = options.auto_register.value_or(config_.auto_register);
    s->limits = options.limits.value_or(config_.limits);
    std::optional<fs::path> events_file;
    if (config_.data_dir) events_file = *config_.data_dir / "sessions" / s->id / "events.jsonl";
    {
        std::lock_guard lock(mutex_);
        if (sessions_.count(s->id)) throw Error(ErrorKind::DuplicateName, "session '" + s->id + "' already exists");
        if (events_file && fs::exists(*events_file)) {
            throw Error(ErrorKind::DuplicateName, "session '" + s->id + "' already exists on disk");
        }
        s->trajectory = std::make_shared<Trajectory>(s->id, events_file);
        sessions_[s->id] = s;
    }
    todos_->open_session(s->id);
    json created{{"session_id", s->id},
                 {"system_prompt", std::string(system_prompt_text())},
                 {"system_prompt_version", std::string(system_prompt_version())},
                 {"driver", s->driver ? s->driver->describe() : ""}};
    if (options.fixture) {
        if (options.fixture->now) s->clock = format_utc(*options.fixture->now);
        created["fixture"] = options.fixture->name;
        if (config_.data_dir) {
            write_file_atomic(*config_.data_dir / "sessions" / s->id / "fixture.json",
                              toolhost::fixture_to_json(*options.fixture).dump(2) + "\n");
        }
        host_->load_fixture(s->id, std::move(*options.fixture));
    }
    s->trajectory->append(EventKind::session_created, created);
    persist(*s);
    return s->id;
}

void Orchestrator::load_fixture(const std::string& session_id, toolhost::FixtureWorld world) {
    auto s = find(session_id);
    std::lock_guard run(s->run_mutex);
    {
        std::lock_guard lock(s->state_mutex);
        s->clock = world.now ? std::optional<std::string>(format_utc(*world.now)) : std::nullopt;
    }
    if (config_.data_dir) {
        write_file_atomic(*config_.data_dir / "sessions" / s->id / "fixture.json",
                          toolhost::fixture_to_json(world).dump(2) + "\n");
    }
    host_->load_fixture(session_id, std::move(world));
    persist(*s);
}

void Orchestrator::set_driver(const std::string& session_id, std::shared_ptr<Driver> driver) {
    auto s = find(session_id);
    {
        std::lock_guard lock(s->state_mutex);
        s->driver = std::move(driver);
    }
    persist(*s);
}

void Orchestrator::set_status(Session& s, SessionStatus status, const std::string& reason) {
    {
        std::lock_guard lock(s.state_mutex);
        if (s.status == status) return;
        s.status = status;
    }
    json data{{"status", std::string(to_string(status))}};
    if (!reason.empty()) data["reason"] = reason;
    s.trajectory->append(EventKind::status, data);
    persist(s);
}

RunOutcome Orchestrator::run_session(const std::string& session_id, const std::string& user_message,
                                     std::shared_ptr<Driver> driver) {
    auto s = find(session_id);
    std::lock_guard run(s->run_mutex);
    if (driver) {
        std::lock_guard lock(s->state_mutex);
        s->driver = driver;
    }
    {
        std::lock_guard lock(s->state_mutex);
        driver = s->driver;
        if (s->status == SessionStatus::failed) {
            throw Error(ErrorKind::InvalidArgument, "session '" + session_id + "' has failed; start a new one");
        }
    }
    if (!driver) throw Error(ErrorKind::BadConfig, "session '" + session_id + "' has no driver");

    const std::uint64_t first_seq = s->trajectory->size() + 1;
    RunOutcome outcome;
    set_status(*s, SessionStatus::active);
    s->trajectory->append(EventKind::user_message, {{"text", user_message}});

    const auto collect = [&] {
        for (auto& e : s->trajectory->since(first_seq - 1)) outcome.events.push_back(std::move(e));
        std::lock_guard lock(s->state_mutex);
        outcome.status = s->status;
    };

    std::size_t steps = 0;
    while (true) {
        if (steps >= s->max_steps) {
            set_status(*s, SessionStatus::failed, "StepLimitExceeded");
            collect();
            throw Error(ErrorKind::StepLimitExceeded,
                        "session '" + session_id + "' exceeded " + std::to_string(s->max_steps) + " steps");
        }
        maybe_truncate(*s);
        const auto context = visible_messages(s->trajectory->events());
        DriverReply reply;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            reply = driver->next(context, core_tool_specs());
        } catch (const Error& e) {
            set_status(*s, SessionStatus::failed, std::string(to_string(e.kind())) + ": " + e.what());
            collect();
            throw;
        }
        const double measured = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++steps;
        ++outcome.driver_calls;
        {
            std::lock_guard lock(s->state_mutex);
            ++s->driver_calls;
        }
        auto& action = reply.action;
        if (action.raw_text.empty()) action.raw_text = canonical_text(action);
        if (action.token_estimate == 0) action.token_estimate = metrics::count_tokens(action.raw_text);
        s->trajectory->append(EventKind::assistant_action,
                              {{"action", to_json(action)},
                               {"raw_text", action.raw_text},
                               {"token_estimate", action.token_estimate},
                               {"usage", {{"prompt_tokens", reply.prompt_tokens}, {"completion_tokens", reply.completion_tokens}}},
                               {"llm_seconds", reply.latency_s.value_or(measured)}});

        if (action.kind == AssistantAction::Kind::final) {
            outcome.final_text = action.text;
            set_status(*s, SessionStatus::done);
            break;
        }
        if (action.kind == AssistantAction::Kind::ask_user) {
            outcome.final_text = action.text;
            set_status(*s, SessionStatus::awaiting_user);
            break;
        }

        bool failed_execution = false;
        std::string text;
        bool ok = true;
        try {
            if (action.name == "execute_code") {
                const auto code = require_string(action.args, "code");
                const auto result = execute(*s, code, "execute_code", {}, true);
                text = sandbox::render_visible(result, s->limits);
                failed_execution = !result.succeeded();
            } else {
                text = dispatch(*s, action);
            }
        } catch (const Error& e) {
            ok = false;
            text = "error: " + std::string(to_string(e.kind())) + ": " + e.what();
        }
        s->trajectory->append(EventKind::tool_result, {{"tool", action.name}, {"ok", ok && !failed_execution}, {"text", text}});

        if (failed_execution) {
            const auto list = todos_->get_todos(s->id);
            if (const auto* open = list.first_open()) {
                std::string note = "The execution failed. Current plan:\n" + todos::render_block(list) +
                                   "Resume at the first item that is not completed: " + open->content + "\n";
                s->trajectory->append(EventKind::recovery,
                                      {{"text", note}, {"next_item", open->content}, {"revision", list.revision}});
            }
        }
    }
    collect();
    return outcome;
}

void Orchestrator::maybe_truncate(Session& s) {
    const auto events = s.trajectory->events();
    auto context = visible_messages(events);
    if (visible_tokens(context) <= s.token_budget) return;

    std::string marker = "Earlier conversation was truncated to fit the context budget.\n";
    const auto list = todos_->get_todos(s.id);
    if (!list.items.empty()) {
        marker += todos::render_block(list);
        if (const auto* open = list.first_open()) marker += "Resume at the first item that is not completed: " + open->content + "\n";
    }

    // candidates: sequence numbers of droppable visible messages, oldest first
    std::uint64_t last_truncation = 0;
    for (const auto& e : events) {
        if (e.kind == EventKind::context_truncated) last_truncation = e.data.value("keep_from_seq", std::uint64_t{0});
    }
    std::vector<std::uint64_t> candidates;
    bool first_user = true;
    for (const auto& e : events) {
        const bool visible = e.kind == EventKind::assistant_action || e.kind == EventKind::tool_result ||
                             e.kind == EventKind::recovery || e.kind == EventKind::user_message;
        if (!visible) continue;
        if (e.kind == EventKind::user_message && first_user) {
            first_user = false;
            continue;
        }
        if (e.seq >= last_truncation) candidates.push_back(e.seq);
    }
    if (candidates.empty()) return;

    // past the last candidate means drop them all; the marker still carries the plan
    candidates.push_back(events.back().seq + 1);
    std::uint64_t keep_from = candidates.back();
    for (std::size_t i = 1; i + 1 < candidates.size(); ++i) {
        auto trial = events;
        trial.push_back(Event{events.size() + 1, EventKind::context_truncated, "",
                              {{"keep_from_seq", candidates[i]}, {"text", marker}}});
        if (visible_tokens(visible_messages(trial)) <= s.token_budget) {
            keep_from = candidates[i];
            break;
        }
    }
    s.trajectory->append(EventKind::context_truncated,
                         {{"keep_from_seq", keep_from}, {"text", marker}, {"tokens_before", visible_tokens(context)}});
}

sandbox::ExecutionResult Orchestrator::execute(Session& s, const std::string& code, const std::string& via,
                                               const std::vector<sandbox::SkillRef>& extra_skills, bool llm_visible) {
    sandbox::ExecutionRequest req;
    req.session_id = s.id;
    req.source = code;
    {
        std::lock_guard lock(s.state_mutex);
        req.loaded_tools.assign(s.loaded.begin(), s.loaded.end());
        req.loaded_skills = s.skills;
        req.limits = s.limits;
        req.clock = s.clock;
    }
    for (const auto& extra : extra_skills) {
        auto same = std::find_if(req.loaded_skills.begin(), req.loaded_skills.end(),
                                 [&](const auto& r) { return r.name == extra.name; });
        if (same != req.loaded_skills.end()) *same = extra;
        else req.loaded_skills.push_back(extra);
    }
    const auto result = sandbox_->execute(req);

    json data{{"execution", execution_summary(result)},
              {"code", code},
              {"via", via},
              {"llm_visible", llm_visible},
              {"visible", sandbox::render_visible(result, req.limits)}};
    if (!extra_skills.empty()) data["skill"] = {{"name", extra_skills[0].name}, {"version", extra_skills[0].version}};
    s.trajectory->append(EventKind::execution_result, data);
    for (const auto& call : result.bridge_calls) s.trajectory->append(EventKind::invocation, toolhost::to_json(call));
    {
        std::lock_guard lock(s.state_mutex);
        s.executions[result.execution_id] = result.succeeded();
        s.last_execution = result.execution_id;
        if (result.succeeded() && via == "execute_code") s.last_success_code = code;
    }
    return result;
}

std::string Orchestrator::dispatch(Session& s, const AssistantAction& action) {
    const auto& args = action.args;
    const auto& name = action.name;

    if (name == "search_functions") {
        return registry::render_hits(registry_.search_functions(require_string(args, "query"), optional_k(args)));
    }
    if (name == "load_functions") {
        if (!args.contains("names") || !args["names"].is_array()) {
            throw Error(ErrorKind::InvalidArgument, "'names' must be an array of tool names");
        }
        std::vector<std::string> names;
        for (const auto& n : args["names"]) {
            if (!n.is_string()) throw Error(ErrorKind::InvalidArgument, "'names' must be an array of tool names");
            names.push_back(n.get<std::string>());
        }
        registry::LoadedSet loaded;
        {
            std::lock_guard lock(s.state_mutex);
            loaded = s.loaded;
        }
        const auto schemas = registry_.load_functions(names, loaded);
        {
            std::lock_guard lock(s.state_mutex);
            s.loaded = std::move(loaded);
        }
        persist(s);
        return registry::render_schemas(schemas);
    }
    if (name == "write_todos") {
        if (!args.contains("todos")) throw Error(ErrorKind::InvalidArgument, "'todos' is required");
        const auto list = todos_->write_todos(s.id, todos::items_from_json(args["todos"]));
        s.trajectory->append(EventKind::todo_write, {{"revision", list.revision}, {"todos", todos::items_to_json(list.items)}});
        return todos::render_block(list);
    }
    if (name == "register_skill") {
        bool confirmed = args.contains("user_confirmed") && args["user_confirmed"].is_boolean() &&
                         args["user_confirmed"].get<bool>();
        if (!confirmed && !s.auto_register) {
            throw Error(ErrorKind::ValidationMissing, "registration needs the user's confirmation (user_confirmed=true)");
        }
        skillbank::SkillDraft draft;
        draft.name = require_string(args, "name");
        draft.description = args.value("description", "");
        {
            std::lock_guard lock(s.state_mutex);
            draft.source = args.contains("code") ? require_string(args, "code") : s.last_success_code;
            draft.validation = {s.id, s.last_execution, confirmed};
            for (const auto& tool : s.loaded) {
                if (draft.source.find(tool) != std::string::npos) draft.required_tools.push_back(tool);
            }
        }
        if (args.contains("entrypoint")) draft.entrypoint = require_string(args, "entrypoint");
        skillbank::RegistrationChecks checks;
        checks.execution_succeeded = [&s](const skillbank::ValidationRecord& v) {
            std::lock_guard lock(s.state_mutex);
            auto it = s.executions.find(v.execution_id);
            return v.session_id == s.id && it != s.executions.end() && it->second;
        };
        checks.tool_known = [this](const std::string& tool) { return registry_.contains(tool); };
        const auto skill = skills_.register_skill(std::move(draft), checks);
        s.trajectory->append(EventKind::skill_registered, {{"name", skill.name},
                                                           {"version", skill.version},
                                                           {"content_hash", skill.content_hash},
                                                           {"required_tools", skill.required_tools},
                                                           {"execution_id", skill.validation.execution_id}});
        return "registered " + skillbank::render_for_llm(skill);
    }
    if (name == "search_skills") {
        const auto hits = skills_.search_skills(require_string(args, "query"), optional_k(args));
        if (hits.empty()) return "no matching skills\n";
        std::string out;
        for (const auto& h : hits) out += "- " + h.name + "@v" + std::to_string(h.version) + ": " + h.description + "\n";
        return out;
    }
    if (name == "load_skill") {
        const auto skill = skills_.get_skill(require_string(args, "name"), optional_version(args));
        {
            std::lock_guard lock(s.state_mutex);
            auto same = std::find_if(s.skills.begin(), s.skills.end(), [&](const auto& r) { return r.name == skill.name; });
            if (same != s.skills.end()) *same = {skill.name, skill.version};
            else s.skills.push_back({skill.name, skill.version});
            s.loaded.insert(skill.required_tools.begin(), skill.required_tools.end());
        }
        persist(s);
        return skillbank::render_for_llm(skill);
    }
    if (name == "run_skill") {
        const auto skill = skills_.get_skill(require_string(args, "name"), optional_version(args));
        const json call_args = args.value("args", json::object());
        {
            std::lock_guard lock(s.state_mutex);
            s.loaded.insert(skill.required_tools.begin(), skill.required_tools.end());
        }
        const auto result = execute(s, sandbox::skill_call_stub(skill, call_args), "run_skill", {{skill.name, skill.version}}, true);
        persist(s);
        return sandbox::render_visible(result, s.limits);
    }
    throw Error(ErrorKind::UnknownTool, "'" + name + "' is not a core tool");
}

sandbox::ExecutionResult Orchestrator::run_skill(const std::string& session_id, const std::string& name,
                                                 std::optional<int> version, const json& args) {
    auto s = find(session_id);
    std::lock_guard run(s->run_mutex);
    const auto skill = skills_.get_skill(name, version);
    for (const auto& tool : skill.required_tools) {
        const auto schema = registry_.find(tool);
        if (!schema || schema->binding.empty()) {
            throw Error(ErrorKind::UnboundTool, "skill '" + name + "' needs tool '" + tool + "' which has no binding");
        }
    }
    {
        std::lock_guard lock(s->state_mutex);
        s->loaded.insert(skill.required_tools.begin(), skill.required_tools.end());
    }
    auto result = execute(*s, sandbox::skill_call_stub(skill, args), "run_skill", {{skill.name, skill.version}}, false);
    persist(*s);
    return result;
}

SessionInfo Orchestrator::session_info(const std::string& session_id) const {
    auto s = find(session_id);
    std::lock_guard lock(s->state_mutex);
    SessionInfo info;
    info.session_id = s->id;
    info.created_at = s->created_at;
    info.status = s->status;
    info.loaded_tools.assign(s->loaded.begin(), s->loaded.end());
    info.loaded_skills = s->skills;
    info.driver = s->driver ? s->driver->describe() : "";
    info.event_count = s->trajectory->size();
    info.driver_calls = s->driver_calls;
    return info;
}

std::vector<SessionInfo> Orchestrator::list_sessions() const {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, _] : sessions_) ids.push_back(id);
    }
    std::vector<SessionInfo> out;
    for (const auto& id : ids) out.push_back(session_info(id));
    return out;
}

std::shared_ptr<const Trajectory> Orchestrator::trajectory(const std::string& session_id) const {
    return find(session_id)->trajectory;
}

std::vector<Message> Orchestrator::visible_context(const std::string& session_id) const {
    return visible_messages(find(session_id)->trajectory->events());
}

todos::TodoList Orchestrator::write_todos(const std::string& session_id, std::vector<todos::TodoItem> items) {
    auto s = find(session_id);
    const auto list = todos_->write_todos(session_id, std::move(items));
    s->trajectory->append(EventKind::todo_write,
                          {{"revision", list.revision}, {"todos", todos::items_to_json(list.items)}, {"source", "api"}});
    return list;
}

} // namespace codemem::orchestrator
