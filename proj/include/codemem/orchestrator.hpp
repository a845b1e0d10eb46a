#pragma once

#include "codemem/driver.hpp"
#include "codemem/registry.hpp"
#include "codemem/sandbox.hpp"
#include "codemem/skillbank.hpp"
#include "codemem/todos.hpp"
#include "codemem/toolhost.hpp"
#include "codemem/trajectory.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codemem::orchestrator {

/// The shipped system prompt and its version tag.
std::string_view system_prompt_text();
std::string_view system_prompt_version();

/// Chat-completions function specs for the core and skill tools.
json core_tool_specs();

enum class SessionStatus { active, awaiting_user, done, failed };
std::string_view to_string(SessionStatus s) noexcept;
SessionStatus session_status_from_string(std::string_view s);

struct OrchestratorConfig {
    /// Sessions are persisted under <data_dir>/sessions/<id>/ when set.
    std::optional<std::filesystem::path> data_dir;
    std::size_t max_steps = 40;
    std::size_t token_budget = 200000;
    bool auto_register = false;
    sandbox::Limits limits;
    sandbox::SandboxConfig sandbox;
};

struct SessionOptions {
    std::string session_id; // generated when empty
    std::optional<toolhost::FixtureWorld> fixture;
    std::shared_ptr<Driver> driver;
    std::optional<std::size_t> max_steps;
    std::optional<std::size_t> token_budget;
    std::optional<bool> auto_register;
    std::optional<sandbox::Limits> limits;
};

struct SessionInfo {
    std::string session_id;
    std::string created_at;
    SessionStatus status = SessionStatus::active;
    std::vector<std::string> loaded_tools;
    std::vector<sandbox::SkillRef> loaded_skills;
    std::string driver;
    std::size_t event_count = 0;
    std::size_t driver_calls = 0;
};

json to_json(const SessionInfo& s);

struct RunOutcome {
    SessionStatus status = SessionStatus::active;
    std::vector<Event> events;
    std::size_t driver_calls = 0;
    std::string final_text;
};

class Orchestrator {
public:
    Orchestrator(OrchestratorConfig config, registry::Registry& registry, skillbank::SkillBank& skills);
    ~Orchestrator();
    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    std::string create_session(SessionOptions options = {});
    [[nodiscard]] bool has_session(const std::string& session_id) const;

    /// Feeds one user message and drives the model until it answers, asks the
    /// user, or the step limit is hit. Throws StepLimitExceeded (session
    /// failed) and driver errors; the trajectory keeps everything up to the error.
    RunOutcome run_session(const std::string& session_id, const std::string& user_message,
                           std::shared_ptr<Driver> driver = nullptr);

    /// The reuse fast path: no driver involvement.
    sandbox::ExecutionResult run_skill(const std::string& session_id, const std::string& name,
                                       std::optional<int> version, const json& args);

    void load_fixture(const std::string& session_id, toolhost::FixtureWorld world);
    void set_driver(const std::string& session_id, std::shared_ptr<Driver> driver);

    [[nodiscard]] SessionInfo session_info(const std::string& session_id) const;
    [[nodiscard]] std::vector<SessionInfo> list_sessions() const;
    [[nodiscard]] std::shared_ptr<const Trajectory> trajectory(const std::string& session_id) const;
    [[nodiscard]] std::vector<Message> visible_context(const std::string& session_id) const;

    /// Applies a todo write from outside the agent loop (the console).
    todos::TodoList write_todos(const std::string& session_id, std::vector<todos::TodoItem> items);

    [[nodiscard]] const registry::Registry& registry() const { return registry_; }
    [[nodiscard]] registry::Registry& registry() { return registry_; }
    [[nodiscard]] skillbank::SkillBank& skills() { return skills_; }
    [[nodiscard]] todos::TodoStore& todo_store() { return *todos_; }
    [[nodiscard]] toolhost::ToolHost& host() { return *host_; }
    [[nodiscard]] sandbox::Sandbox& sandbox() { return *sandbox_; }
    [[nodiscard]] const OrchestratorConfig& config() const { return config_; }

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& session_id) const;
    void persist(const Session& s) const;
    void load_persisted();
    void set_status(Session& s, SessionStatus status, const std::string& reason = {});
    std::string dispatch(Session& s, const AssistantAction& action);
    sandbox::ExecutionResult execute(Session& s, const std::string& code, const std::string& via,
                                     const std::vector<sandbox::SkillRef>& extra_skills, bool llm_visible);
    void maybe_truncate(Session& s);

    OrchestratorConfig config_;
    registry::Registry& registry_;
    skillbank::SkillBank& skills_;
    std::unique_ptr<todos::TodoStore> todos_;
    std::unique_ptr<toolhost::ToolHost> host_;
    std::unique_ptr<sandbox::Sandbox> sandbox_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

} // namespace codemem::orchestrator
