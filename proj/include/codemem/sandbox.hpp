#pragma once

#include "codemem/registry.hpp"
#include "codemem/skillbank.hpp"
#include "codemem/toolhost.hpp"
#include "codemem/util.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codemem::sandbox {

struct Limits {
    double wall_timeout_s = 120.0;
    std::size_t max_output_bytes = 65536;
    std::size_t max_bridge_calls = 1000;
};

enum class ExitStatus { success, nonzero, timeout, killed };

std::string_view to_string(ExitStatus status) noexcept;
ExitStatus exit_status_from_string(std::string_view name);

struct SkillRef {
    std::string name;
    int version = 0;
};

struct ExecutionRequest {
    std::string session_id;
    std::string execution_id; // generated when empty
    std::string source;
    std::vector<std::string> loaded_tools;
    std::vector<SkillRef> loaded_skills;
    Limits limits;
    /// Pinned wall clock handed to the script as CODEMEM_CLOCK.
    std::optional<std::string> clock;
};

struct ExecutionResult {
    std::string execution_id;
    std::string session_id;
    ExitStatus exit_status = ExitStatus::success;
    int exit_code = 0;
    std::string stdout_tail;
    std::size_t truncated_bytes = 0;
    std::vector<toolhost::InvocationRecord> bridge_calls;
    double wall_time_s = 0.0;
    std::string started_at;
    /// Set when the bridge saw a frame with a bad token and the script was killed.
    bool auth_failure = false;

    [[nodiscard]] bool succeeded() const { return exit_status == ExitStatus::success; }
};

json to_json(const ExecutionResult& result);
ExecutionResult execution_from_json(const json& j);

/// What the model sees of an execution: the output tail and a one-line exit
/// summary. Contains nothing that varies between identical runs.
std::string render_visible(const ExecutionResult& result, const Limits& limits);

/// Keeps the last `max_bytes` of `text` (cut on a UTF-8 boundary) behind a
/// "[truncated N bytes]" marker. Returns the number of bytes dropped.
std::size_t truncate_tail(std::string& text, std::size_t max_bytes);

/// Python source placed before the script body: the bridge client, one
/// coroutine stub per loaded tool and the full source of each loaded skill.
/// Byte-identical for identical inputs.
std::string generate_preamble(const std::vector<registry::ToolSchema>& tools,
                              const std::vector<skillbank::Skill>& skills);

/// Script body that calls a skill entrypoint with JSON arguments and awaits
/// it when it is a coroutine.
std::string skill_call_stub(const skillbank::Skill& skill, const json& args);

struct SandboxConfig {
    /// argv prefix; the script path is appended.
    std::vector<std::string> interpreter{"python3"};
    std::filesystem::path work_root = std::filesystem::temp_directory_path();
};

/// Resolves argv[0] against PATH. Throws InterpreterNotFound.
std::filesystem::path resolve_interpreter(const std::vector<std::string>& argv);

class Sandbox {
public:
    Sandbox(SandboxConfig config, const registry::Registry& registry, const skillbank::SkillBank& skills,
            toolhost::ToolHost& host);

    /// Runs one script to completion. Script failures, timeouts and bridge
    /// authentication failures are reported in the result; setup problems throw.
    /// Executions for the same session are serialized.
    ExecutionResult execute(const ExecutionRequest& request);

    [[nodiscard]] const SandboxConfig& config() const { return config_; }

private:
    std::shared_ptr<std::mutex> session_lock(const std::string& session_id);

    SandboxConfig config_;
    const registry::Registry& registry_;
    const skillbank::SkillBank& skills_;
    toolhost::ToolHost& host_;
    std::mutex locks_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;
};

} // namespace codemem::sandbox
