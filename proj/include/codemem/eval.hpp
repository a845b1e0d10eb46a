#pragma once

#include "codemem/orchestrator.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace codemem::eval {

struct SeedSkill {
    std::string name;
    std::filesystem::path file;
    std::string description;
};

struct TaskSpec {
    std::string task_id;
    std::string prompt;
    int difficulty = 1;
    std::filesystem::path fixture;
    std::vector<std::filesystem::path> manifests;
    std::vector<SeedSkill> skills;
    /// Answers handed back, in order, whenever the agent asks the user something.
    std::vector<std::string> replies;
    /// "session" drives the model; "skill" takes the driver-free fast path.
    std::string mode = "session";
    std::string skill;
    json skill_args = json::object();
    /// Trace file name inside a replay directory; defaults to <task_id>.jsonl.
    std::string trace;
    std::optional<std::size_t> payload_size;
    std::optional<std::size_t> token_budget;
    std::optional<std::size_t> max_steps;
    std::optional<bool> auto_register;
    /// {"type":"rule","rules":[{"id":..,"params":{..}}]} or {"type":"judge","rubric":".."}
    json checker;
};

/// Relative paths in `doc` resolve against `base_dir`.
TaskSpec task_from_json(const json& doc, const std::filesystem::path& base_dir);
TaskSpec load_task(const std::filesystem::path& file);

/// `{"tasks":[<task object> | "<task file>"]}`. Throws SuiteParseError.
std::vector<TaskSpec> load_suite(const std::filesystem::path& file);

struct JudgeConfig {
    std::string endpoint;                       // POST serialized trajectory, expects {"passed":bool}
    std::optional<std::filesystem::path> verdict_file; // {"<task_id>": bool | {"passed":bool,"reason":..}}
};

struct RunOptions {
    /// replay:<dir or trace file> | http:<endpoint>
    std::string driver_spec;
    std::size_t repeats = 1;
    std::size_t workers = 1;
    std::string label = "codemem";
    JudgeConfig judge;
    sandbox::SandboxConfig sandbox;
    sandbox::Limits limits;
};

struct TaskRecord {
    std::string task_id;
    std::string label;
    std::size_t run_index = 0;
    bool passed = false;
    std::size_t assistant_calls = 0;
    double wall_time = 0;
    std::size_t total_tokens = 0;
    std::string status;
    std::string final_text;
    std::vector<std::string> failures;
    std::vector<orchestrator::Event> events;
    std::map<std::string, std::string> drive;
    std::vector<todos::TodoItem> todos;
};

json to_json(const TaskRecord& r, bool with_events = false);
TaskRecord record_from_json(const json& j);

/// Everything a checker may look at once a run has ended.
struct CheckContext {
    const TaskSpec& task;
    const toolhost::FixtureWorld& initial;
    const toolhost::FixtureWorld& final_world;
    const std::vector<orchestrator::Event>& events;
    const std::vector<todos::TodoItem>& todos;
    const skillbank::SkillBank& skills;
    const std::string& status;
    const std::string& final_text;
};

/// Failure messages; empty means the rule holds. Unknown ids throw SuiteParseError.
std::vector<std::string> apply_rule(const json& rule, const CheckContext& ctx);
std::vector<std::string> rule_ids();

/// What a judge sees: tool selections with arguments, executed code and outputs.
json serialize_for_judge(const TaskSpec& task, const std::vector<orchestrator::Event>& events,
                         const std::string& final_text, const std::string& status);

/// Adds a shipped skill file to a bank. Shipped skills count as validated.
skillbank::Skill install_skill(skillbank::SkillBank& bank, const registry::Registry& registry, const SeedSkill& seed);

std::shared_ptr<orchestrator::Driver> driver_for_task(const std::string& driver_spec, const TaskSpec& task);

/// One fresh run: new registry, bank and session. Driver errors fail the
/// record instead of propagating.
TaskRecord run_task(const TaskSpec& task, const RunOptions& options, std::size_t run_index = 0,
                    std::shared_ptr<orchestrator::Driver> driver = nullptr);

/// Records ordered by (task, run).
std::vector<TaskRecord> run_suite(const std::vector<TaskSpec>& tasks, const RunOptions& options);

struct SummaryRow {
    std::string label;
    double correctness_min = 0;
    double avg_calls = 0;
    double p50_latency = 0;
    std::size_t total_tokens = 0;
    std::size_t runs = 0;
    std::size_t tasks = 0;
};

json to_json(const SummaryRow& row);

/// Every (task, run) pair must appear exactly once, else IncompleteGrid.
SummaryRow aggregate(const std::string& label, const std::vector<TaskRecord>& records);
std::vector<SummaryRow> aggregate_by_label(const std::vector<TaskRecord>& records);

/// {"label": optional default, "records": [...]}
std::vector<TaskRecord> load_records(const std::filesystem::path& file);

json suite_report(const std::vector<TaskRecord>& records);

/// Replays `trace_file` against the task while recording the observed
/// context hashes, then rewrites the file with them. Returns the step count.
std::size_t seal_trace(const std::filesystem::path& trace_file, const TaskSpec& task, const RunOptions& options);

} // namespace codemem::eval
