#pragma once

#include "codemem/tokens.hpp"
#include "codemem/trajectory.hpp"

#include <vector>

namespace codemem::metrics {

enum class CostMode { react, codemem };

std::string_view to_string(CostMode mode) noexcept;
CostMode cost_mode_from_string(std::string_view s);

struct ContextCost {
    CostMode mode = CostMode::codemem;
    std::size_t s_prompt = 0;
    /// react: sum of per-step history sizes
    std::size_t s_history = 0;
    std::vector<std::size_t> history_per_step;
    std::vector<std::size_t> s_tool_outputs;
    std::size_t s_code_block = 0;
    std::size_t s_final_result = 0;
    std::size_t n_steps = 0;
    std::size_t total = 0;
};

/// react:   total = sum over steps i of (s_prompt + history_i + tool_output_i),
///          where step i is the i-th driver call, tool_output_i the tool result
///          it produced and history_i everything the model said or was shown
///          in earlier steps (beyond the prompt).
/// codemem: total = s_prompt + s_code_block + s_final_result, where the code
///          blocks are the executed scripts and the results are the visible
///          execution outputs. s_prompt is 0 when no driver call happened.
ContextCost context_cost(const std::vector<orchestrator::Event>& events, CostMode mode);

struct PhaseTimings {
    double t_plan = 0;
    double t_write_code = 0;
    double t_debug = 0;
    double t_execute = 0;
    double t_task = 0;
};

/// Driver-call time is split by position relative to executions: calls before
/// the first execution plan, calls after a failed execution and up to the
/// next one debug, the rest write code. Execution wall time is t_execute.
PhaseTimings phase_timings(const std::vector<orchestrator::Event>& events);

json to_json(const ContextCost& c);
json to_json(const PhaseTimings& t);

/// {"react": ..., "codemem": ..., "phases": ..., "driver_calls": n}
json metrics_report(const std::vector<orchestrator::Event>& events);

} // namespace codemem::metrics
