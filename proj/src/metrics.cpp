#include "codemem/metrics.hpp"

#include "codemem/error.hpp"

namespace codemem::metrics {

using orchestrator::Event;
using orchestrator::EventKind;

std::string_view to_string(CostMode mode) noexcept { return mode == CostMode::react ? "react" : "codemem"; }

CostMode cost_mode_from_string(std::string_view s) {
    if (s == "react") return CostMode::react;
    if (s == "codemem") return CostMode::codemem;
    throw Error(ErrorKind::InvalidArgument, "mode must be react or codemem, got '" + std::string(s) + "'");
}

namespace {

std::size_t prompt_tokens(const std::vector<Event>& events) {
    std::size_t n = 0;
    bool user_seen = false;
    for (const auto& e : events) {
        if (e.kind == EventKind::session_created) n += count_tokens(e.data.value("system_prompt", ""));
        if (e.kind == EventKind::user_message && !user_seen) {
            n += count_tokens(e.data.value("text", ""));
            user_seen = true;
        }
    }
    return n;
}

} // namespace

ContextCost context_cost(const std::vector<Event>& events, CostMode mode) {
    if (events.empty()) throw Error(ErrorKind::EmptyTrajectory, "trajectory has no events");
    ContextCost c;
    c.mode = mode;

    std::size_t driver_calls = 0;
    for (const auto& e : events) driver_calls += e.kind == EventKind::assistant_action ? 1 : 0;

    if (mode == CostMode::react) {
        c.s_prompt = prompt_tokens(events);
        std::size_t history = 0;   // everything visible so far beyond the prompt
        bool first_user = true;
        bool in_step = false;
        for (const auto& e : events) {
            switch (e.kind) {
            case EventKind::assistant_action:
                c.history_per_step.push_back(history);
                c.s_tool_outputs.push_back(0);
                history += count_tokens(e.data.value("raw_text", ""));
                in_step = true;
                break;
            case EventKind::tool_result: {
                const auto t = count_tokens(e.data.value("text", ""));
                if (in_step) c.s_tool_outputs.back() += t;
                history += t;
                break;
            }
            case EventKind::user_message:
                if (first_user) {
                    first_user = false;
                } else {
                    history += count_tokens(e.data.value("text", ""));
                }
                break;
            case EventKind::recovery:
                history += count_tokens(e.data.value("text", ""));
                break;
            default: break;
            }
        }
        c.n_steps = c.history_per_step.size();
        for (std::size_t i = 0; i < c.n_steps; ++i) {
            c.s_history += c.history_per_step[i];
            c.total += c.s_prompt + c.history_per_step[i] + c.s_tool_outputs[i];
        }
        return c;
    }

    c.s_prompt = driver_calls > 0 ? prompt_tokens(events) : 0;
    for (const auto& e : events) {
        if (e.kind != EventKind::execution_result || !e.data.value("llm_visible", true)) continue;
        if (e.data.value("via", "") == "execute_code") c.s_code_block += count_tokens(e.data.value("code", ""));
        c.s_final_result += count_tokens(e.data.value("visible", ""));
    }
    c.n_steps = driver_calls;
    c.total = c.s_prompt + c.s_code_block + c.s_final_result;
    return c;
}

PhaseTimings phase_timings(const std::vector<Event>& events) {
    if (events.empty()) throw Error(ErrorKind::EmptyTrajectory, "trajectory has no events");
    enum class Phase { plan, write_code, debug };
    PhaseTimings t;
    Phase phase = Phase::plan;
    for (const auto& e : events) {
        if (e.kind == EventKind::assistant_action) {
            const double d = e.data.value("llm_seconds", 0.0);
            const auto& action = e.data.value("action", json::object());
            const bool writes_code = action.value("kind", "") == "tool_call" && action.value("name", "") == "execute_code";
            Phase p = phase;
            if (p == Phase::plan && writes_code) p = Phase::write_code;
            switch (p) {
            case Phase::plan: t.t_plan += d; break;
            case Phase::write_code: t.t_write_code += d; break;
            case Phase::debug: t.t_debug += d; break;
            }
        } else if (e.kind == EventKind::execution_result) {
            const auto& ex = e.data.value("execution", json::object());
            t.t_execute += ex.value("wall_time", 0.0);
            phase = ex.value("exit_status", "") == "success" ? Phase::write_code : Phase::debug;
        }
    }
    t.t_task = t.t_plan + t.t_write_code + t.t_debug + t.t_execute;
    return t;
}

json to_json(const ContextCost& c) {
    return {{"mode", std::string(to_string(c.mode))},
            {"s_prompt", c.s_prompt},
            {"s_history", c.s_history},
            {"history_per_step", c.history_per_step},
            {"s_tool_outputs", c.s_tool_outputs},
            {"s_code_block", c.s_code_block},
            {"s_final_result", c.s_final_result},
            {"n_steps", c.n_steps},
            {"total", c.total}};
}

json to_json(const PhaseTimings& t) {
    return {{"t_plan", t.t_plan},   {"t_write_code", t.t_write_code}, {"t_debug", t.t_debug},
            {"t_execute", t.t_execute}, {"t_task", t.t_task}};
}

json metrics_report(const std::vector<Event>& events) {
    std::size_t calls = 0;
    for (const auto& e : events) calls += e.kind == EventKind::assistant_action ? 1 : 0;
    return {{"react", to_json(context_cost(events, CostMode::react))},
            {"codemem", to_json(context_cost(events, CostMode::codemem))},
            {"phases", to_json(phase_timings(events))},
            {"driver_calls", calls}};
}

} // namespace codemem::metrics
