#include "codemem/api.hpp"
#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "codemem/metrics.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

using namespace codemem;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print(const json& j) { std::cout << j.dump(2, ' ', false, json::error_handler_t::replace) << "\n"; }

struct Common {
    std::string config;
    std::string data_dir;

    api::Config load() const {
        auto c = api::load_config(config.empty() ? std::nullopt : std::optional<fs::path>(config));
        if (!data_dir.empty()) c.data_dir = data_dir;
        return c;
    }
};

void add_common(CLI::App* app, Common& common) {
    app->add_option("--config", common.config, "JSON config file (default: $CODEMEM_CONFIG)");
    app->add_option("--data-dir", common.data_dir, "Data directory (sessions, skills)");
}

json parse_json_arg(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " is not valid JSON");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"codemem agent runtime"};
    app.require_subcommand(1);
    Common common;

    // serve --------------------------------------------------------------
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    add_common(serve, common);
    std::string listen;
    serve->add_option("--listen", listen, "host:port");

    // run ----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run one task file");
    std::string task_file, driver, out_file;
    bool with_events = false;
    run->add_option("--task", task_file, "Task JSON")->required();
    run->add_option("--driver", driver, "replay:<trace or dir> | http:<endpoint>");
    run->add_option("--out", out_file, "Write the record JSON here");
    run->add_flag("--events", with_events, "Include the trajectory");

    // skills / skill -----------------------------------------------------
    auto* skills = app.add_subcommand("skills", "Inspect the skill bank");
    add_common(skills, common);
    skills->require_subcommand(1);
    auto* skills_list = skills->add_subcommand("list", "Latest version of every skill");
    auto* skills_show = skills->add_subcommand("show", "One skill with source");
    std::string skill_name;
    int skill_version = 0;
    skills_show->add_option("name", skill_name)->required();
    skills_show->add_option("--version", skill_version);
    auto* skills_install = skills->add_subcommand("install", "Add a skill file as a validated skill");
    std::string skill_file, skill_description;
    skills_install->add_option("file", skill_file)->required()->check(CLI::ExistingFile);
    skills_install->add_option("--name", skill_name)->required();
    skills_install->add_option("--description", skill_description);

    auto* skill = app.add_subcommand("skill", "Run a skill on the fast path");
    add_common(skill, common);
    skill->require_subcommand(1);
    auto* skill_run = skill->add_subcommand("run", "Run a skill with JSON arguments, no model involved");
    std::string skill_args = "{}", fixture_name = "case_study";
    skill_run->add_option("name", skill_name)->required();
    skill_run->add_option("--args", skill_args, "JSON object");
    skill_run->add_option("--version", skill_version);
    skill_run->add_option("--fixture", fixture_name, "Fixture name or file");

    // registry -----------------------------------------------------------
    auto* reg = app.add_subcommand("registry", "Search the tool registry");
    add_common(reg, common);
    reg->require_subcommand(1);
    std::vector<std::string> extra_manifests;
    reg->add_option("--manifest", extra_manifests, "Extra manifest files");
    auto* reg_search = reg->add_subcommand("search", "Keyword search");
    std::string query;
    std::size_t k = registry::kDefaultSearchK;
    reg_search->add_option("query", query)->required();
    reg_search->add_option("-k", k);
    auto* reg_list = reg->add_subcommand("list", "All tool names");

    // fixtures -----------------------------------------------------------
    auto* fixtures = app.add_subcommand("fixtures", "Shipped fixture worlds");
    add_common(fixtures, common);
    fixtures->require_subcommand(1);
    auto* fixtures_list = fixtures->add_subcommand("list", "Fixture names");
    auto* fixtures_show = fixtures->add_subcommand("show", "Print a fixture");
    fixtures_show->add_option("name", fixture_name)->required();

    // eval ---------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Run a task suite and aggregate");
    std::string suite_file, records_file, label = "codemem", judge_url, judge_verdicts;
    std::size_t repeats = 1, workers = 1;
    ev->add_option("--suite", suite_file, "Suite JSON");
    ev->add_option("--records", records_file, "Aggregate an existing record file instead of running");
    ev->add_option("--driver", driver, "replay:<dir> | http:<endpoint>");
    ev->add_option("--repeats", repeats);
    ev->add_option("--workers", workers);
    ev->add_option("--label", label);
    ev->add_option("--judge", judge_url, "Judge endpoint for judge-checked tasks");
    ev->add_option("--judge-verdicts", judge_verdicts, "Verdict file for judge-checked tasks");
    ev->add_option("--out", out_file, "Report JSON");

    // metrics ------------------------------------------------------------
    auto* met = app.add_subcommand("metrics", "Context cost and phase timings of a session");
    add_common(met, common);
    std::string session_id, events_file, mode;
    met->add_option("--session", session_id);
    met->add_option("--events", events_file, "events.jsonl instead of a stored session");
    met->add_option("--mode", mode)->check(CLI::IsMember({"react", "codemem"}));

    // trace --------------------------------------------------------------
    auto* trace = app.add_subcommand("trace", "Trace file utilities");
    trace->require_subcommand(1);
    auto* trace_seal = trace->add_subcommand("seal", "Record context hashes into a trace by replaying it");
    std::string trace_file;
    trace_seal->add_option("--task", task_file)->required()->check(CLI::ExistingFile);
    trace_seal->add_option("--trace", trace_file)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed()) {
            auto cfg = common.load();
            if (!listen.empty()) {
                auto doc = json{{"listen", listen}};
                const auto parsed = api::config_from_json(doc);
                cfg.host = parsed.host;
                cfg.port = parsed.port;
            }
            for (const auto& w : api::check_config(cfg)) std::cerr << "warning: " << w << "\n";
            api::Runtime rt(cfg);
            api::Server server(rt);
            server.start();
            std::cerr << "codemem " << api::kVersion << " listening on " << cfg.host << ":" << server.port() << "\n";
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
            server.stop();
            return 0;
        }
        if (run->parsed()) {
            const auto task = eval::load_task(task_file);
            eval::RunOptions opts;
            opts.driver_spec = driver;
            if (task.mode == "session" && driver.empty()) throw Error(ErrorKind::BadConfig, "--driver is required for this task");
            const auto rec = eval::run_task(task, opts);
            const auto j = eval::to_json(rec, with_events);
            if (!out_file.empty()) write_file_atomic(out_file, j.dump(2) + "\n");
            print(j);
            return rec.passed ? 0 : 1;
        }
        if (skills->parsed()) {
            const auto cfg = common.load();
            skillbank::SkillBank bank(cfg.data_dir / "skills");
            if (skills_list->parsed()) {
                json out = json::array();
                for (const auto& s : bank.list_latest()) out.push_back(skillbank::to_json(s, false));
                print(out);
            } else if (skills_show->parsed()) {
                print(skillbank::to_json(bank.get_skill(skill_name, skill_version ? std::optional<int>(skill_version) : std::nullopt)));
            } else if (skills_install->parsed()) {
                api::Runtime rt(cfg);
                const auto s = eval::install_skill(rt.skills(), rt.registry(), {skill_name, skill_file, skill_description});
                print(skillbank::to_json(s, false));
            }
            return 0;
        }
        if (skill_run->parsed()) {
            api::Runtime rt(common.load());
            orchestrator::SessionOptions so;
            so.fixture = rt.fixture(fixture_name);
            const auto sid = rt.orchestrator().create_session(std::move(so));
            const auto result = rt.orchestrator().run_skill(sid, skill_name,
                                                            skill_version ? std::optional<int>(skill_version) : std::nullopt,
                                                            parse_json_arg(skill_args, "--args"));
            std::cerr << result.stdout_tail;
            print({{"session_id", sid}, {"driver_calls", 0}, {"execution", sandbox::to_json(result)}});
            return result.succeeded() ? 0 : 1;
        }
        if (reg->parsed()) {
            auto cfg = common.load();
            for (const auto& m : extra_manifests) cfg.manifests.emplace_back(m);
            api::Runtime rt(cfg);
            if (reg_search->parsed()) std::cout << registry::render_hits(rt.registry().search_functions(query, k));
            if (reg_list->parsed()) {
                for (const auto& n : rt.registry().names()) std::cout << n << "\n";
            }
            return 0;
        }
        if (fixtures->parsed()) {
            const auto cfg = common.load();
            if (fixtures_list->parsed()) {
                api::Runtime rt(cfg);
                for (const auto& n : rt.fixture_names()) std::cout << n << "\n";
            } else {
                api::Runtime rt(cfg);
                print(toolhost::fixture_to_json(rt.fixture(fixture_name)));
            }
            return 0;
        }
        if (ev->parsed()) {
            std::vector<eval::TaskRecord> records;
            if (!records_file.empty()) {
                records = eval::load_records(records_file);
            } else {
                if (suite_file.empty()) throw Error(ErrorKind::BadConfig, "--suite or --records is required");
                eval::RunOptions opts;
                opts.driver_spec = driver;
                opts.repeats = repeats;
                opts.workers = workers;
                opts.label = label;
                opts.judge.endpoint = judge_url;
                if (!judge_verdicts.empty()) opts.judge.verdict_file = judge_verdicts;
                records = eval::run_suite(eval::load_suite(suite_file), opts);
            }
            const auto report = eval::suite_report(records);
            if (!out_file.empty()) write_file_atomic(out_file, report.dump(2) + "\n");
            print(report["rows"]);
            return 0;
        }
        if (met->parsed()) {
            std::vector<orchestrator::Event> events;
            if (!events_file.empty()) {
                events = orchestrator::Trajectory::load("file", events_file)->events();
            } else {
                if (session_id.empty()) throw Error(ErrorKind::BadConfig, "--session or --events is required");
                const auto cfg = common.load();
                const auto file = cfg.data_dir / "sessions" / session_id / "events.jsonl";
                if (!fs::exists(file)) throw Error(ErrorKind::UnknownSession, "no stored session '" + session_id + "'");
                events = orchestrator::Trajectory::load(session_id, file)->events();
            }
            if (mode.empty()) {
                print(metrics::metrics_report(events));
            } else {
                print({{"cost", metrics::to_json(metrics::context_cost(events, metrics::cost_mode_from_string(mode)))},
                       {"phases", metrics::to_json(metrics::phase_timings(events))}});
            }
            return 0;
        }
        if (trace_seal->parsed()) {
            const auto n = eval::seal_trace(trace_file, eval::load_task(task_file), {});
            std::cerr << "sealed " << n << " steps in " << trace_file << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
