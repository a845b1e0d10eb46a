// Python bindings. Structured values cross as JSON text; the codemem package
// decodes them into plain dicts and lists.

#include "codemem/api.hpp"
#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "codemem/metrics.hpp"
#include "codemem/tokens.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

namespace py = pybind11;
using namespace codemem;

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " is not valid JSON");
    }
}

std::vector<orchestrator::Event> events_from(const std::string& text) {
    const auto doc = parse(text, "events");
    if (!doc.is_array()) throw Error(ErrorKind::InvalidArgument, "events must be a JSON array");
    std::vector<orchestrator::Event> out;
    for (const auto& e : doc) out.push_back(orchestrator::event_from_json(e));
    return out;
}

std::vector<eval::TaskRecord> records_from(const std::string& text) {
    const auto doc = parse(text, "records");
    const auto& list = doc.is_object() ? doc.at("records") : doc;
    std::vector<eval::TaskRecord> out;
    for (const auto& r : list) out.push_back(eval::record_from_json(r));
    return out;
}

eval::RunOptions run_options(const std::string& driver, std::size_t repeats, std::size_t workers, const std::string& label) {
    eval::RunOptions o;
    o.driver_spec = driver;
    o.repeats = repeats;
    o.workers = workers;
    o.label = label;
    return o;
}

/// Owns a Runtime; one per Python object.
class PyRuntime {
public:
    explicit PyRuntime(const std::string& config_json) {
        const auto doc = parse(config_json, "config");
        auto cfg = api::config_from_json(doc);
        api::apply_default_manifests(cfg);
        api::check_config(cfg);
        rt_ = std::make_unique<api::Runtime>(cfg);
    }

    std::string install_skill(const std::string& name, const std::string& file, const std::string& description) {
        return dump(skillbank::to_json(eval::install_skill(rt_->skills(), rt_->registry(), {name, file, description}), false));
    }

    std::string skills() {
        json out = json::array();
        for (const auto& s : rt_->skills().list_latest()) out.push_back(skillbank::to_json(s, false));
        return dump(out);
    }

    std::string create_session(const std::string& driver, const std::string& fixture) {
        orchestrator::SessionOptions so;
        if (!driver.empty()) so.driver = orchestrator::make_driver(driver);
        if (!fixture.empty()) so.fixture = rt_->fixture(fixture);
        return rt_->orchestrator().create_session(std::move(so));
    }

    std::string send(const std::string& sid, const std::string& text) {
        const auto out = rt_->orchestrator().run_session(sid, text);
        json events = json::array();
        for (const auto& e : out.events) events.push_back(orchestrator::to_json(e));
        return dump({{"status", std::string(orchestrator::to_string(out.status))},
                     {"final_text", out.final_text},
                     {"driver_calls", out.driver_calls},
                     {"events", events}});
    }

    std::string run_skill(const std::string& name, const std::string& args_json, const std::string& fixture, std::optional<int> version) {
        const auto sid = create_session("", fixture);
        const auto r = rt_->orchestrator().run_skill(sid, name, version, parse(args_json, "args"));
        json files = json::array();
        for (const auto& [path, content] : rt_->orchestrator().host().drive(sid)) files.push_back({{"path", path}, {"size", content.size()}});
        return dump({{"session_id", sid}, {"execution", sandbox::to_json(r)}, {"drive", files}});
    }

    std::string events(const std::string& sid) {
        json out = json::array();
        for (const auto& e : rt_->orchestrator().trajectory(sid)->events()) out.push_back(orchestrator::to_json(e));
        return dump(out);
    }

    std::string search(const std::string& query, std::size_t k) {
        json out = json::array();
        for (const auto& h : rt_->registry().search_functions(query, k)) {
            out.push_back({{"name", h.descriptor.name}, {"summary", h.descriptor.summary}, {"score", h.score}});
        }
        return dump(out);
    }

private:
    std::unique_ptr<api::Runtime> rt_;
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "codemem runtime core";
    m.attr("__version__") = api::kVersion;

    static py::exception<Error> error_type(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object args = py::make_tuple(std::string(to_string(e.kind())), std::string(e.what()));
            PyErr_SetObject(error_type.ptr(), args.ptr());
        }
    });

    using release = py::call_guard<py::gil_scoped_release>;

    m.def("asset_dir", [] { return api::asset_dir().string(); });
    m.def("count_tokens", [](const std::string& text) { return metrics::count_tokens(text); });

    m.def("load_task", [](const std::string& path) {
        const auto t = eval::load_task(path);
        return dump({{"task_id", t.task_id}, {"prompt", t.prompt}, {"difficulty", t.difficulty}, {"mode", t.mode}});
    });
    m.def(
        "run_task",
        [](const std::string& path, const std::string& driver, bool with_events) {
            return dump(eval::to_json(eval::run_task(eval::load_task(path), run_options(driver, 1, 1, "codemem")), with_events));
        },
        py::arg("task"), py::arg("driver") = "", py::arg("with_events") = false, release());
    m.def(
        "run_suite",
        [](const std::string& path, const std::string& driver, std::size_t repeats, std::size_t workers, const std::string& label) {
            return dump(eval::suite_report(eval::run_suite(eval::load_suite(path), run_options(driver, repeats, workers, label))));
        },
        py::arg("suite"), py::arg("driver") = "", py::arg("repeats") = 1, py::arg("workers") = 1, py::arg("label") = "codemem", release());
    m.def(
        "aggregate",
        [](const std::string& records_json) {
            json rows = json::array();
            for (const auto& r : eval::aggregate_by_label(records_from(records_json))) rows.push_back(eval::to_json(r));
            return dump(rows);
        },
        py::arg("records"));

    m.def(
        "context_cost",
        [](const std::string& events_json, const std::string& mode) {
            return dump(metrics::to_json(metrics::context_cost(events_from(events_json), metrics::cost_mode_from_string(mode))));
        },
        py::arg("events"), py::arg("mode") = "codemem");
    m.def("phase_timings", [](const std::string& events_json) { return dump(metrics::to_json(metrics::phase_timings(events_from(events_json)))); });

    py::class_<PyRuntime>(m, "Runtime")
        .def(py::init<const std::string&>(), py::arg("config") = "{}")
        .def("install_skill", &PyRuntime::install_skill, py::arg("name"), py::arg("file"), py::arg("description") = "")
        .def("skills", &PyRuntime::skills)
        .def("create_session", &PyRuntime::create_session, py::arg("driver") = "", py::arg("fixture") = "")
        .def("send", &PyRuntime::send, release())
        .def("run_skill", &PyRuntime::run_skill, py::arg("name"), py::arg("args") = "{}", py::arg("fixture") = "case_study",
             py::arg("version") = std::nullopt, release())
        .def("events", &PyRuntime::events)
        .def("search", &PyRuntime::search, py::arg("query"), py::arg("k") = registry::kDefaultSearchK);
}
