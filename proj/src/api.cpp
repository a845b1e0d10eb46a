#include "codemem/api.hpp"

#include "codemem/error.hpp"
#include "codemem/metrics.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#ifndef CODEMEM_DEFAULT_ASSET_DIR
#define CODEMEM_DEFAULT_ASSET_DIR "assets"
#endif

namespace codemem::api {

namespace fs = std::filesystem;
using orchestrator::EventKind;

fs::path asset_dir() {
    if (const char* env = std::getenv("CODEMEM_ASSET_DIR"); env && *env) return env;
    return CODEMEM_DEFAULT_ASSET_DIR;
}

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorKind::BadConfig, msg); }

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void parse_listen(const std::string& listen, Config& c) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) bad_config("listen must be host:port, got '" + listen + "'");
    c.host = listen.substr(0, colon);
    try {
        c.port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
        bad_config("listen port is not a number: '" + listen + "'");
    }
    if (c.port < 0 || c.port > 65535) bad_config("listen port out of range: " + std::to_string(c.port));
}

} // namespace

Config config_from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) bad_config("config must be a JSON object");
    static const std::set<std::string> known{"data_dir",  "interpreter", "limits",        "driver",     "listen",
                                             "api_token", "manifests",   "fixtures_dir",  "max_steps",  "token_budget",
                                             "auto_register"};
    for (const auto& [key, _] : doc.items()) {
        if (!known.count(key)) bad_config("unknown config key '" + key + "'");
    }
    Config c;
    c.fixtures_dir = asset_dir() / "fixtures";
    try {
        if (doc.contains("data_dir")) c.data_dir = resolve(base_dir, doc["data_dir"].get<std::string>());
        if (doc.contains("interpreter")) c.interpreter = doc["interpreter"].get<std::string>();
        if (doc.contains("limits")) {
            const auto& l = doc["limits"];
            c.limits.wall_timeout_s = l.value("wall_timeout_s", c.limits.wall_timeout_s);
            c.limits.max_output_bytes = l.value("max_output_bytes", c.limits.max_output_bytes);
            c.limits.max_bridge_calls = l.value("max_bridge_calls", c.limits.max_bridge_calls);
        }
        if (doc.contains("driver")) c.driver = doc["driver"].get<std::string>();
        if (doc.contains("listen")) parse_listen(doc["listen"].get<std::string>(), c);
        if (doc.contains("api_token")) c.api_token = doc["api_token"].get<std::string>();
        for (const auto& m : doc.value("manifests", json::array())) c.manifests.push_back(resolve(base_dir, m.get<std::string>()));
        if (doc.contains("fixtures_dir")) c.fixtures_dir = resolve(base_dir, doc["fixtures_dir"].get<std::string>());
        c.max_steps = doc.value("max_steps", c.max_steps);
        c.token_budget = doc.value("token_budget", c.token_budget);
        c.auto_register = doc.value("auto_register", c.auto_register);
    } catch (const json::exception& e) {
        bad_config(std::string("config: ") + e.what());
    }
    if (c.limits.wall_timeout_s <= 0) bad_config("limits.wall_timeout_s must be positive");
    return c;
}

Config load_config(const std::optional<fs::path>& path) {
    std::optional<fs::path> file = path;
    if (!file) {
        if (const char* env = std::getenv("CODEMEM_CONFIG"); env && *env) file = fs::path(env);
    }
    Config c;
    if (file) {
        json doc;
        try {
            doc = read_json_file(*file);
        } catch (const Error& e) {
            bad_config(std::string("cannot load config: ") + e.what());
        }
        c = config_from_json(doc, file->parent_path());
    } else {
        c = config_from_json(json::object());
    }
    if (const char* token = std::getenv("CODEMEM_API_TOKEN"); token && *token) c.api_token = token;
    apply_default_manifests(c);
    return c;
}

void apply_default_manifests(Config& c) {
    if (!c.manifests.empty() || !fs::is_directory(asset_dir() / "manifests")) return;
    for (const auto& entry : fs::directory_iterator(asset_dir() / "manifests")) {
        if (entry.path().extension() == ".json") c.manifests.push_back(entry.path());
    }
    std::sort(c.manifests.begin(), c.manifests.end());
}

std::vector<std::string> check_config(const Config& config) {
    std::vector<std::string> warnings;
    std::error_code ec;
    fs::create_directories(config.data_dir, ec);
    if (ec) bad_config("data_dir " + config.data_dir.string() + " cannot be created: " + ec.message());
    const auto probe = config.data_dir / (".probe-" + random_hex(4));
    {
        std::ofstream out(probe);
        if (!out) bad_config("data_dir " + config.data_dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
    try {
        (void)sandbox::resolve_interpreter({config.interpreter});
    } catch (const Error& e) {
        warnings.push_back(e.what());
    }
    for (const auto& m : config.manifests) {
        if (!fs::exists(m)) bad_config("manifest not found: " + m.string());
    }
    if (config.api_token.empty()) warnings.push_back("CODEMEM_API_TOKEN is not set; the HTTP API accepts every request");
    return warnings;
}

// ---------------------------------------------------------------------------

Runtime::Runtime(Config config) : config_(std::move(config)) {
    for (const auto& m : config_.manifests) registry_.import_manifest(read_json_file(m));
    skills_ = std::make_unique<skillbank::SkillBank>(config_.data_dir / "skills");
    orchestrator::OrchestratorConfig oc;
    oc.data_dir = config_.data_dir;
    oc.max_steps = config_.max_steps;
    oc.token_budget = config_.token_budget;
    oc.auto_register = config_.auto_register;
    oc.limits = config_.limits;
    oc.sandbox.interpreter = {config_.interpreter};
    orchestrator_ = std::make_unique<orchestrator::Orchestrator>(oc, registry_, *skills_);
}

toolhost::FixtureWorld Runtime::fixture(const std::string& name_or_path) const {
    fs::path p(name_or_path);
    if (!fs::exists(p)) p = config_.fixtures_dir / (name_or_path + ".json");
    if (!fs::exists(p)) throw Error(ErrorKind::FixtureMissing, "no fixture '" + name_or_path + "'");
    return toolhost::load_fixture_file(p);
}

std::vector<std::string> Runtime::fixture_names() const {
    std::vector<std::string> out;
    if (!fs::is_directory(config_.fixtures_dir)) return out;
    for (const auto& entry : fs::directory_iterator(config_.fixtures_dir)) {
        if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------

int http_status(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::UnknownSession:
    case ErrorKind::UnknownSkill:
    case ErrorKind::UnknownVersion:
    case ErrorKind::UnknownTool:
    case ErrorKind::NotFound:
    case ErrorKind::FixtureMissing: return 404;
    case ErrorKind::DuplicateName:
    case ErrorKind::SessionBusy: return 409;
    case ErrorKind::ParseError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::EmptyRegistry:
    case ErrorKind::ValidationMissing:
    case ErrorKind::EmptySource:
    case ErrorKind::StatusRegression:
    case ErrorKind::MultipleInProgress:
    case ErrorKind::FilterParseError:
    case ErrorKind::BadConfig:
    case ErrorKind::SuiteParseError:
    case ErrorKind::EmptyTrajectory:
    case ErrorKind::NameCollision:
    case ErrorKind::UnboundTool: return 400;
    case ErrorKind::DriverError:
    case ErrorKind::HttpError:
    case ErrorKind::TraceExhausted:
    case ErrorKind::TraceDivergence: return 502;
    case ErrorKind::StepLimitExceeded: return 422;
    default: return 500;
    }
}

namespace {

json error_body(ErrorKind kind, const std::string& message) {
    return {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw Error(ErrorKind::ParseError, "request body must be a JSON object");
        return j;
    } catch (const json::exception&) {
        throw Error(ErrorKind::ParseError, "request body is not valid JSON");
    }
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_json(res, http_status(e.kind()), error_body(e.kind(), e.what()));
        } catch (const json::exception& e) {
            send_json(res, 400, error_body(ErrorKind::InvalidArgument, e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, error_body(ErrorKind::IoError, e.what()));
        }
    };
}

std::string sse_frame(const orchestrator::Event& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(orchestrator::to_string(e.kind)) +
           "\ndata: " + orchestrator::to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
}

} // namespace

struct Server::Impl {
    httplib::Server http;
    std::atomic<bool> stopping{false};
};

Server::Server(Runtime& runtime) : impl_(std::make_unique<Impl>()), runtime_(runtime) {
    auto& http = impl_->http;
    auto& rt = runtime_;
    auto* impl = impl_.get();

    http.new_task_queue = [] { return new httplib::ThreadPool(32); };
    // no SO_REUSEPORT: a second server on a live port must fail to bind
    http.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    http.set_pre_routing_handler([&rt](const httplib::Request& req, httplib::Response& res) {
        if (req.path == "/healthz" || rt.config().api_token.empty()) return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") != "Bearer " + rt.config().api_token) {
            send_json(res, 401, error_body(ErrorKind::InvalidArgument, "missing or wrong API token"));
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"version", kVersion}});
    });

    // registry -----------------------------------------------------------
    http.Get("/registry/search", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto q = req.get_param_value("q");
        std::size_t k = registry::kDefaultSearchK;
        if (req.has_param("k")) k = static_cast<std::size_t>(std::stoul(req.get_param_value("k")));
        const auto hits = rt.registry().search_functions(q, k);
        json out = json::array();
        for (const auto& h : hits) out.push_back({{"name", h.descriptor.name}, {"summary", h.descriptor.summary}, {"score", h.score}});
        send_json(res, 200, {{"hits", out}, {"text", registry::render_hits(hits)}});
    }));
    http.Get("/registry/tools", guarded([&rt](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"tools", rt.registry().names()}});
    }));
    http.Post("/registry/manifests", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto n = rt.registry().import_manifest_text(req.body);
        send_json(res, 200, {{"imported", n}, {"total", rt.registry().size()}});
    }));

    // skills -------------------------------------------------------------
    http.Get("/skills", guarded([&rt](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& s : rt.skills().list_latest()) out.push_back(skillbank::to_json(s, false));
        send_json(res, 200, {{"skills", out}});
    }));
    http.Get(R"(/skills/([^/]+))", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const std::string name = req.matches[1];
        std::optional<int> version;
        if (req.has_param("version")) version = std::stoi(req.get_param_value("version"));
        const auto skill = rt.skills().get_skill(name, version);
        json versions = json::array();
        for (const auto& v : rt.skills().versions(name)) versions.push_back(skillbank::to_json(v, false));
        auto out = skillbank::to_json(skill, true);
        out["versions"] = versions;
        send_json(res, 200, out);
    }));
    http.Post(R"(/skills/([^/]+)/run)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const std::string name = req.matches[1];
        const auto body = parse_body(req);
        auto& orch = rt.orchestrator();
        std::string sid = body.value("session_id", "");
        if (sid.empty()) {
            orchestrator::SessionOptions so;
            if (body.contains("fixture")) {
                so.fixture = body["fixture"].is_object() ? toolhost::fixture_from_json(body["fixture"])
                                                         : rt.fixture(body["fixture"].get<std::string>());
            }
            sid = orch.create_session(std::move(so));
        }
        std::optional<int> version;
        if (body.contains("version") && !body["version"].is_null()) version = body["version"].get<int>();
        const auto result = orch.run_skill(sid, name, version, body.value("args", json::object()));
        send_json(res, 200, {{"session_id", sid}, {"driver_calls", 0}, {"execution", sandbox::to_json(result)}});
    }));

    // fixtures -----------------------------------------------------------
    http.Get("/fixtures", guarded([&rt](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"fixtures", rt.fixture_names()}});
    }));

    // sessions -----------------------------------------------------------
    http.Post("/sessions", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        orchestrator::SessionOptions so;
        so.session_id = body.value("session_id", "");
        const auto driver = body.value("driver", rt.config().driver);
        if (!driver.empty()) so.driver = orchestrator::make_driver(driver);
        if (body.contains("fixture")) {
            so.fixture = body["fixture"].is_object() ? toolhost::fixture_from_json(body["fixture"])
                                                     : rt.fixture(body["fixture"].get<std::string>());
        }
        if (body.contains("max_steps")) so.max_steps = body["max_steps"].get<std::size_t>();
        if (body.contains("token_budget")) so.token_budget = body["token_budget"].get<std::size_t>();
        if (body.contains("auto_register")) so.auto_register = body["auto_register"].get<bool>();
        const auto sid = rt.orchestrator().create_session(std::move(so));
        send_json(res, 201, orchestrator::to_json(rt.orchestrator().session_info(sid)));
    }));
    http.Get("/sessions", guarded([&rt](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& s : rt.orchestrator().list_sessions()) out.push_back(orchestrator::to_json(s));
        send_json(res, 200, {{"sessions", out}});
    }));
    http.Get(R"(/sessions/([^/]+))", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, orchestrator::to_json(rt.orchestrator().session_info(req.matches[1])));
    }));
    http.Post(R"(/sessions/([^/]+)/messages)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body.contains("text") || !body["text"].is_string()) throw Error(ErrorKind::InvalidArgument, "'text' must be a string");
        std::shared_ptr<orchestrator::Driver> driver;
        if (body.contains("driver")) driver = orchestrator::make_driver(body["driver"].get<std::string>());
        const auto outcome = rt.orchestrator().run_session(req.matches[1], body["text"].get<std::string>(), driver);
        json events = json::array();
        for (const auto& e : outcome.events) events.push_back(orchestrator::to_json(e));
        send_json(res, 200, {{"status", std::string(orchestrator::to_string(outcome.status))},
                             {"final_text", outcome.final_text},
                             {"driver_calls", outcome.driver_calls},
                             {"events", events}});
    }));
    http.Get(R"(/sessions/([^/]+)/events)", guarded([&rt, impl](const httplib::Request& req, httplib::Response& res) {
        const std::string sid = req.matches[1];
        auto traj = rt.orchestrator().trajectory(sid);
        std::uint64_t cursor = 0;
        const auto last = req.get_header_value("Last-Event-ID");
        const auto after = !last.empty() ? last : req.get_param_value("after");
        if (!after.empty()) {
            try {
                cursor = std::stoull(after);
            } catch (const std::exception&) {
                throw Error(ErrorKind::InvalidArgument, "Last-Event-ID must be a sequence number");
            }
        }
        const bool follow = req.get_param_value("follow") != "0";
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [traj, cursor, follow, impl](std::size_t, httplib::DataSink& sink) mutable {
                auto batch = follow ? traj->wait_since(cursor, std::chrono::milliseconds(500)) : traj->since(cursor);
                for (const auto& e : batch) {
                    const auto frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size())) return false;
                    cursor = e.seq;
                }
                if (!follow || impl->stopping) {
                    sink.done();
                    return true;
                }
                if (batch.empty()) {
                    static const std::string ping = ": keepalive\n\n";
                    if (!sink.write(ping.data(), ping.size())) return false;
                }
                return sink.is_writable();
            });
    }));
    http.Get(R"(/sessions/([^/]+)/todos)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        (void)rt.orchestrator().session_info(req.matches[1]);
        send_json(res, 200, todos::to_json(rt.orchestrator().todo_store().get_todos(req.matches[1])));
    }));
    http.Put(R"(/sessions/([^/]+)/todos)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        if (!body.contains("todos")) throw Error(ErrorKind::InvalidArgument, "'todos' is required");
        const auto list = rt.orchestrator().write_todos(req.matches[1], todos::items_from_json(body["todos"]));
        send_json(res, 200, todos::to_json(list));
    }));
    http.Get(R"(/sessions/([^/]+)/fixture/drive)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        (void)rt.orchestrator().session_info(req.matches[1]);
        json files = json::array();
        for (const auto& [path, content] : rt.orchestrator().host().drive(req.matches[1])) {
            files.push_back({{"path", path}, {"size", content.size()}});
        }
        send_json(res, 200, {{"files", files}});
    }));
    http.Get(R"(/sessions/([^/]+)/context)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto messages = rt.orchestrator().visible_context(req.matches[1]);
        json out = json::array();
        for (const auto& m : messages) out.push_back({{"role", m.role}, {"content", m.content}});
        send_json(res, 200, {{"messages", out}, {"tokens", orchestrator::visible_tokens(messages)}});
    }));
    http.Get(R"(/sessions/([^/]+)/metrics)", guarded([&rt](const httplib::Request& req, httplib::Response& res) {
        const auto events = rt.orchestrator().trajectory(req.matches[1])->events();
        if (req.has_param("mode")) {
            const auto mode = metrics::cost_mode_from_string(req.get_param_value("mode"));
            send_json(res, 200, {{"cost", metrics::to_json(metrics::context_cost(events, mode))},
                                 {"phases", metrics::to_json(metrics::phase_timings(events))}});
        } else {
            send_json(res, 200, metrics::metrics_report(events));
        }
    }));
}

Server::~Server() { stop(); }

void Server::start() {
    auto& http = impl_->http;
    const auto& cfg = runtime_.config();
    if (cfg.port == 0) {
        port_ = http.bind_to_any_port(cfg.host);
        if (port_ < 0) throw Error(ErrorKind::PortInUse, "cannot bind " + cfg.host);
    } else {
        if (!http.bind_to_port(cfg.host, cfg.port)) {
            throw Error(ErrorKind::PortInUse, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
        }
        port_ = cfg.port;
    }
    thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

void Server::stop() {
    impl_->stopping = true;
    impl_->http.stop();
    if (thread_.joinable()) thread_.join();
}

void Server::wait() {
    if (thread_.joinable()) thread_.join();
}

} // namespace codemem::api
