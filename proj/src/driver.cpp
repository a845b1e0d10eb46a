#include "codemem/driver.hpp"

#include "codemem/error.hpp"
#include "codemem/tokens.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>

namespace codemem::orchestrator {

std::string_view to_string(AssistantAction::Kind kind) noexcept {
    switch (kind) {
    case AssistantAction::Kind::tool_call: return "tool_call";
    case AssistantAction::Kind::final: return "final";
    case AssistantAction::Kind::ask_user: return "ask_user";
    }
    return "final";
}

json to_json(const AssistantAction& a) {
    json j{{"kind", std::string(to_string(a.kind))}};
    if (a.kind == AssistantAction::Kind::tool_call) {
        j["name"] = a.name;
        j["args"] = a.args;
    } else {
        j["text"] = a.text;
    }
    return j;
}

AssistantAction action_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
        throw Error(ErrorKind::DriverError, "action needs a string 'kind'");
    }
    AssistantAction a;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "tool_call") {
        a.kind = AssistantAction::Kind::tool_call;
        if (!j.contains("name") || !j["name"].is_string()) throw Error(ErrorKind::DriverError, "tool_call needs 'name'");
        a.name = j["name"].get<std::string>();
        a.args = j.value("args", json::object());
        if (!a.args.is_object()) throw Error(ErrorKind::DriverError, "tool_call 'args' must be an object");
    } else if (kind == "final" || kind == "ask_user") {
        a.kind = kind == "final" ? AssistantAction::Kind::final : AssistantAction::Kind::ask_user;
        a.text = j.value("text", "");
    } else {
        throw Error(ErrorKind::DriverError, "unknown action kind '" + kind + "'");
    }
    a.raw_text = j.value("raw_text", "");
    return a;
}

std::string canonical_text(const AssistantAction& a) {
    if (!a.raw_text.empty()) return a.raw_text;
    if (a.kind == AssistantAction::Kind::tool_call) {
        return a.name + " " + a.args.dump(-1, ' ', false, json::error_handler_t::replace);
    }
    return a.text;
}

// ---------------------------------------------------------------------------

json to_json(const TraceStep& s) {
    json j{{"step", s.step}};
    j["context_hash"] = s.context_hash ? json(*s.context_hash) : json(nullptr);
    j["action"] = to_json(s.action);
    if (!s.action.raw_text.empty()) j["raw_text"] = s.action.raw_text;
    if (s.latency_s) j["latency_s"] = *s.latency_s;
    return j;
}

std::vector<TraceStep> load_trace(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::IoError, "cannot read trace " + file.string());
    std::vector<TraceStep> steps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            TraceStep s;
            s.step = j.value("step", steps.size() + 1);
            if (j.contains("context_hash") && j["context_hash"].is_string()) {
                s.context_hash = j["context_hash"].get<std::string>();
            }
            s.action = action_from_json(j.at("action"));
            if (j.contains("raw_text")) s.action.raw_text = j["raw_text"].get<std::string>();
            if (j.contains("latency_s")) s.latency_s = j["latency_s"].get<double>();
            steps.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return steps;
}

void write_trace(const std::filesystem::path& file, const std::vector<TraceStep>& steps) {
    std::string out;
    for (const auto& s : steps) out += to_json(s).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    write_file_atomic(file, out);
}

ReplayDriver::ReplayDriver(std::vector<TraceStep> steps, std::string label)
    : steps_(std::move(steps)), label_(std::move(label)) {}

std::shared_ptr<ReplayDriver> ReplayDriver::from_file(const std::filesystem::path& file) {
    return std::make_shared<ReplayDriver>(load_trace(file), "replay:" + file.string());
}

DriverReply ReplayDriver::next(const std::vector<Message>& context, const json&) {
    std::lock_guard lock(mutex_);
    if (pos_ >= steps_.size()) {
        throw Error(ErrorKind::TraceExhausted, "trace exhausted after " + std::to_string(steps_.size()) + " steps");
    }
    auto& step = steps_[pos_];
    const std::string observed = context_hash(context);
    if (recording_) {
        step.context_hash = observed;
    } else if (step.context_hash && *step.context_hash != observed) {
        throw Error(ErrorKind::TraceDivergence, "trace diverged at step " + std::to_string(step.step) +
                                                    ": context hash " + observed.substr(0, 12) + " != recorded " +
                                                    step.context_hash->substr(0, 12));
    }
    ++pos_;
    DriverReply reply;
    reply.action = step.action;
    reply.action.raw_text = canonical_text(step.action);
    reply.action.token_estimate = metrics::count_tokens(reply.action.raw_text);
    reply.prompt_tokens = visible_tokens(context);
    reply.completion_tokens = reply.action.token_estimate;
    reply.latency_s = step.latency_s.value_or(0.0);
    return reply;
}

std::vector<TraceStep> ReplayDriver::recorded() const {
    std::lock_guard lock(mutex_);
    return {steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(pos_)};
}

std::size_t ReplayDriver::position() const {
    std::lock_guard lock(mutex_);
    return pos_;
}

// ---------------------------------------------------------------------------

HttpDriver::HttpDriver(HttpDriverConfig config) : config_(std::move(config)) {
    if (config_.endpoint.rfind("http://", 0) != 0 && config_.endpoint.rfind("https://", 0) != 0) {
        throw Error(ErrorKind::BadConfig, "driver endpoint must be an http(s) URL: " + config_.endpoint);
    }
}

json HttpDriver::build_request(const HttpDriverConfig& config, const std::vector<Message>& context, const json& tools) {
    json messages = json::array();
    for (const auto& m : context) {
        // tool results travel as user turns; the action text already names the call
        const std::string role = m.role == "tool" ? "user" : m.role;
        const std::string content = m.role == "tool" ? "tool result:\n" + m.content : m.content;
        messages.push_back({{"role", role}, {"content", content}});
    }
    json all_tools = tools.is_array() ? tools : json::array();
    all_tools.push_back({{"type", "function"},
                         {"function",
                          {{"name", "ask_user"},
                           {"description", "Ask the user a question and wait for the reply."},
                           {"parameters",
                            {{"type", "object"},
                             {"properties", {{"question", {{"type", "string"}}}}},
                             {"required", {"question"}}}}}}});
    return {{"model", config.model}, {"messages", messages}, {"tools", all_tools}};
}

DriverReply HttpDriver::parse_response(const json& body) {
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
        throw Error(ErrorKind::DriverError, "response has no choices");
    }
    const auto& msg = body["choices"][0].value("message", json::object());
    DriverReply reply;
    auto& a = reply.action;
    const auto content = msg.contains("content") && msg["content"].is_string() ? msg["content"].get<std::string>() : "";
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
        const auto& fn = msg["tool_calls"][0].value("function", json::object());
        if (!fn.contains("name") || !fn["name"].is_string()) throw Error(ErrorKind::DriverError, "tool call without name");
        json args = json::object();
        if (fn.contains("arguments")) {
            try {
                args = fn["arguments"].is_string() ? json::parse(fn["arguments"].get<std::string>()) : fn["arguments"];
            } catch (const json::exception&) {
                throw Error(ErrorKind::DriverError, "tool call arguments are not JSON");
            }
        }
        if (!args.is_object()) throw Error(ErrorKind::DriverError, "tool call arguments must be an object");
        if (fn["name"] == "ask_user") {
            a.kind = AssistantAction::Kind::ask_user;
            a.text = args.value("question", content);
        } else {
            a.kind = AssistantAction::Kind::tool_call;
            a.name = fn["name"].get<std::string>();
            a.args = args;
        }
    } else {
        a.kind = AssistantAction::Kind::final;
        a.text = content;
    }
    a.raw_text = canonical_text(a);
    if (a.kind == AssistantAction::Kind::tool_call && !content.empty()) a.raw_text = content + "\n" + a.raw_text;
    a.token_estimate = metrics::count_tokens(a.raw_text);
    if (body.contains("usage") && body["usage"].is_object()) {
        reply.prompt_tokens = body["usage"].value("prompt_tokens", std::size_t{0});
        reply.completion_tokens = body["usage"].value("completion_tokens", std::size_t{0});
    } else {
        reply.completion_tokens = a.token_estimate;
    }
    return reply;
}

DriverReply HttpDriver::next(const std::vector<Message>& context, const json& tools) {
    const auto scheme_end = config_.endpoint.find("://");
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    const std::string base = config_.endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

    httplib::Client client(base);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto request = build_request(config_, context, tools);
    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, request.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!res) throw Error(ErrorKind::HttpError, "driver request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorKind::HttpError, "driver endpoint returned HTTP " + std::to_string(res->status));
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::exception&) {
        throw Error(ErrorKind::DriverError, "driver response is not JSON");
    }
    auto reply = parse_response(body);
    if (reply.prompt_tokens == 0) reply.prompt_tokens = visible_tokens(context);
    reply.latency_s = elapsed;
    return reply;
}

std::shared_ptr<Driver> make_driver(const std::string& spec) {
    if (spec.rfind("replay:", 0) == 0) return ReplayDriver::from_file(spec.substr(7));
    if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
        HttpDriverConfig cfg;
        cfg.endpoint = spec.rfind("http:http", 0) == 0 ? spec.substr(5) : spec;
        if (const char* key = std::getenv("CODEMEM_DRIVER_API_KEY")) cfg.api_key = key;
        return std::make_shared<HttpDriver>(cfg);
    }
    throw Error(ErrorKind::BadConfig, "driver spec must be replay:<trace> or http:<endpoint>, got '" + spec + "'");
}

} // namespace codemem::orchestrator
