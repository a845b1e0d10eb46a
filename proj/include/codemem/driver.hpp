#pragma once

#include "codemem/trajectory.hpp"
#include "codemem/util.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codemem::orchestrator {

struct AssistantAction {
    enum class Kind { tool_call, final, ask_user };

    Kind kind = Kind::final;
    std::string name; // tool_call only
    json args = json::object();
    std::string text; // final / ask_user
    std::string raw_text;
    std::size_t token_estimate = 0;
};

std::string_view to_string(AssistantAction::Kind kind) noexcept;
json to_json(const AssistantAction& a);
AssistantAction action_from_json(const json& j);

/// Text shown in history when the driver supplied none: `name {args}` or the message text.
std::string canonical_text(const AssistantAction& a);

struct DriverReply {
    AssistantAction action;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    /// Model time; replay traces may pin it, otherwise measured.
    std::optional<double> latency_s;
};

class Driver {
public:
    virtual ~Driver() = default;
    /// `tools` are chat-completions function specs for the callable tools.
    virtual DriverReply next(const std::vector<Message>& context, const json& tools) = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
};

/// One line of a trace file.
struct TraceStep {
    std::size_t step = 0;
    std::optional<std::string> context_hash;
    AssistantAction action;
    std::optional<double> latency_s;
};

std::vector<TraceStep> load_trace(const std::filesystem::path& file);
void write_trace(const std::filesystem::path& file, const std::vector<TraceStep>& steps);
json to_json(const TraceStep& s);

class ReplayDriver : public Driver {
public:
    explicit ReplayDriver(std::vector<TraceStep> steps, std::string label = "replay");
    static std::shared_ptr<ReplayDriver> from_file(const std::filesystem::path& file);

    DriverReply next(const std::vector<Message>& context, const json& tools) override;
    [[nodiscard]] std::string describe() const override { return label_; }

    /// Skip hash checks and record the observed hashes instead (used to seal traces).
    void set_recording(bool on) { recording_ = on; }
    [[nodiscard]] std::vector<TraceStep> recorded() const;
    [[nodiscard]] std::size_t position() const;

private:
    std::vector<TraceStep> steps_;
    std::string label_;
    bool recording_ = false;
    mutable std::mutex mutex_;
    std::size_t pos_ = 0;
};

struct HttpDriverConfig {
    std::string endpoint; // http://host:port/path
    std::string model = "codemem";
    std::string api_key;
    double timeout_s = 120.0;
};

/// Posts chat-completions requests: {model, messages, tools}. A tool call to
/// `ask_user` becomes an ask_user action, plain content becomes final.
class HttpDriver : public Driver {
public:
    explicit HttpDriver(HttpDriverConfig config);
    DriverReply next(const std::vector<Message>& context, const json& tools) override;
    [[nodiscard]] std::string describe() const override { return "http:" + config_.endpoint; }

    static json build_request(const HttpDriverConfig& config, const std::vector<Message>& context, const json& tools);
    static DriverReply parse_response(const json& body);

private:
    HttpDriverConfig config_;
};

/// "replay:<trace.jsonl>" or "http:<endpoint>".
std::shared_ptr<Driver> make_driver(const std::string& spec);

} // namespace codemem::orchestrator
