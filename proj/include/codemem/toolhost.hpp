#pragma once

#include "codemem/registry.hpp"
#include "codemem/util.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace codemem::toolhost {

// ---------------------------------------------------------------------------
// Fixture world: the mock Outlook / OneDrive / calendar / sheets state one
// session works against.

struct FixtureAttachment {
    std::string filename;
    std::string content;
    /// Declared company, or the literal "codeword".
    std::string company;
    /// Always carries "company"; carries "real_company" only for codeword senders.
    json metadata = json::object();
};

struct FixtureEmail {
    std::string id;
    std::string from_address;
    TimePoint received_at;
    std::string subject;
    std::vector<FixtureAttachment> attachments;

    [[nodiscard]] bool has_attachments() const { return !attachments.empty(); }
};

struct FixtureWorld {
    std::string name;
    /// Clock exposed to sandbox scripts so date windows are reproducible.
    std::optional<TimePoint> now;
    std::vector<FixtureEmail> emails;
    std::map<std::string, std::string> drive;
    std::vector<json> outbox;
    std::map<std::string, std::vector<json>> sheets;
    std::vector<json> calendar;
};

/// Deterministic filler used when a scenario gives an attachment `size`
/// instead of inline `content`. Distinct filenames give distinct bytes.
std::string synthesize_content(const std::string& filename, std::size_t size);

FixtureWorld fixture_from_json(const json& doc);
json fixture_to_json(const FixtureWorld& world);
FixtureWorld load_fixture_file(const std::filesystem::path& path);

/// Rewrites every attachment body to `size` synthesized bytes.
void resize_payloads(FixtureWorld& world, std::size_t size);

json email_summary(const FixtureEmail& email);

// ---------------------------------------------------------------------------
// Filter grammar: conjunctions (joined by `and`) of
//   receivedDateTime >= <ISO-8601>
//   hasAttachments eq true|false

struct EmailFilter {
    std::vector<TimePoint> received_at_least;
    std::vector<bool> has_attachments;

    [[nodiscard]] bool matches(const FixtureEmail& email) const;
};

EmailFilter parse_filter(std::string_view text);

// ---------------------------------------------------------------------------

struct InvocationRecord {
    std::string invocation_id;
    std::string execution_id;
    std::string tool;
    json args;
    bool ok = false;
    json result;
    std::string error_kind;
    std::string error_message;
    std::size_t sequence_index = 0;
    std::string timestamp;
};

json to_json(const InvocationRecord& r);
InvocationRecord invocation_from_json(const json& j);

class InvocationLog {
public:
    InvocationRecord append(InvocationRecord record);
    [[nodiscard]] std::vector<InvocationRecord> for_execution(const std::string& execution_id) const;
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<InvocationRecord> records_;
    std::map<std::string, std::size_t> next_index_;
};

struct InvocationContext {
    std::string session_id;
    std::string execution_id;
    std::set<std::string> loaded_tools;
};

/// Checks `args` against the parameter subset grammar (required keys, types).
void validate_args(const registry::ToolSchema& schema, const json& args);

/// POSTs args as JSON to the bound URL and returns the response body.
json invoke_http_binding(const json& binding, const json& args);

class ToolHost {
public:
    explicit ToolHost(const registry::Registry& registry);

    void load_fixture(const std::string& session_id, FixtureWorld world);
    [[nodiscard]] bool has_fixture(const std::string& session_id) const;
    [[nodiscard]] FixtureWorld fixture(const std::string& session_id) const;
    [[nodiscard]] std::map<std::string, std::string> drive(const std::string& session_id) const;

    /// Dispatches to the bound implementation. Always appends exactly one
    /// InvocationRecord, then rethrows on failure.
    json invoke(const std::string& tool, const json& args, const InvocationContext& ctx);

    /// Records a frame the bridge refused before dispatch (limits, duplicate ids).
    void record_rejection(const std::string& tool, const json& args, const InvocationContext& ctx,
                          std::string_view kind, const std::string& message);

    [[nodiscard]] const InvocationLog& log() const { return log_; }

private:
    struct SessionFixture {
        std::mutex mutex;
        FixtureWorld world;
    };

    json dispatch_fixture(const std::string& op, const json& args, const std::string& session_id);
    std::shared_ptr<SessionFixture> session_fixture(const std::string& session_id) const;

    const registry::Registry& registry_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<SessionFixture>> fixtures_;
    InvocationLog log_;
};

} // namespace codemem::toolhost
