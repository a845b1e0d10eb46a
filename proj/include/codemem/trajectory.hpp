#pragma once

#include "codemem/util.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codemem::orchestrator {

enum class EventKind {
    session_created,
    user_message,
    assistant_action,
    tool_result,
    execution_result,
    invocation,
    todo_write,
    skill_registered,
    recovery,
    context_truncated,
    status,
};

std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from_string(std::string_view name);

struct Event {
    std::uint64_t seq = 0;
    EventKind kind = EventKind::status;
    std::string ts;
    json data;
};

json to_json(const Event& e);
Event event_from_json(const json& j);

/// Append-only, sequence-numbered event log. Optionally mirrored to a JSONL file.
class Trajectory {
public:
    explicit Trajectory(std::string session_id, std::optional<std::filesystem::path> file = std::nullopt);

    /// Rebuilds from a JSONL file written by a previous process.
    static std::shared_ptr<Trajectory> load(std::string session_id, const std::filesystem::path& file);

    Event append(EventKind kind, json data);

    [[nodiscard]] std::vector<Event> events() const;
    /// Events with seq > after.
    [[nodiscard]] std::vector<Event> since(std::uint64_t after) const;
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] const std::string& session_id() const { return session_id_; }

    /// Blocks until an event with seq > after exists or the timeout passes.
    std::vector<Event> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;

private:
    std::string session_id_;
    std::optional<std::filesystem::path> file_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<Event> events_;
};

/// One entry of what the model is shown.
struct Message {
    std::string role; // system | user | assistant | tool
    std::string content;

    bool operator==(const Message&) const = default;
};

/// Rebuilds the model-visible history from events: system prompt, user
/// messages, assistant actions, tool results and recovery notes, with
/// context_truncated events applied.
std::vector<Message> visible_messages(const std::vector<Event>& events);

/// sha256 over "role:content\n" for each message.
std::string context_hash(const std::vector<Message>& messages);

std::size_t visible_tokens(const std::vector<Message>& messages);

} // namespace codemem::orchestrator
