#include "codemem/trajectory.hpp"

#include "codemem/error.hpp"
#include "codemem/tokens.hpp"

#include <fstream>
#include <sstream>

namespace codemem::orchestrator {

namespace {

constexpr EventKind kAllKinds[] = {
    EventKind::session_created, EventKind::user_message,     EventKind::assistant_action,
    EventKind::tool_result,     EventKind::execution_result, EventKind::invocation,
    EventKind::todo_write,      EventKind::skill_registered, EventKind::recovery,
    EventKind::context_truncated, EventKind::status,
};

} // namespace

std::string_view to_string(EventKind kind) noexcept {
    switch (kind) {
    case EventKind::session_created: return "session_created";
    case EventKind::user_message: return "user_message";
    case EventKind::assistant_action: return "assistant_action";
    case EventKind::tool_result: return "tool_result";
    case EventKind::execution_result: return "execution_result";
    case EventKind::invocation: return "invocation";
    case EventKind::todo_write: return "todo_write";
    case EventKind::skill_registered: return "skill_registered";
    case EventKind::recovery: return "recovery";
    case EventKind::context_truncated: return "context_truncated";
    case EventKind::status: return "status";
    }
    return "status";
}

EventKind event_kind_from_string(std::string_view name) {
    for (auto k : kAllKinds) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorKind::ParseError, "unknown event kind '" + std::string(name) + "'");
}

json to_json(const Event& e) {
    return {{"seq", e.seq}, {"kind", std::string(to_string(e.kind))}, {"ts", e.ts}, {"data", e.data}};
}

Event event_from_json(const json& j) {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.ts = j.value("ts", "");
    e.data = j.value("data", json::object());
    return e;
}

Trajectory::Trajectory(std::string session_id, std::optional<std::filesystem::path> file)
    : session_id_(std::move(session_id)), file_(std::move(file)) {
    if (file_) std::filesystem::create_directories(file_->parent_path());
}

std::shared_ptr<Trajectory> Trajectory::load(std::string session_id, const std::filesystem::path& file) {
    auto t = std::make_shared<Trajectory>(std::move(session_id), file);
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            t->events_.push_back(event_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            // a torn final line from a crash is dropped; anything else is corruption
            if (in.peek() != EOF) throw Error(ErrorKind::ParseError, file.string() + ": " + e.what());
        }
    }
    return t;
}

Event Trajectory::append(EventKind kind, json data) {
    Event e;
    {
        std::lock_guard lock(mutex_);
        e.seq = events_.size() + 1;
        e.kind = kind;
        e.ts = utc_now_iso();
        e.data = std::move(data);
        if (file_) {
            std::ofstream out(*file_, std::ios::app | std::ios::binary);
            out << to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
            if (!out) throw Error(ErrorKind::IoError, "cannot append to " + file_->string());
        }
        events_.push_back(e);
    }
    cv_.notify_all();
    return e;
}

std::vector<Event> Trajectory::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::vector<Event> Trajectory::since(std::uint64_t after) const {
    std::lock_guard lock(mutex_);
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
}

std::size_t Trajectory::size() const {
    std::lock_guard lock(mutex_);
    return events_.size();
}

std::vector<Event> Trajectory::wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return events_.size() > after; });
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
}

std::vector<Message> visible_messages(const std::vector<Event>& events) {
    struct Entry {
        std::uint64_t seq;
        bool pinned;
        Message msg;
        bool marker = false;
    };
    std::vector<Entry> out;
    bool first_user_seen = false;
    for (const auto& e : events) {
        switch (e.kind) {
        case EventKind::session_created:
            out.push_back({e.seq, true, {"system", e.data.value("system_prompt", "")}});
            break;
        case EventKind::user_message:
            out.push_back({e.seq, !first_user_seen, {"user", e.data.value("text", "")}});
            first_user_seen = true;
            break;
        case EventKind::assistant_action:
            out.push_back({e.seq, false, {"assistant", e.data.value("raw_text", "")}});
            break;
        case EventKind::tool_result:
            out.push_back({e.seq, false, {"tool", e.data.value("text", "")}});
            break;
        case EventKind::recovery:
            out.push_back({e.seq, false, {"system", e.data.value("text", "")}});
            break;
        case EventKind::context_truncated: {
            const auto keep_from = e.data.value("keep_from_seq", std::uint64_t{0});
            std::vector<Entry> kept;
            for (auto& m : out) {
                if (!m.marker && (m.pinned || m.seq >= keep_from)) kept.push_back(std::move(m));
            }
            out = std::move(kept);
            // the marker sits right after the pinned prefix
            std::size_t pos = 0;
            while (pos < out.size() && out[pos].pinned) ++pos;
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos),
                       Entry{e.seq, true, {"system", e.data.value("text", "")}, true});
            break;
        }
        default: break;
        }
    }
    std::vector<Message> msgs;
    msgs.reserve(out.size());
    for (auto& m : out) msgs.push_back(std::move(m.msg));
    return msgs;
}

std::string context_hash(const std::vector<Message>& messages) {
    std::string buf;
    for (const auto& m : messages) {
        buf += m.role;
        buf += ':';
        buf += m.content;
        buf += '\n';
    }
    return sha256_hex(buf);
}

std::size_t visible_tokens(const std::vector<Message>& messages) {
    std::size_t n = 0;
    for (const auto& m : messages) n += metrics::count_tokens(m.content);
    return n;
}

} // namespace codemem::orchestrator
