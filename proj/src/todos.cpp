#include "codemem/todos.hpp"

#include "codemem/error.hpp"

#include <set>

namespace codemem::todos {

std::string_view to_string(Status s) noexcept {
    switch (s) {
    case Status::pending: return "pending";
    case Status::in_progress: return "in_progress";
    case Status::completed: return "completed";
    }
    return "pending";
}

Status parse_status(std::string_view text) {
    if (text == "pending") return Status::pending;
    if (text == "in_progress") return Status::in_progress;
    if (text == "completed") return Status::completed;
    throw Error(ErrorKind::InvalidArgument, "unknown todo status '" + std::string(text) + "'");
}

const TodoItem* TodoList::first_open() const {
    for (const auto& item : items) {
        if (item.status != Status::completed) return &item;
    }
    return nullptr;
}

bool TodoList::all_completed() const { return first_open() == nullptr; }

json items_to_json(const std::vector<TodoItem>& items) {
    json arr = json::array();
    for (const auto& item : items) {
        arr.push_back({{"status", to_string(item.status)}, {"content", item.content}});
    }
    return arr;
}

std::vector<TodoItem> items_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorKind::InvalidArgument, "todos must be a list");
    std::vector<TodoItem> out;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("content") || !e["content"].is_string()) {
            throw Error(ErrorKind::InvalidArgument, "todo item needs a string 'content'");
        }
        const auto status = e.value("status", std::string("pending"));
        out.push_back({e["content"].get<std::string>(), parse_status(status)});
    }
    return out;
}

json to_json(const TodoList& list) {
    return json{{"session_id", list.session_id}, {"revision", list.revision}, {"todos", items_to_json(list.items)}};
}

std::string render_block(const TodoList& list) {
    std::string out = "todos:\n";
    for (const auto& item : list.items) {
        out += "  - status: " + std::string(to_string(item.status)) + "\n";
        out += "    content: " + item.content + "\n";
    }
    return out;
}

void check_transition(const std::vector<TodoItem>& current, const std::vector<TodoItem>& next) {
    std::set<std::string> seen;
    int in_progress = 0;
    for (const auto& item : next) {
        if (item.content.empty()) throw Error(ErrorKind::InvalidArgument, "todo content must be nonempty");
        if (!seen.insert(item.content).second) {
            throw Error(ErrorKind::InvalidArgument, "duplicate todo item '" + item.content + "'");
        }
        if (item.status == Status::in_progress) ++in_progress;
    }
    if (in_progress > 1) {
        throw Error(ErrorKind::MultipleInProgress, "at most one todo may be in_progress");
    }
    for (const auto& old : current) {
        for (const auto& item : next) {
            if (item.content == old.content && item.status < old.status) {
                throw Error(ErrorKind::StatusRegression,
                            "todo '" + item.content + "' cannot move from " + std::string(to_string(old.status)) +
                                " to " + std::string(to_string(item.status)));
            }
        }
    }
}

TodoStore::TodoStore(std::filesystem::path root) : root_(std::move(root)) {}

std::optional<std::filesystem::path> TodoStore::file_for(const std::string& session_id) const {
    if (!root_) return std::nullopt;
    return *root_ / session_id / "todos.json";
}

void TodoStore::open_session(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    if (lists_.count(session_id) > 0) return;
    TodoList list;
    list.session_id = session_id;
    if (auto file = file_for(session_id); file && std::filesystem::exists(*file)) {
        const auto doc = read_json_file(*file);
        list.revision = doc.value("revision", 0L);
        list.items = items_from_json(doc.at("todos"));
    }
    lists_.emplace(session_id, std::move(list));
}

bool TodoStore::has_session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return lists_.count(session_id) > 0;
}

TodoList TodoStore::write_todos(const std::string& session_id, std::vector<TodoItem> items) {
    std::lock_guard lock(mutex_);
    auto it = lists_.find(session_id);
    if (it == lists_.end()) throw Error(ErrorKind::UnknownSession, "unknown session '" + session_id + "'");
    check_transition(it->second.items, items);
    TodoList next{session_id, std::move(items), it->second.revision + 1};
    if (auto file = file_for(session_id)) write_file_atomic(*file, to_json(next).dump(2) + "\n");
    it->second = next;
    return next;
}

TodoList TodoStore::get_todos(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = lists_.find(session_id);
    if (it == lists_.end()) throw Error(ErrorKind::UnknownSession, "unknown session '" + session_id + "'");
    return it->second;
}

} // namespace codemem::todos
