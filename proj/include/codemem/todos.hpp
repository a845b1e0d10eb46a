#pragma once

#include "codemem/util.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codemem::todos {

enum class Status { pending, in_progress, completed };

std::string_view to_string(Status s) noexcept;
Status parse_status(std::string_view text);

struct TodoItem {
    std::string content;
    Status status = Status::pending;

    bool operator==(const TodoItem&) const = default;
};

struct TodoList {
    std::string session_id;
    std::vector<TodoItem> items;
    long revision = 0;

    bool operator==(const TodoList&) const = default;

    /// First item not yet completed; the resume point after a failure.
    [[nodiscard]] const TodoItem* first_open() const;
    [[nodiscard]] bool all_completed() const;
};

/// Wire shape: [{"status": ..., "content": ...}, ...].
json items_to_json(const std::vector<TodoItem>& items);
std::vector<TodoItem> items_from_json(const json& j);
json to_json(const TodoList& list);

/// The block the model sees:
///   todos:
///     - status: completed
///       content: ...
std::string render_block(const TodoList& list);

/// Throws StatusRegression / MultipleInProgress / InvalidArgument if `next`
/// is not an acceptable replacement for `current`.
void check_transition(const std::vector<TodoItem>& current, const std::vector<TodoItem>& next);

class TodoStore {
public:
    TodoStore() = default;
    /// Persists each session's list as <root>/<session>/todos.json.
    explicit TodoStore(std::filesystem::path root);

    void open_session(const std::string& session_id);
    [[nodiscard]] bool has_session(const std::string& session_id) const;

    TodoList write_todos(const std::string& session_id, std::vector<TodoItem> items);
    [[nodiscard]] TodoList get_todos(const std::string& session_id) const;

private:
    std::optional<std::filesystem::path> file_for(const std::string& session_id) const;

    std::optional<std::filesystem::path> root_;
    mutable std::mutex mutex_;
    std::map<std::string, TodoList> lists_;
};

} // namespace codemem::todos
