#include "codemem/bridge.hpp"

#include "codemem/error.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>

namespace codemem::sandbox {

namespace {

bool tokens_equal(const std::string& a, const std::string& b) {
    // constant time over the expected token length
    unsigned char diff = a.size() == b.size() ? 0 : 1;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const unsigned char ca = i < a.size() ? static_cast<unsigned char>(a[i]) : 0;
        diff |= ca ^ static_cast<unsigned char>(b[i]);
    }
    return diff == 0;
}

bool write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

} // namespace

std::string format_ok(std::int64_t id, const json& result) {
    ordered_json out;
    out["id"] = id;
    out["ok"] = true;
    out["result"] = result;
    return out.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string format_error(std::optional<std::int64_t> id, std::string_view kind, std::string_view message) {
    ordered_json out;
    if (id) out["id"] = *id;
    else out["id"] = nullptr;
    out["ok"] = false;
    out["error"]["kind"] = std::string(kind);
    out["error"]["message"] = std::string(message);
    return out.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string format_request(const BridgeRequest& request) {
    ordered_json out;
    out["id"] = request.id;
    out["tool"] = request.tool;
    out["args"] = request.args;
    out["token"] = request.token;
    return out.dump(-1, ' ', false, json::error_handler_t::replace);
}

BridgeServer::BridgeServer(Options options) : options_(std::move(options)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) throw Error(ErrorKind::IoError, std::string("bridge socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error(ErrorKind::IoError, "bridge bind: " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

BridgeServer::~BridgeServer() { stop(); }

std::string BridgeServer::address() const { return "127.0.0.1:" + std::to_string(port_); }

void BridgeServer::stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    std::list<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(connections_);
    }
    for (auto& t : workers) t.join();
}

void BridgeServer::accept_loop() {
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, 50);
        if (r <= 0) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        std::lock_guard lock(mutex_);
        if (stopping_) {
            ::close(fd);
            break;
        }
        open_fds_.insert(fd);
        connections_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void BridgeServer::serve_connection(int fd) {
    std::mutex write_mutex;
    std::vector<std::future<void>> inflight;
    std::string buffer;
    char chunk[8192];
    bool drop = false;
    while (!drop) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while (!drop && (nl = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            inflight.push_back(std::async(std::launch::async, [this, fd, &write_mutex, line = std::move(line)] {
                auto [reply, close_after] = handle_line(line);
                std::lock_guard lock(write_mutex);
                write_all(fd, reply + "\n");
                if (close_after) ::shutdown(fd, SHUT_RDWR);
            }));
            if (auth_failed_) drop = true;
        }
    }
    for (auto& f : inflight) f.wait();
    std::lock_guard lock(mutex_);
    open_fds_.erase(fd);
    ::close(fd);
}

std::pair<std::string, bool> BridgeServer::handle_line(const std::string& line) {
    json frame;
    try {
        frame = json::parse(line);
    } catch (const json::exception&) {
        return {format_error(std::nullopt, "BadFrame", "request is not valid JSON"), false};
    }
    if (!frame.is_object()) return {format_error(std::nullopt, "BadFrame", "request must be a JSON object"), false};

    std::optional<std::int64_t> id;
    if (frame.contains("id") && frame["id"].is_number_integer()) id = frame["id"].get<std::int64_t>();

    const auto token_it = frame.find("token");
    if (token_it == frame.end() || !token_it->is_string() ||
        !tokens_equal(token_it->get<std::string>(), options_.token)) {
        const bool first = !auth_failed_.exchange(true);
        if (first && options_.on_auth_failure) options_.on_auth_failure();
        return {format_error(id, "BridgeAuthFailure", "bad or missing token"), true};
    }
    if (!id) return {format_error(std::nullopt, "BadFrame", "id must be an integer"), false};
    const auto tool_it = frame.find("tool");
    if (tool_it == frame.end() || !tool_it->is_string() || tool_it->get<std::string>().empty())
        return {format_error(id, "BadFrame", "tool must be a non-empty string"), false};
    const std::string tool = tool_it->get<std::string>();
    const json args = frame.contains("args") ? frame["args"] : json::object();

    {
        std::unique_lock lock(mutex_);
        if (!seen_ids_.insert(*id).second) {
            lock.unlock();
            const std::string msg = "id " + std::to_string(*id) + " was already used in this execution";
            if (options_.reject) options_.reject(tool, args, "DuplicateId", msg);
            return {format_error(id, "DuplicateId", msg), false};
        }
        if (accepted_calls_ >= options_.max_calls) {
            lock.unlock();
            const std::string msg = "bridge call limit of " + std::to_string(options_.max_calls) + " reached";
            if (options_.reject) options_.reject(tool, args, "LimitExceeded", msg);
            return {format_error(id, "LimitExceeded", msg), false};
        }
        ++accepted_calls_;
    }

    try {
        return {format_ok(*id, options_.dispatch(tool, args)), false};
    } catch (const Error& e) {
        return {format_error(id, to_string(e.kind()), e.what()), false};
    } catch (const std::exception& e) {
        return {format_error(id, "IoError", e.what()), false};
    }
}

} // namespace codemem::sandbox
