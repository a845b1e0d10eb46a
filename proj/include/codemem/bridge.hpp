#pragma once

#include "codemem/util.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

namespace codemem::sandbox {

/// A decoded request line: {"id": n, "tool": name, "args": {...}, "token": t}.
struct BridgeRequest {
    std::int64_t id = 0;
    std::string tool;
    json args;
    std::string token;
};

/// Response lines are compact JSON with keys in protocol order:
///   {"id":n,"ok":true,"result":...}
///   {"id":n,"ok":false,"error":{"kind":k,"message":m}}
std::string format_ok(std::int64_t id, const json& result);
std::string format_error(std::optional<std::int64_t> id, std::string_view kind, std::string_view message);

/// Encodes a request the way the in-sandbox client does. Used by tests and
/// the conformance vectors.
std::string format_request(const BridgeRequest& request);

/// Loopback listener for one execution. Every line received is answered on
/// the same connection; frames on one connection may be answered out of order.
class BridgeServer {
public:
    /// Throws on failure; kind is carried in the returned error frame.
    using Dispatch = std::function<json(const std::string& tool, const json& args)>;
    /// Called for authenticated frames refused before dispatch.
    using Reject = std::function<void(const std::string& tool, const json& args, std::string_view kind,
                                      const std::string& message)>;

    struct Options {
        std::string token;
        std::size_t max_calls = 1000;
        Dispatch dispatch;
        Reject reject;
        std::function<void()> on_auth_failure;
    };

    explicit BridgeServer(Options options);
    ~BridgeServer();
    BridgeServer(const BridgeServer&) = delete;
    BridgeServer& operator=(const BridgeServer&) = delete;

    /// "127.0.0.1:<port>"
    [[nodiscard]] std::string address() const;
    [[nodiscard]] std::uint16_t port() const { return port_; }
    [[nodiscard]] bool auth_failed() const { return auth_failed_.load(); }

    /// Stops accepting, closes live connections and joins all workers.
    void stop();

private:
    void accept_loop();
    void serve_connection(int fd);
    /// Returns the response line (without newline) and whether to drop the connection.
    std::pair<std::string, bool> handle_line(const std::string& line);

    Options options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<bool> auth_failed_{false};
    std::thread acceptor_;

    std::mutex mutex_;
    std::list<std::thread> connections_;
    std::set<int> open_fds_;
    std::set<std::int64_t> seen_ids_;
    std::size_t accepted_calls_ = 0;
};

} // namespace codemem::sandbox
