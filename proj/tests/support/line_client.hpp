#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <string>

namespace codemem::testing {

/// Minimal line client for poking the bridge listener directly.
class LineClient {
public:
    explicit LineClient(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        connected_ = fd_ >= 0 && ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0;
    }
    ~LineClient() {
        if (fd_ >= 0) ::close(fd_);
    }
    LineClient(const LineClient&) = delete;
    LineClient& operator=(const LineClient&) = delete;

    [[nodiscard]] bool connected() const { return connected_; }

    /// Sends one line and reads one reply line; empty when the peer hung up.
    std::string roundtrip(const std::string& line) {
        const std::string out = line + "\n";
        if (::send(fd_, out.data(), out.size(), MSG_NOSIGNAL) != static_cast<ssize_t>(out.size())) return {};
        std::string reply;
        char c;
        while (::recv(fd_, &c, 1, 0) == 1) {
            if (c == '\n') return reply;
            reply += c;
        }
        return reply;
    }

    bool closed_by_peer() {
        char c;
        return ::recv(fd_, &c, 1, 0) == 0;
    }

private:
    int fd_ = -1;
    bool connected_ = false;
};

inline void replace_token(std::string& s, const std::string& token) {
    const std::string placeholder = "{{TOKEN}}";
    for (auto pos = s.find(placeholder); pos != std::string::npos; pos = s.find(placeholder)) {
        s.replace(pos, placeholder.size(), token);
    }
}

} // namespace codemem::testing
