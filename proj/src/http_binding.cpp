#include "codemem/error.hpp"
#include "codemem/toolhost.hpp"

#include <httplib.h>

#include <regex>

namespace codemem::toolhost {

json invoke_http_binding(const json& binding, const json& args) {
    const auto url = binding.value("url", std::string{});
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) {
        throw Error(ErrorKind::BindingError, "http binding has invalid url '" + url + "'");
    }
    httplib::Client client(m[1].str());
    const auto timeout = binding.value("timeout_s", 30);
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    httplib::Headers headers;
    for (const auto& [k, v] : binding.value("headers", json::object()).items()) {
        headers.emplace(k, v.get<std::string>());
    }
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = client.Post(path, headers, args.dump(), "application/json");
    if (!res) {
        throw Error(ErrorKind::BindingError, "http binding request to " + url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorKind::BindingError,
                    "http binding " + url + " returned " + std::to_string(res->status) + ": " + res->body);
    }
    auto parsed = json::parse(res->body, nullptr, false);
    return parsed.is_discarded() ? json(res->body) : parsed;
}

} // namespace codemem::toolhost
