#pragma once

#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "codemem/orchestrator.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace codemem::api {

inline constexpr const char* kVersion = "0.1.0";

struct Config {
    std::filesystem::path data_dir = "codemem-data";
    std::string interpreter = "python3";
    sandbox::Limits limits;
    /// Default driver for new sessions (replay:<trace> | http:<endpoint>); may be empty.
    std::string driver;
    std::string host = "127.0.0.1";
    int port = 8750;
    /// Bearer token; empty disables auth (a warning is logged).
    std::string api_token;
    std::vector<std::filesystem::path> manifests;
    std::filesystem::path fixtures_dir;
    std::size_t max_steps = 40;
    std::size_t token_budget = 200000;
    bool auto_register = false;
};

/// Directory holding the shipped manifests, fixtures, skills and traces.
/// CODEMEM_ASSET_DIR overrides the build-time location.
std::filesystem::path asset_dir();

/// Reads a JSON config file. Unknown keys and wrong types raise BadConfig.
Config config_from_json(const json& doc, const std::filesystem::path& base_dir = {});
/// File from `path`, else $CODEMEM_CONFIG, else defaults; then
/// CODEMEM_API_TOKEN overrides the token.
Config load_config(const std::optional<std::filesystem::path>& path = std::nullopt);
/// With no manifests configured, uses every shipped manifest.
void apply_default_manifests(Config& config);

/// Creates the data dir (BadConfig when not writable) and reports problems
/// that only deserve a warning, such as a missing interpreter.
std::vector<std::string> check_config(const Config& config);

/// Everything the service and CLI share: a registry loaded from the
/// configured manifests, a persistent skill bank and an orchestrator.
class Runtime {
public:
    explicit Runtime(Config config);

    [[nodiscard]] const Config& config() const { return config_; }
    registry::Registry& registry() { return registry_; }
    skillbank::SkillBank& skills() { return *skills_; }
    orchestrator::Orchestrator& orchestrator() { return *orchestrator_; }

    /// Fixture by bare name (looked up in fixtures_dir) or path.
    [[nodiscard]] toolhost::FixtureWorld fixture(const std::string& name_or_path) const;
    [[nodiscard]] std::vector<std::string> fixture_names() const;

private:
    Config config_;
    registry::Registry registry_;
    std::unique_ptr<skillbank::SkillBank> skills_;
    std::unique_ptr<orchestrator::Orchestrator> orchestrator_;
};

/// HTTP status for an error kind.
int http_status(ErrorKind kind);

class Server {
public:
    explicit Server(Runtime& runtime);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds (PortInUse when taken; port 0 picks one) and serves on a background thread.
    void start();
    void stop();
    /// Blocks until stop().
    void wait();
    [[nodiscard]] int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    Runtime& runtime_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace codemem::api
