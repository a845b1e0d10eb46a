#include "codemem/sandbox.hpp"

#include "codemem/bridge.hpp"
#include "codemem/error.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <regex>
#include <set>

extern char** environ;

namespace codemem::sandbox {

namespace fs = std::filesystem;

std::string_view to_string(ExitStatus status) noexcept {
    switch (status) {
    case ExitStatus::success: return "success";
    case ExitStatus::nonzero: return "nonzero";
    case ExitStatus::timeout: return "timeout";
    case ExitStatus::killed: return "killed";
    }
    return "killed";
}

ExitStatus exit_status_from_string(std::string_view name) {
    for (auto s : {ExitStatus::success, ExitStatus::nonzero, ExitStatus::timeout, ExitStatus::killed}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorKind::ParseError, "unknown exit status '" + std::string(name) + "'");
}

json to_json(const ExecutionResult& r) {
    json calls = json::array();
    for (const auto& c : r.bridge_calls) calls.push_back(toolhost::to_json(c));
    return {{"execution_id", r.execution_id},
            {"session_id", r.session_id},
            {"exit_status", std::string(to_string(r.exit_status))},
            {"exit_code", r.exit_code},
            {"stdout_tail", r.stdout_tail},
            {"truncated_bytes", r.truncated_bytes},
            {"bridge_calls", calls},
            {"wall_time", r.wall_time_s},
            {"started_at", r.started_at},
            {"auth_failure", r.auth_failure}};
}

ExecutionResult execution_from_json(const json& j) {
    ExecutionResult r;
    r.execution_id = j.at("execution_id").get<std::string>();
    r.session_id = j.value("session_id", "");
    r.exit_status = exit_status_from_string(j.at("exit_status").get<std::string>());
    r.exit_code = j.value("exit_code", 0);
    r.stdout_tail = j.value("stdout_tail", "");
    r.truncated_bytes = j.value("truncated_bytes", std::size_t{0});
    for (const auto& c : j.value("bridge_calls", json::array())) r.bridge_calls.push_back(toolhost::invocation_from_json(c));
    r.wall_time_s = j.value("wall_time", 0.0);
    r.started_at = j.value("started_at", "");
    r.auth_failure = j.value("auth_failure", false);
    return r;
}

std::string render_visible(const ExecutionResult& r, const Limits& limits) {
    std::string out = r.stdout_tail;
    if (!out.empty() && out.back() != '\n') out += '\n';
    std::string status;
    switch (r.exit_status) {
    case ExitStatus::success: status = "success"; break;
    case ExitStatus::nonzero: status = "nonzero (code " + std::to_string(r.exit_code) + ")"; break;
    case ExitStatus::timeout: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "timeout after %gs", limits.wall_timeout_s);
        status = buf;
        break;
    }
    case ExitStatus::killed: status = r.auth_failure ? "killed (BridgeAuthFailure)" : "killed"; break;
    }
    out += "[exit: " + status + ", bridge calls: " + std::to_string(r.bridge_calls.size()) + "]";
    return out;
}

std::size_t truncate_tail(std::string& text, std::size_t max_bytes) {
    if (text.size() <= max_bytes) return 0;
    std::size_t start = text.size() - max_bytes;
    while (start < text.size() && (static_cast<unsigned char>(text[start]) & 0xC0) == 0x80) ++start;
    const std::size_t dropped = start;
    text = "[truncated " + std::to_string(dropped) + " bytes]\n" + text.substr(start);
    return dropped;
}

// ---------------------------------------------------------------------------
// preamble

namespace {

const std::set<std::string>& python_keywords() {
    static const std::set<std::string> kw = {
        "False", "None",   "True",    "and",      "as",     "assert", "async", "await",    "break",
        "class", "continue", "def",   "del",      "elif",   "else",   "except", "finally", "for",
        "from",  "global", "if",      "import",   "in",     "is",     "lambda", "nonlocal", "not",
        "or",    "pass",   "raise",   "return",   "try",    "while",  "with",  "yield"};
    return kw;
}

bool python_identifier(const std::string& s) {
    static const std::regex re("[A-Za-z_][A-Za-z0-9_]*");
    return std::regex_match(s, re) && !python_keywords().count(s);
}

std::string py_str(const std::string& s) { return json(s).dump(-1, ' ', true, json::error_handler_t::replace); }

constexpr const char* kBootstrap = R"py(# codemem sandbox preamble (generated)
import asyncio
import json
import os
import socket
import sys
from datetime import datetime, timedelta, timezone


class ToolError(Exception):
    def __init__(self, kind, message):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message


class _CodememBridge:
    def __init__(self):
        addr = os.environ.get("CODEMEM_BRIDGE_ADDR")
        token = os.environ.get("CODEMEM_BRIDGE_TOKEN")
        if not addr or not token:
            sys.exit("codemem: CODEMEM_BRIDGE_ADDR and CODEMEM_BRIDGE_TOKEN must be set")
        host, _, port = addr.rpartition(":")
        self._token = token
        self._next_id = 1
        self._replies = {}
        self._sock = socket.create_connection((host, int(port)))
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def call(self, tool, args):
        frame_id = self._next_id
        self._next_id += 1
        frame = {"id": frame_id, "tool": tool, "args": args, "token": self._token}
        line = json.dumps(frame, separators=(",", ":"), ensure_ascii=False) + "\n"
        self._sock.sendall(line.encode("utf-8"))
        while frame_id not in self._replies:
            reply = self._reader.readline()
            if not reply:
                raise ConnectionError("codemem bridge closed the connection")
            decoded = json.loads(reply)
            self._replies[decoded.get("id")] = decoded
        reply = self._replies.pop(frame_id)
        if reply.get("ok"):
            return reply.get("result")
        err = reply.get("error") or {}
        raise ToolError(err.get("kind", "Unknown"), err.get("message", ""))


_codemem_bridge = _CodememBridge()


def _codemem_args(required, optional):
    args = dict(required)
    for key, value in optional.items():
        if value is not None:
            args[key] = value
    return args


def codemem_now():
    fixed = os.environ.get("CODEMEM_CLOCK")
    if fixed:
        return datetime.fromisoformat(fixed.replace("Z", "+00:00"))
    return datetime.now(timezone.utc)
)py";

const std::set<std::string>& reserved_names() {
    static const std::set<std::string> r = {"ToolError", "_CodememBridge", "_codemem_bridge", "_codemem_args",
                                            "codemem_now"};
    return r;
}

std::string tool_stub(const registry::ToolSchema& schema) {
    const std::string& name = schema.descriptor.name;
    if (!python_identifier(name)) throw Error(ErrorKind::InvalidArgument, "tool name '" + name + "' is not a Python identifier");

    // required parameters keep the manifest's "required" order, optional ones follow by name
    std::vector<std::string> required;
    std::vector<std::string> optional;
    std::set<std::string> required_set;
    if (schema.parameters.contains("required")) {
        for (const auto& r : schema.parameters["required"]) {
            if (required_set.insert(r.get<std::string>()).second) required.push_back(r.get<std::string>());
        }
    }
    bool plain = true;
    std::set<std::string> optional_sorted;
    if (schema.parameters.contains("properties")) {
        for (const auto& [key, _] : schema.parameters["properties"].items()) {
            if (!python_identifier(key) || reserved_names().count(key)) plain = false;
            if (!required_set.count(key)) optional_sorted.insert(key);
        }
    }
    optional.assign(optional_sorted.begin(), optional_sorted.end());

    std::string out = "\n\nasync def " + name + "(";
    if (!plain) {
        out += "**kwargs):\n";
        out += "    # " + schema.descriptor.summary + "\n";
        out += "    return _codemem_bridge.call(" + py_str(name) + ", kwargs)\n";
        return out;
    }
    bool first = true;
    for (const auto& p : required) {
        out += (first ? "" : ", ") + p;
        first = false;
    }
    for (const auto& p : optional) {
        out += (first ? "" : ", ") + p + "=None";
        first = false;
    }
    out += "):\n";
    std::string summary = schema.descriptor.summary;
    for (auto& c : summary) if (c == '\n' || c == '\r') c = ' ';
    out += "    # " + summary + "\n";
    std::string req = "{";
    for (std::size_t i = 0; i < required.size(); ++i) req += (i ? ", " : "") + py_str(required[i]) + ": " + required[i];
    req += "}";
    std::string opt = "{";
    for (std::size_t i = 0; i < optional.size(); ++i) opt += (i ? ", " : "") + py_str(optional[i]) + ": " + optional[i];
    opt += "}";
    out += "    return _codemem_bridge.call(" + py_str(name) + ", _codemem_args(" + req + ", " + opt + "))\n";
    return out;
}

} // namespace

std::string generate_preamble(const std::vector<registry::ToolSchema>& tools,
                              const std::vector<skillbank::Skill>& skills) {
    std::vector<const registry::ToolSchema*> ordered;
    for (const auto& t : tools) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(),
              [](auto* a, auto* b) { return a->descriptor.name < b->descriptor.name; });

    std::set<std::string> taken = reserved_names();
    std::string out = kBootstrap;
    for (const auto* t : ordered) {
        if (!taken.insert(t->descriptor.name).second) continue; // same tool listed twice
        out += tool_stub(*t);
    }

    std::vector<const skillbank::Skill*> sk;
    for (const auto& s : skills) sk.push_back(&s);
    std::sort(sk.begin(), sk.end(), [](auto* a, auto* b) { return a->name < b->name; });
    std::set<std::string> seen_skills;
    for (const auto* s : sk) {
        if (!seen_skills.insert(s->name).second) {
            throw Error(ErrorKind::NameCollision, "skill '" + s->name + "' is loaded in more than one version");
        }
        if (!taken.insert(s->entrypoint).second) {
            throw Error(ErrorKind::NameCollision, "skill '" + s->name + "' entrypoint '" + s->entrypoint +
                                                      "' collides with another loaded name");
        }
        out += "\n\n# skill " + s->name + "@v" + std::to_string(s->version) + "\n";
        out += s->source;
        if (out.back() != '\n') out += '\n';
    }
    out += "\n\n# script\n";
    return out;
}

std::string skill_call_stub(const skillbank::Skill& skill, const json& args) {
    if (!args.is_object()) throw Error(ErrorKind::InvalidArgument, "skill arguments must be a JSON object");
    std::string out;
    out += "_codemem_result = " + skill.entrypoint + "(**json.loads(" +
           py_str(args.dump(-1, ' ', false, json::error_handler_t::replace)) + "))\n";
    out += "if asyncio.iscoroutine(_codemem_result):\n";
    out += "    _codemem_result = asyncio.run(_codemem_result)\n";
    out += "if _codemem_result is not None:\n";
    out += "    print(json.dumps(_codemem_result, ensure_ascii=False, default=str))\n";
    return out;
}

// ---------------------------------------------------------------------------
// process runner

fs::path resolve_interpreter(const std::vector<std::string>& argv) {
    if (argv.empty() || argv[0].empty()) throw Error(ErrorKind::InterpreterNotFound, "no interpreter configured");
    const std::string& exe = argv[0];
    if (exe.find('/') != std::string::npos) {
        if (::access(exe.c_str(), X_OK) == 0) return exe;
        throw Error(ErrorKind::InterpreterNotFound, "interpreter '" + exe + "' is not executable");
    }
    const char* path = std::getenv("PATH");
    std::string dirs = path ? path : "/usr/bin:/bin";
    std::size_t pos = 0;
    while (pos <= dirs.size()) {
        const std::size_t end = dirs.find(':', pos);
        const std::string dir = dirs.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        const fs::path candidate = fs::path(dir.empty() ? "." : dir) / exe;
        if (::access(candidate.c_str(), X_OK) == 0) return candidate;
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    throw Error(ErrorKind::InterpreterNotFound, "interpreter '" + exe + "' not found on PATH");
}

Sandbox::Sandbox(SandboxConfig config, const registry::Registry& registry, const skillbank::SkillBank& skills,
                 toolhost::ToolHost& host)
    : config_(std::move(config)), registry_(registry), skills_(skills), host_(host) {}

std::shared_ptr<std::mutex> Sandbox::session_lock(const std::string& session_id) {
    std::lock_guard lock(locks_mutex_);
    auto& slot = session_locks_[session_id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

namespace {

std::vector<std::string> child_environment(const std::map<std::string, std::string>& overrides) {
    std::vector<std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        if (kv.rfind("CODEMEM_", 0) == 0) continue;
        const auto eq = kv.find('=');
        if (eq != std::string_view::npos && overrides.count(std::string(kv.substr(0, eq)))) continue;
        env.emplace_back(kv);
    }
    for (const auto& [k, v] : overrides) env.push_back(k + "=" + v);
    return env;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

/// Keeps the last `cap` bytes seen plus a running total.
struct TailBuffer {
    std::size_t cap;
    std::size_t total = 0;
    std::string data;

    void append(const char* p, std::size_t n) {
        total += n;
        data.append(p, n);
        if (data.size() > 2 * cap + 4096) data.erase(0, data.size() - cap);
    }
};

} // namespace

ExecutionResult Sandbox::execute(const ExecutionRequest& request) {
    const Limits& limits = request.limits;
    if (!(limits.wall_timeout_s > 0) || limits.max_output_bytes == 0 || limits.max_bridge_calls == 0) {
        throw Error(ErrorKind::InvalidArgument, "sandbox limits must be positive");
    }
    const fs::path interpreter = resolve_interpreter(config_.interpreter);

    const auto lock = session_lock(request.session_id);
    std::lock_guard session_guard(*lock);

    ExecutionResult result;
    result.session_id = request.session_id;
    result.execution_id = request.execution_id.empty() ? "exec-" + random_hex(8) : request.execution_id;
    result.started_at = utc_now_iso();

    const auto schemas = registry_.schemas(request.loaded_tools);
    std::vector<skillbank::Skill> skills;
    for (const auto& ref : request.loaded_skills) {
        skills.push_back(skills_.get_skill(ref.name, ref.version > 0 ? std::optional<int>(ref.version) : std::nullopt));
    }
    const std::string script = generate_preamble(schemas, skills) + request.source;

    const fs::path workdir = config_.work_root / ("codemem-" + result.execution_id);
    fs::create_directories(workdir);
    const fs::path script_path = workdir / "script.py";
    write_file_atomic(script_path, script);

    toolhost::InvocationContext ctx;
    ctx.session_id = request.session_id;
    ctx.execution_id = result.execution_id;
    ctx.loaded_tools.insert(request.loaded_tools.begin(), request.loaded_tools.end());

    std::atomic<pid_t> child{0};
    std::atomic<bool> auth_failed{false};
    BridgeServer::Options opts;
    opts.token = random_hex(16);
    opts.max_calls = limits.max_bridge_calls;
    opts.dispatch = [this, &ctx](const std::string& tool, const json& args) { return host_.invoke(tool, args, ctx); };
    opts.reject = [this, &ctx](const std::string& tool, const json& args, std::string_view kind, const std::string& msg) {
        host_.record_rejection(tool, args, ctx, kind, msg);
    };
    opts.on_auth_failure = [&] {
        auth_failed = true;
        if (const pid_t pid = child.load(); pid > 0) ::kill(-pid, SIGKILL);
    };
    BridgeServer bridge(opts);

    std::map<std::string, std::string> env_overrides = {
        {"CODEMEM_BRIDGE_ADDR", bridge.address()},
        {"CODEMEM_BRIDGE_TOKEN", opts.token},
        {"CODEMEM_EXECUTION_ID", result.execution_id},
        {"PYTHONUNBUFFERED", "1"},
        {"PYTHONIOENCODING", "utf-8"},
        {"PYTHONDONTWRITEBYTECODE", "1"},
    };
    if (request.clock) env_overrides["CODEMEM_CLOCK"] = *request.clock;
    auto env = child_environment(env_overrides);

    std::vector<std::string> argv_s = config_.interpreter;
    argv_s[0] = interpreter.string();
    argv_s.push_back(script_path.string());
    std::vector<char*> argv;
    for (auto& a : argv_s) argv.push_back(a.data());
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (auto& e : env) envp.push_back(e.data());
    envp.push_back(nullptr);

    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) throw Error(ErrorKind::IoError, "pipe failed");

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_adddup2(&actions, pipefd[1], 1);
    posix_spawn_file_actions_adddup2(&actions, pipefd[1], 2);
    posix_spawn_file_actions_addchdir_np(&actions, workdir.c_str());
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    sigset_t empty;
    sigemptyset(&empty);
    posix_spawnattr_setsigmask(&attr, &empty);
    sigset_t dfl;
    sigemptyset(&dfl);
    sigaddset(&dfl, SIGPIPE);
    posix_spawnattr_setsigdefault(&attr, &dfl);
    posix_spawnattr_setpgroup(&attr, 0);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);

    const auto t0 = std::chrono::steady_clock::now();
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    ::close(pipefd[1]);
    if (rc != 0) {
        ::close(pipefd[0]);
        bridge.stop();
        std::error_code ec;
        fs::remove_all(workdir, ec);
        throw Error(ErrorKind::InterpreterNotFound, "could not start '" + argv_s[0] + "': " + std::strerror(rc));
    }
    child = pid;
    if (auth_failed) ::kill(-pid, SIGKILL);

    const auto deadline = t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(limits.wall_timeout_s));
    TailBuffer tail{limits.max_output_bytes, 0, {}};
    bool eof = false;
    bool reaped = false;
    bool timed_out = false;
    bool killed = false;
    int wait_status = 0;
    std::optional<std::chrono::steady_clock::time_point> drain_deadline;
    char buf[65536];

    while (!(eof && reaped)) {
        const auto now = std::chrono::steady_clock::now();
        if (!killed && (auth_failed || now >= deadline)) {
            timed_out = !auth_failed && now >= deadline;
            ::kill(-pid, SIGKILL);
            killed = true;
            drain_deadline = now + std::chrono::seconds(2);
        }
        if (!reaped) {
            const pid_t w = ::waitpid(pid, &wait_status, WNOHANG);
            if (w == pid) reaped = true;
        }
        if (!eof) {
            // a grandchild outside the group may hold the pipe open
            if (drain_deadline && now >= *drain_deadline) break;
            if (reaped && !drain_deadline) drain_deadline = now + std::chrono::seconds(2);
            pollfd p{pipefd[0], POLLIN, 0};
            if (::poll(&p, 1, 20) > 0) {
                const ssize_t n = ::read(pipefd[0], buf, sizeof buf);
                if (n > 0) tail.append(buf, static_cast<std::size_t>(n));
                else if (n == 0 || errno != EINTR) eof = true;
            }
        } else if (!reaped) {
            ::usleep(5000);
        }
    }
    ::close(pipefd[0]);
    if (!reaped) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &wait_status, 0);
    }
    // the group may still have stragglers after the leader exits normally
    ::kill(-pid, SIGKILL);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bridge.stop();

    result.auth_failure = auth_failed || bridge.auth_failed();
    if (timed_out) {
        result.exit_status = ExitStatus::timeout;
        result.exit_code = -1;
    } else if (result.auth_failure) {
        result.exit_status = ExitStatus::killed;
        result.exit_code = -1;
    } else if (WIFEXITED(wait_status)) {
        result.exit_code = WEXITSTATUS(wait_status);
        result.exit_status = result.exit_code == 0 ? ExitStatus::success : ExitStatus::nonzero;
    } else {
        result.exit_status = ExitStatus::killed;
        result.exit_code = WIFSIGNALED(wait_status) ? -WTERMSIG(wait_status) : -1;
    }

    std::string out = tail.data;
    std::size_t dropped_before = tail.total - out.size();
    std::size_t dropped = truncate_tail(out, limits.max_output_bytes);
    if (dropped_before > 0) {
        // buffer already discarded a prefix; re-state the marker with the full count
        const std::size_t nl = out.find('\n');
        if (dropped == 0) out = "[truncated " + std::to_string(dropped_before) + " bytes]\n" + out;
        else out = "[truncated " + std::to_string(dropped + dropped_before) + " bytes]\n" + out.substr(nl + 1);
        dropped += dropped_before;
    }
    result.truncated_bytes = dropped;
    out = sanitize_utf8(out);
    replace_all(out, workdir.string(), "<sandbox>");
    result.stdout_tail = std::move(out);

    std::error_code ec;
    fs::remove_all(workdir, ec);
    result.bridge_calls = host_.log().for_execution(result.execution_id);
    return result;
}

} // namespace codemem::sandbox
