// Acceptance gate: one line per criterion, exit status 1 if any fails.
// Everything runs on the replay driver and shipped fixtures.

#include "codemem/bridge.hpp"
#include "codemem/error.hpp"
#include "codemem/eval.hpp"
#include "codemem/metrics.hpp"
#include "codemem/registry.hpp"
#include "codemem/skillbank.hpp"
#include "codemem/todos.hpp"
#include "codemem/toolhost.hpp"
#include "line_client.hpp"
#include "test_support.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

using namespace codemem;
using orchestrator::Event;
using orchestrator::EventKind;

namespace {

struct Verdict {
    std::vector<std::string> failures;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

eval::TaskSpec task(const std::string& name) { return eval::load_task(testing::asset("tasks/" + name + ".json")); }

eval::RunOptions replay() {
    eval::RunOptions o;
    o.driver_spec = "replay:" + testing::asset("traces").string();
    return o;
}

std::string fmt(double v, int digits = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string ends(const std::string& s) { return s.empty() ? "" : "; " + s; }

// ---------------------------------------------------------------- 1

void fast_path_case_study(Verdict& v) {
    const auto t = task("case_study_fast_path");
    const auto world = toolhost::load_fixture_file(t.fixture);
    const auto start = std::chrono::steady_clock::now();
    const auto r = eval::run_task(t, eval::RunOptions{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::set<std::string> stored;
    for (const auto& [_, content] : r.drive) stored.insert(content);
    std::size_t excluded = 0, agentr = 0;
    for (const auto& e : world.emails) {
        bool uploaded = false;
        for (const auto& a : e.attachments) uploaded = uploaded || stored.count(a.content) > 0;
        excluded += uploaded ? 0 : 1;
        const bool from_agentr = e.from_address.size() >= 11 && e.from_address.substr(e.from_address.size() - 11) == "@agentr.dev";
        if (from_agentr && uploaded) ++agentr;
    }
    for (const auto& e : r.events) {
        if (e.kind != EventKind::invocation || e.data.value("tool", "") != "onedrive__upload_file") continue;
        const auto content = e.data["args"].value("content", "");
        for (const auto& em : world.emails) {
            if (em.from_address.find("@agentr.dev") == std::string::npos) continue;
            for (const auto& a : em.attachments) agentr += a.content == content ? 1 : 0;
        }
    }
    v.expect(r.drive.size() == 4, "drive holds " + std::to_string(r.drive.size()) + " files, want 4");
    v.expect(excluded == 3, std::to_string(excluded) + " emails excluded, want 3");
    v.expect(agentr == 0, std::to_string(agentr) + " agentr.dev uploads");
    v.expect(world.emails.size() == 7, "fixture has " + std::to_string(world.emails.size()) + " emails, want 7");
    v.expect(secs < 5.0, "took " + fmt(secs) + " s");
    v.expect(r.passed, "task checker failed");
    v.detail = std::to_string(world.emails.size()) + " emails, " + std::to_string(excluded) + " excluded, " +
               std::to_string(r.drive.size()) + " files, " + std::to_string(agentr) + " agentr uploads, " + fmt(secs) + " s";
}

// ---------------------------------------------------------------- 2

void payload_independence(Verdict& v) {
    std::size_t totals[2] = {0, 0};
    const std::size_t sizes[2] = {1024, 1024 * 1024};
    for (int i = 0; i < 2; ++i) {
        auto t = task("case_study");
        t.payload_size = sizes[i];
        const auto r = eval::run_task(t, replay());
        v.expect(r.passed, "run with " + std::to_string(sizes[i]) + " byte payloads failed: " +
                               (r.failures.empty() ? std::string() : r.failures[0]));
        totals[i] = metrics::context_cost(r.events, metrics::CostMode::codemem).total;
    }
    v.expect(totals[0] == totals[1], "codemem totals differ: " + std::to_string(totals[0]) + " vs " + std::to_string(totals[1]));
    v.expect(totals[0] > 0, "zero token total");
    v.detail = "codemem total " + std::to_string(totals[0]) + " at 1 KB, " + std::to_string(totals[1]) + " at 1 MB";
}

// ---------------------------------------------------------------- 3

void reuse_fast_path(Verdict& v) {
    const auto fast = eval::run_task(task("case_study_fast_path"), eval::RunOptions{});
    std::size_t driver_events = 0;
    for (const auto& e : fast.events) driver_events += e.kind == EventKind::assistant_action ? 1 : 0;
    const auto ph = metrics::phase_timings(fast.events);
    v.expect(fast.assistant_calls == 0, std::to_string(fast.assistant_calls) + " driver calls on the fast path");
    v.expect(driver_events == 0, std::to_string(driver_events) + " assistant actions on the fast path");
    v.expect(ph.t_task == ph.t_execute, "t_task " + fmt(ph.t_task, 6) + " != t_execute " + fmt(ph.t_execute, 6));
    v.expect(ph.t_execute > 0, "no execution time recorded");

    const auto golden = eval::run_task(task("case_study"), replay());
    v.expect(golden.passed, "golden trace failed");
    v.expect(golden.assistant_calls >= 3, "golden trace has " + std::to_string(golden.assistant_calls) + " driver calls");
    v.detail = "fast path 0 calls, t_task = t_execute = " + fmt(ph.t_execute, 3) + " s; golden trace " +
               std::to_string(golden.assistant_calls) + " calls";
}

// ---------------------------------------------------------------- 4

std::size_t ceil4(const std::string& s) { return (s.size() + 3) / 4; }

void react_cost_model(Verdict& v) {
    // three steps with known texts; the oracle re-reads every earlier message at each step
    const std::string system = "You are an agent.";
    const std::string user = "Upload the attachments.";
    const std::vector<std::array<std::string, 2>> steps{
        {"search_functions fetch emails", "- outlook__list_emails: List emails"},
        {"load_functions outlook__list_emails", "outlook__list_emails(filter) -> list of emails with ids"},
        {"final done", "ok"}};

    std::vector<Event> events;
    auto add = [&](EventKind k, json d) { events.push_back(Event{events.size() + 1, k, "2025-12-20T12:00:00Z", std::move(d)}); };
    add(EventKind::session_created, {{"system_prompt", system}});
    add(EventKind::user_message, {{"text", user}});
    for (const auto& [raw, out] : steps) {
        add(EventKind::assistant_action,
            {{"action", {{"kind", "tool_call"}, {"name", "search_functions"}, {"args", json::object()}}}, {"raw_text", raw}, {"llm_seconds", 0}});
        add(EventKind::tool_result, {{"tool", "search_functions"}, {"ok", true}, {"text", out}});
    }

    std::size_t oracle = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        std::vector<std::string> parts{system, user};
        for (std::size_t j = 0; j < i; ++j) {
            parts.push_back(steps[j][0]);
            parts.push_back(steps[j][1]);
        }
        for (const auto& p : parts) oracle += ceil4(p);
        oracle += ceil4(steps[i][1]);
    }
    const auto c = metrics::context_cost(events, metrics::CostMode::react);
    v.expect(c.total == oracle, "react total " + std::to_string(c.total) + " vs oracle " + std::to_string(oracle));
    v.expect(c.n_steps == 3, std::to_string(c.n_steps) + " steps");
    v.detail = "react total " + std::to_string(c.total) + " = brute-force " + std::to_string(oracle);
}

// ---------------------------------------------------------------- 5

/// Invocation sequence without the per-run ids and timestamps.
std::string invocation_bytes(const std::vector<Event>& events) {
    std::string out;
    for (const auto& e : events) {
        if (e.kind != EventKind::invocation) continue;
        json j = e.data;
        j.erase("invocation_id");
        j.erase("execution_id");
        j.erase("timestamp");
        out += j.dump() + "\n";
    }
    return out;
}

void determinism(Verdict& v) {
    const auto t = task("case_study_fast_path");
    std::string first_calls;
    std::map<std::string, std::string> first_drive;
    std::size_t identical = 0;
    for (int i = 0; i < 10; ++i) {
        const auto r = eval::run_task(t, eval::RunOptions{}, static_cast<std::size_t>(i));
        const auto calls = invocation_bytes(r.events);
        if (i == 0) {
            first_calls = calls;
            first_drive = r.drive;
            v.expect(!calls.empty(), "no invocations recorded");
        }
        if (calls == first_calls && r.drive == first_drive) ++identical;
    }
    v.expect(identical == 10, std::to_string(identical) + "/10 runs identical");
    v.detail = std::to_string(identical) + "/10 runs byte-identical (" +
               std::to_string(std::count(first_calls.begin(), first_calls.end(), '\n')) + " invocations, " +
               std::to_string(first_drive.size()) + " files)";
}

// ---------------------------------------------------------------- 6

void state_recovery(Verdict& v) {
    const auto golden = eval::run_task(task("case_study"), replay());
    const auto rec = eval::run_task(task("case_study_recovery"), replay());
    v.expect(golden.passed, "golden run failed");
    v.expect(rec.status == "done", "recovery run ended " + rec.status);
    v.expect(rec.drive == golden.drive, "final drive differs from the unbroken run");

    bool failed_exec = false, truncated = false, resumed = false;
    std::string expected_next, noted_next;
    json last_todos = json::array();
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
        const auto& e = rec.events[i];
        if (e.kind == EventKind::todo_write) last_todos = e.data["todos"];
        if (e.kind == EventKind::execution_result && e.data["execution"].value("exit_status", "") != "success") failed_exec = true;
        if (e.kind == EventKind::context_truncated) truncated = true;
        if (e.kind == EventKind::recovery && expected_next.empty()) {
            for (const auto& item : last_todos) {
                if (item["status"] != "completed") {
                    expected_next = item["content"];
                    break;
                }
            }
            noted_next = e.data.value("next_item", "");
            // the next plan update must advance that item and leave the completed prefix alone
            for (std::size_t j = i + 1; j < rec.events.size() && !resumed; ++j) {
                if (rec.events[j].kind != EventKind::todo_write) continue;
                for (const auto& item : rec.events[j].data["todos"]) {
                    if (item["content"] == expected_next) resumed = item["status"] != "pending";
                }
                break;
            }
        }
    }
    v.expect(failed_exec, "no failed execution in the recovery trace");
    v.expect(truncated, "visible history was never truncated");
    v.expect(!expected_next.empty(), "no recovery note after the failure");
    v.expect(noted_next == expected_next, "recovery points at '" + noted_next + "', first open item is '" + expected_next + "'");
    v.expect(resumed, "the plan did not resume at '" + expected_next + "'");
    v.detail = "resumed at '" + expected_next + "', " + std::to_string(rec.drive.size()) + " files match the unbroken run";
}

// ---------------------------------------------------------------- 7

json distractor(int i) {
    return {{"name", "svc" + std::to_string(i) + "__rotate_" + std::to_string(i)},
            {"summary", "Rotate sprocket " + std::to_string(i) + " on the widget line"},
            {"tags", {"widget", "sprocket"}},
            {"parameters", {{"type", "object"}, {"properties", json::object()}}}};
}

void progressive_disclosure(Verdict& v) {
    const auto manifest = read_json_file(testing::asset("manifests/case_study_tools.json"));
    registry::Registry small, big;
    small.import_manifest(manifest);
    big.import_manifest(manifest);
    json more{{"tools", json::array()}};
    for (int i = 0; i < 1000; ++i) more["tools"].push_back(distractor(i));
    big.import_manifest(more);

    const auto a = small.search_functions("fetch emails", 5);
    const auto b = big.search_functions("fetch emails", 5);
    const auto ta = metrics::count_tokens(registry::render_hits(a));
    const auto tb = metrics::count_tokens(registry::render_hits(b));
    v.expect(small.size() == 10, "small registry has " + std::to_string(small.size()) + " tools");
    v.expect(big.size() == 1010, "large registry has " + std::to_string(big.size()) + " tools");
    v.expect(!a.empty() && !b.empty() && a.front().descriptor.name == b.front().descriptor.name, "top hit changed");
    v.expect(ta == tb, "result tokens " + std::to_string(ta) + " vs " + std::to_string(tb));

    toolhost::ToolHost host(big);
    host.load_fixture("s", toolhost::load_fixture_file(testing::asset("fixtures/case_study.json")));
    toolhost::InvocationContext ctx{"s", "exec-1", {"outlook__list_emails"}};
    std::string kind = "none";
    try {
        host.invoke("onedrive__upload_file", {{"path", "x.pdf"}, {"content", "x"}}, ctx);
    } catch (const Error& e) {
        kind = std::string(to_string(e.kind()));
    }
    v.expect(kind == "NotLoaded", "unloaded tool gave " + kind);
    v.detail = "top hit " + (a.empty() ? std::string("-") : a.front().descriptor.name) + ", " + std::to_string(ta) + " tokens at 10 and " +
               std::to_string(tb) + " at 1010 tools; unloaded call -> " + kind;
}

// ---------------------------------------------------------------- 8

void aggregation_pipeline(Verdict& v) {
    const auto records = eval::load_records(testing::asset("records/reference_25.json"));
    std::set<std::string> tasks;
    std::size_t passed = 0, calls = 0;
    for (const auto& r : records) {
        tasks.insert(r.task_id);
        passed += r.passed ? 1 : 0;
        calls += r.assistant_calls;
    }
    v.expect(tasks.size() == 25 && records.size() == 25, "record set is not 25 tasks x 1 run");
    v.expect(passed == 24, std::to_string(passed) + " passed");
    v.expect(calls == 175, std::to_string(calls) + " calls");
    const auto row = eval::aggregate("reference", records);
    // oracle: one run, so the minimum is that run's rate
    const double want_correctness = 100.0 * static_cast<double>(passed) / static_cast<double>(records.size());
    const double want_calls = static_cast<double>(calls) / static_cast<double>(records.size());
    v.expect(row.correctness_min == want_correctness && want_correctness == 96.0, "correctness_min " + fmt(row.correctness_min));
    v.expect(row.avg_calls == want_calls && want_calls == 7.0, "avg_calls " + fmt(row.avg_calls));
    v.detail = "correctness_min " + fmt(row.correctness_min, 1) + "%, avg_calls " + fmt(row.avg_calls);
}

// ---------------------------------------------------------------- 9

struct ListenerRig {
    registry::Registry reg;
    toolhost::ToolHost host{reg};
    toolhost::InvocationContext ctx{"vectors", "exec-vectors",
                                    {"outlook__list_emails", "outlook__get_attachment", "onedrive__upload_file", "onedrive__list_files"}};
    sandbox::BridgeServer::Options opts;

    ListenerRig() {
        reg.import_manifest(read_json_file(testing::asset("manifests/case_study_tools.json")));
        host.load_fixture("vectors", toolhost::load_fixture_file(testing::asset("fixtures/case_study.json")));
        opts.token = random_hex(16);
        opts.dispatch = [this](const std::string& tool, const json& args) { return host.invoke(tool, args, ctx); };
        opts.reject = [this](const std::string& tool, const json& args, std::string_view kind, const std::string& msg) {
            host.record_rejection(tool, args, ctx, kind, msg);
        };
    }
};

void bridge_conformance(Verdict& v) {
    ListenerRig rig;
    sandbox::BridgeServer server(rig.opts);
    testing::LineClient client(server.port());
    v.expect(client.connected(), "cannot connect to the listener");

    std::ifstream in(testing::test_file("vectors/bridge_frames.jsonl"));
    v.expect(in.good(), "vector file missing");
    std::string line;
    std::size_t total = 0, answered = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto vec = json::parse(line);
        std::string send = vec["send"];
        testing::replace_token(send, rig.opts.token);
        const auto before = rig.host.log().size();
        const auto reply = client.roundtrip(send);
        const auto added = rig.host.log().size() - before;
        ++total;
        if (reply == vec["expect"].get<std::string>() && added == vec["records"].get<std::size_t>()) {
            ++answered;
        } else {
            v.expect(false, "vector " + vec["name"].get<std::string>() + " got " + reply);
        }
    }
    v.expect(total >= 15, "only " + std::to_string(total) + " vectors");
    v.expect(server.auth_failed() && client.closed_by_peer(), "bad token did not end the execution");

    // a fresh listener, bad token first: nothing may be recorded
    ListenerRig fresh;
    sandbox::BridgeServer guarded(fresh.opts);
    testing::LineClient intruder(guarded.port());
    const auto reply = intruder.roundtrip(R"({"id":1,"tool":"onedrive__upload_file","args":{"path":"x.pdf","content":"x"},"token":"nope"})");
    v.expect(fresh.host.log().size() == 0, std::to_string(fresh.host.log().size()) + " invocations after a bad token");
    v.expect(fresh.host.drive("vectors").empty(), "bad token frame wrote to the drive");
    v.expect(reply.find("\"ok\":false") != std::string::npos, "bad token frame was not refused");
    v.detail = std::to_string(answered) + "/" + std::to_string(total) + " vectors answered exactly; bad token -> " +
               std::to_string(fresh.host.log().size()) + " invocations";
}

// ---------------------------------------------------------------- 10

std::string sha256_oracle(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::set<std::string> oracle_tokens(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    std::set<std::string> out;
    static const std::regex word("[a-z0-9]+");
    for (auto it = std::sregex_iterator(s.begin(), s.end(), word); it != std::sregex_iterator(); ++it) out.insert(it->str());
    return out;
}

std::vector<std::string> oracle_rank(const json& manifest, const std::string& query, std::size_t k) {
    const auto q = oracle_tokens(query);
    std::vector<std::pair<int, std::string>> scored;
    for (const auto& t : manifest["tools"]) {
        std::set<std::string> tags;
        for (const auto& tag : t["tags"]) {
            const auto tt = oracle_tokens(tag.get<std::string>());
            tags.insert(tt.begin(), tt.end());
        }
        const auto name = oracle_tokens(t["name"].get<std::string>());
        const auto summary = oracle_tokens(t["summary"].get<std::string>());
        int score = 0;
        for (const auto& w : q) score += 3 * static_cast<int>(name.count(w)) + 2 * static_cast<int>(tags.count(w)) + static_cast<int>(summary.count(w));
        if (score > 0) scored.emplace_back(score, t["name"].get<std::string>());
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].second);
    return out;
}

void property_suites(Verdict& v) {
    constexpr int kCases = 1000;
    std::mt19937 rng(20251220);

    // todo state machine: every accepted write keeps each surviving item at or above its old rank
    std::size_t todo_cases = 0, todo_bad = 0, accepted = 0, rejected = 0;
    const std::vector<std::string> contents{"load", "fetch", "process", "upload"};
    for (int trial = 0; trial < kCases; ++trial) {
        todos::TodoStore store;
        store.open_session("s");
        for (int step = 0; step < 6; ++step) {
            const auto before = store.get_todos("s");
            std::vector<todos::TodoItem> next;
            for (const auto& c : contents) {
                if (rng() % 5 == 0) continue;
                next.push_back({c, static_cast<todos::Status>(rng() % 3)});
            }
            bool backward = false;
            for (const auto& o : before.items) {
                for (const auto& n : next) backward = backward || (o.content == n.content && static_cast<int>(n.status) < static_cast<int>(o.status));
            }
            bool ok = true;
            try {
                store.write_todos("s", next);
            } catch (const Error&) {
                ok = false;
            }
            ++todo_cases;
            ok ? ++accepted : ++rejected;
            const auto after = store.get_todos("s");
            if (backward && ok) ++todo_bad;
            if (!ok && after != before) ++todo_bad;
        }
    }
    v.expect(todo_bad == 0, std::to_string(todo_bad) + " todo writes broke the forward-only rule");
    v.expect(accepted > 0 && rejected > 0, "todo fuzz never exercised both outcomes");

    // skill immutability: hashes and sources survive a restart
    testing::TempDir dir;
    skillbank::RegistrationChecks checks{[](const skillbank::ValidationRecord&) { return true; }, [](const std::string&) { return true; }};
    std::vector<std::tuple<std::string, int, std::string, std::string>> written;
    std::size_t skill_bad = 0;
    for (int round = 0; round < 10; ++round) {
        skillbank::SkillBank bank(dir.path() / "skills");
        for (const auto& [name, version, source, hash] : written) {
            const auto s = bank.get_skill(name, version);
            if (s.source != source || s.content_hash != hash || sha256_oracle(s.source) != hash) ++skill_bad;
        }
        for (int i = 0; i < kCases / 10; ++i) {
            skillbank::SkillDraft d;
            d.name = "skill_" + std::to_string(rng() % 37);
            d.description = "random skill " + std::to_string(rng());
            d.source = "async def agent_main(n=" + std::to_string(rng() % 1000) + "):\n    return '" + random_hex(8) + "' * n\n";
            d.required_tools = {"outlook__list_emails"};
            d.validation = {"s", "exec", true};
            const auto s = bank.register_skill(d, checks);
            if (s.content_hash != sha256_oracle(d.source)) ++skill_bad;
            written.emplace_back(s.name, s.version, d.source, s.content_hash);
        }
    }
    {
        skillbank::SkillBank bank(dir.path() / "skills");
        for (const auto& [name, version, source, hash] : written) {
            const auto s = bank.get_skill(name, version);
            if (s.source != source || s.content_hash != hash) ++skill_bad;
        }
    }
    v.expect(written.size() >= static_cast<std::size_t>(kCases), "only " + std::to_string(written.size()) + " skills");
    v.expect(skill_bad == 0, std::to_string(skill_bad) + " skill hash mismatches across restarts");

    // search determinism: ranking is a pure function of registry contents, query and k
    const std::vector<std::string> vocab{"mail", "file", "list", "send", "sheet", "drive", "event", "row", "get", "put", "fetch", "emails"};
    auto word = [&] { return vocab[rng() % vocab.size()]; };
    std::size_t search_bad = 0;
    for (int trial = 0; trial < kCases; ++trial) {
        json manifest{{"tools", json::array()}};
        const int n = 1 + static_cast<int>(rng() % 25);
        for (int i = 0; i < n; ++i) {
            manifest["tools"].push_back({{"name", word() + "__t" + std::to_string(i)},
                                         {"summary", word() + " " + word() + " " + word()},
                                         {"tags", {word()}},
                                         {"parameters", {{"type", "object"}, {"properties", json::object()}}}});
        }
        json shuffled = manifest;
        std::shuffle(shuffled["tools"].begin(), shuffled["tools"].end(), rng);
        registry::Registry a, b;
        a.import_manifest(manifest);
        b.import_manifest(shuffled);
        const std::string query = word() + " " + word();
        const std::size_t k = 1 + rng() % 6;
        const auto ha = a.search_functions(query, k);
        const auto again = a.search_functions(query, k);
        const auto hb = b.search_functions(query, k);
        const auto want = oracle_rank(manifest, query, k);
        bool same = ha.size() == want.size() && hb.size() == want.size() && again.size() == want.size();
        for (std::size_t i = 0; same && i < want.size(); ++i) {
            same = ha[i].descriptor.name == want[i] && hb[i].descriptor == ha[i].descriptor && again[i].descriptor == ha[i].descriptor;
        }
        if (!same) ++search_bad;
    }
    v.expect(search_bad == 0, std::to_string(search_bad) + " search results differed from the oracle");
    v.detail = std::to_string(todo_cases) + " todo writes (" + std::to_string(rejected) + " rejected), " + std::to_string(written.size()) +
               " skills over 11 restarts, " + std::to_string(kCases) + " random registries; 0 violations";
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"fast path on the case-study fixture", fast_path_case_study},
        {"context cost independent of payload size", payload_independence},
        {"skill reuse skips the model", reuse_fast_path},
        {"react cost matches brute-force expansion", react_cost_model},
        {"ten skill runs are byte-identical", determinism},
        {"state recovery after a failure and truncation", state_recovery},
        {"progressive disclosure with 1000 distractors", progressive_disclosure},
        {"aggregation over the reference records", aggregation_pipeline},
        {"bridge listener conformance", bridge_conformance},
        {"property suites", property_suites},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.failures.push_back(std::string("threw: ") + e.what());
        }
        const bool pass = v.failures.empty();
        failed += pass ? 0 : 1;
        std::string why;
        for (const auto& f : v.failures) why += (why.empty() ? "" : "; ") + f;
        std::cout << "criterion " << (i + 1) << " " << (pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
                  << (pass ? v.detail : why + ends(v.detail)) << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
