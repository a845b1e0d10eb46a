#include "codemem/error.hpp"
#include "codemem/skillbank.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace codemem;
using namespace codemem::skillbank;

namespace {

const char* kBridgeV1 = R"(async def agent_main(days_back=15):
    return days_back
)";

RegistrationChecks accept_all() {
    return {[](const ValidationRecord&) { return true; },
            [](const std::string& t) { return t.rfind("outlook__", 0) == 0 || t.rfind("onedrive__", 0) == 0; }};
}

SkillDraft draft(const std::string& name, const std::string& source, const std::string& description = "bridge") {
    SkillDraft d;
    d.name = name;
    d.source = source;
    d.description = description;
    d.required_tools = {"outlook__list_emails"};
    d.validation = {"s1", "exec-1", true};
    return d;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::IoError;
}

} // namespace

TEST_CASE("versions are assigned monotonically and old versions stay frozen") {
    SkillBank bank;
    const auto v1 = bank.register_skill(draft("outlook_onedrive_bridge", kBridgeV1), accept_all());
    CHECK(v1.version == 1);
    CHECK(v1.signature == "days_back=15");
    CHECK(v1.content_hash == sha256_hex(kBridgeV1));

    const std::string modified = std::string(kBridgeV1) + "# tweak\n";
    const auto v2 = bank.register_skill(draft("outlook_onedrive_bridge", modified), accept_all());
    CHECK(v2.version == 2);

    CHECK(bank.get_skill("outlook_onedrive_bridge").version == 2);
    const auto again = bank.get_skill("outlook_onedrive_bridge", 1);
    CHECK(again.source == kBridgeV1);
    CHECK(again.content_hash == v1.content_hash);
    CHECK(kind_of([&] { (void)bank.get_skill("ghost"); }) == ErrorKind::UnknownSkill);
    CHECK(kind_of([&] { (void)bank.get_skill("outlook_onedrive_bridge", 3); }) == ErrorKind::UnknownVersion);
}

TEST_CASE("registration preconditions") {
    SkillBank bank;
    auto failed_exec = accept_all();
    failed_exec.execution_succeeded = [](const ValidationRecord&) { return false; };
    CHECK(kind_of([&] { bank.register_skill(draft("b", kBridgeV1), failed_exec); }) == ErrorKind::ValidationMissing);

    auto no_id = draft("b", kBridgeV1);
    no_id.validation.execution_id.clear();
    CHECK(kind_of([&] { bank.register_skill(no_id, accept_all()); }) == ErrorKind::ValidationMissing);

    CHECK(kind_of([&] { bank.register_skill(draft("b", ""), accept_all()); }) == ErrorKind::EmptySource);

    auto bad_tool = draft("b", kBridgeV1);
    bad_tool.required_tools = {"gmail__send"};
    CHECK(kind_of([&] { bank.register_skill(bad_tool, accept_all()); }) == ErrorKind::UnknownTool);

    auto wrong_entry = draft("b", "def helper():\n    pass\n");
    CHECK(kind_of([&] { bank.register_skill(wrong_entry, accept_all()); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { bank.register_skill(draft("../escape", kBridgeV1), accept_all()); }) ==
          ErrorKind::InvalidArgument);
    CHECK_FALSE(bank.contains("b"));
}

TEST_CASE("entrypoint detection is textual") {
    CHECK(defines_entrypoint("def agent_main():\n  pass", "agent_main"));
    CHECK(defines_entrypoint("import x\n\nasync def agent_main(a, b=2):\n  pass", "agent_main"));
    CHECK_FALSE(defines_entrypoint("def agent_main_helper():\n  pass", "agent_main"));
    CHECK_FALSE(defines_entrypoint("x = 'def agent_main'", "agent_main"));
    CHECK(extract_signature("def run(path, *, n=3):\n", "run") == std::optional<std::string>("path, *, n=3"));
}

TEST_CASE("search_skills ranks latest versions by name and description") {
    SkillBank bank;
    CHECK(bank.search_skills("email attachment", 5).empty());
    bank.register_skill(draft("outlook_onedrive_bridge", kBridgeV1,
                              "Copy PDF and XLSX email attachment files into OneDrive folders per company"),
                        accept_all());
    bank.register_skill(draft("weekly_digest", "def agent_main():\n    pass\n", "Summarise the week of calendar events"),
                        accept_all());
    bank.register_skill(draft("inbox_zero", "def agent_main():\n    pass\n", "Archive every email older than a month"),
                        accept_all());

    // Oracle by hand: bridge = 1 (email) + 1 (attachment); inbox_zero = 1 (email); digest = 0.
    const auto hits = bank.search_skills("email attachment", 5);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].name == "outlook_onedrive_bridge");
    CHECK(hits[0].score == 2);
    CHECK(hits[1].name == "inbox_zero");
    CHECK(bank.search_skills("zzqq", 5).empty());

    bank.deprecate("outlook_onedrive_bridge", 1);
    CHECK(bank.search_skills("email attachment", 5).size() == 1);
    CHECK(bank.get_skill("outlook_onedrive_bridge").deprecated);
}

TEST_CASE("persisted skills survive a restart byte-for-byte") {
    testing::TempDir dir;
    std::string hash;
    {
        SkillBank bank(dir.path() / "skills");
        hash = bank.register_skill(draft("bridge", kBridgeV1), accept_all()).content_hash;
        bank.register_skill(draft("bridge", std::string(kBridgeV1) + "\n# v2\n"), accept_all());
    }
    CHECK(std::filesystem::exists(dir.path() / "skills" / "bridge" / "v1.code"));
    CHECK(std::filesystem::exists(dir.path() / "skills" / "bridge" / "v2.meta.json"));
    SkillBank reopened(dir.path() / "skills");
    const auto v1 = reopened.get_skill("bridge", 1);
    CHECK(v1.source == kBridgeV1);
    CHECK(v1.content_hash == hash);
    CHECK(reopened.get_skill("bridge").version == 2);
    CHECK(reopened.register_skill(draft("bridge", "def agent_main():\n    pass\n"), accept_all()).version == 3);
}

TEST_CASE("tampered sources are detected on load") {
    testing::TempDir dir;
    {
        SkillBank bank(dir.path());
        bank.register_skill(draft("bridge", kBridgeV1), accept_all());
    }
    write_file_atomic(dir.path() / "bridge" / "v1.code", "def agent_main():\n    evil()\n");
    CHECK(kind_of([&] { SkillBank reopened(dir.path()); }) == ErrorKind::IntegrityError);
}
