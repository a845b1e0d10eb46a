#pragma once

#include "codemem/util.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace codemem::skillbank {

inline constexpr const char* kDefaultEntrypoint = "agent_main";

struct ValidationRecord {
    std::string session_id;
    std::string execution_id;
    bool user_confirmed = false;
};

struct Skill {
    std::string name;
    int version = 0;
    std::string source;
    std::string entrypoint = kDefaultEntrypoint;
    std::string signature;
    std::string description;
    std::vector<std::string> required_tools;
    ValidationRecord validation;
    std::string content_hash;
    std::string created_at;
    bool deprecated = false;
};

/// Everything a caller supplies; version, hash and timestamp are assigned.
struct SkillDraft {
    std::string name;
    std::string description;
    std::string source;
    std::string entrypoint = kDefaultEntrypoint;
    std::string signature;
    std::vector<std::string> required_tools;
    ValidationRecord validation;
};

/// Hooks into the rest of the runtime so the bank stays free of session state.
struct RegistrationChecks {
    /// True when the referenced execution exists in that session and succeeded.
    std::function<bool(const ValidationRecord&)> execution_succeeded;
    std::function<bool(const std::string&)> tool_known;
};

struct SkillHit {
    std::string name;
    int version = 0;
    std::string description;
    int score = 0;
};

bool valid_skill_name(std::string_view name);

/// True when `source` contains `def <entrypoint>(` (optionally `async def`).
bool defines_entrypoint(std::string_view source, std::string_view entrypoint);

/// Parameter list text of the entrypoint definition, e.g. "days_back=15".
std::optional<std::string> extract_signature(std::string_view source, std::string_view entrypoint);

json to_json(const Skill& skill, bool include_source = true);
Skill skill_from_json(const json& meta, std::string source);

/// What the model is shown about a skill: its call shape and purpose, never the body.
std::string render_for_llm(const Skill& skill);

class SkillBank {
public:
    /// In-memory bank.
    SkillBank();
    /// Persistent bank rooted at `root` (layout: <root>/<name>/v<N>.code + .meta.json).
    explicit SkillBank(std::filesystem::path root);

    Skill register_skill(SkillDraft draft, const RegistrationChecks& checks);

    [[nodiscard]] Skill get_skill(const std::string& name, std::optional<int> version = std::nullopt) const;

    /// 3*|q ∩ name| + 1*|q ∩ description| over latest, non-deprecated versions.
    [[nodiscard]] std::vector<SkillHit> search_skills(std::string_view query, std::size_t k = 5) const;

    /// Hides a version from search; it remains retrievable.
    void deprecate(const std::string& name, int version);

    [[nodiscard]] std::vector<Skill> list_latest() const;
    [[nodiscard]] std::vector<Skill> versions(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const;

private:
    using Versions = std::vector<std::shared_ptr<const Skill>>;

    void load_from_disk();
    void persist(const Skill& skill, bool write_code) const;

    std::optional<std::filesystem::path> root_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Versions, std::less<>> skills_;
};

} // namespace codemem::skillbank
