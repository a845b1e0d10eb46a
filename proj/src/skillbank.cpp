#include "codemem/skillbank.hpp"

#include "codemem/error.hpp"

#include <algorithm>
#include <mutex>
#include <regex>

namespace codemem::skillbank {

namespace fs = std::filesystem;

namespace {

std::regex def_pattern(std::string_view entrypoint) {
    return std::regex("(^|\\n)[ \\t]*(async[ \\t]+)?def[ \\t]+" + std::string(entrypoint) +
                      "[ \\t]*\\(([^)]*)\\)");
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& t : a) n += b.count(t);
    return n;
}

} // namespace

bool valid_skill_name(std::string_view name) {
    static const std::regex pattern("[a-z0-9_][a-z0-9_\\-]*");
    return name.size() <= 128 && std::regex_match(name.begin(), name.end(), pattern);
}

bool defines_entrypoint(std::string_view source, std::string_view entrypoint) {
    return extract_signature(source, entrypoint).has_value();
}

std::optional<std::string> extract_signature(std::string_view source, std::string_view entrypoint) {
    static const std::regex identifier("[A-Za-z_][A-Za-z0-9_]*");
    if (!std::regex_match(entrypoint.begin(), entrypoint.end(), identifier)) return std::nullopt;
    std::match_results<std::string_view::const_iterator> m;
    const auto re = def_pattern(entrypoint);
    if (!std::regex_search(source.begin(), source.end(), m, re)) return std::nullopt;
    return m[3].str();
}

json to_json(const Skill& s, bool include_source) {
    json j{{"name", s.name},
           {"version", s.version},
           {"entrypoint", s.entrypoint},
           {"signature", s.signature},
           {"description", s.description},
           {"required_tools", s.required_tools},
           {"validation",
            {{"session_id", s.validation.session_id},
             {"execution_id", s.validation.execution_id},
             {"user_confirmed", s.validation.user_confirmed}}},
           {"content_hash", s.content_hash},
           {"created_at", s.created_at},
           {"deprecated", s.deprecated}};
    if (include_source) j["source"] = s.source;
    return j;
}

Skill skill_from_json(const json& meta, std::string source) {
    Skill s;
    s.name = meta.at("name").get<std::string>();
    s.version = meta.at("version").get<int>();
    s.entrypoint = meta.value("entrypoint", std::string(kDefaultEntrypoint));
    s.signature = meta.value("signature", std::string{});
    s.description = meta.value("description", std::string{});
    s.required_tools = meta.value("required_tools", std::vector<std::string>{});
    const auto& v = meta.at("validation");
    s.validation = {v.value("session_id", std::string{}), v.value("execution_id", std::string{}),
                    v.value("user_confirmed", false)};
    s.content_hash = meta.at("content_hash").get<std::string>();
    s.created_at = meta.value("created_at", std::string{});
    s.deprecated = meta.value("deprecated", false);
    s.source = std::move(source);
    return s;
}

std::string render_for_llm(const Skill& s) {
    return "skill " + s.name + "@v" + std::to_string(s.version) + ": " + s.entrypoint + "(" + s.signature +
           ") - " + s.description + "\n";
}

SkillBank::SkillBank() = default;

SkillBank::SkillBank(fs::path root) : root_(std::move(root)) {
    fs::create_directories(*root_);
    load_from_disk();
}

void SkillBank::load_from_disk() {
    static const std::regex meta_name("v([0-9]+)\\.meta\\.json");
    for (const auto& dir : fs::directory_iterator(*root_)) {
        if (!dir.is_directory()) continue;
        std::map<int, Skill> found;
        for (const auto& file : fs::directory_iterator(dir.path())) {
            std::smatch m;
            const auto fname = file.path().filename().string();
            if (!std::regex_match(fname, m, meta_name)) continue;
            const int version = std::stoi(m[1].str());
            const auto code_path = dir.path() / ("v" + std::to_string(version) + ".code");
            auto skill = skill_from_json(read_json_file(file.path()), read_text_file(code_path));
            if (sha256_hex(skill.source) != skill.content_hash) {
                throw Error(ErrorKind::IntegrityError,
                            "hash mismatch for " + skill.name + "@v" + std::to_string(version));
            }
            if (skill.version != version) {
                throw Error(ErrorKind::IntegrityError, "version mismatch in " + file.path().string());
            }
            found.emplace(version, std::move(skill));
        }
        if (found.empty()) continue;
        Versions versions;
        int expected = 1;
        for (auto& [v, skill] : found) {
            if (v != expected++) {
                throw Error(ErrorKind::IntegrityError, "version gap for skill " + skill.name);
            }
            versions.push_back(std::make_shared<const Skill>(std::move(skill)));
        }
        skills_.emplace(versions.front()->name, std::move(versions));
    }
}

void SkillBank::persist(const Skill& skill, bool write_code) const {
    if (!root_) return;
    const auto dir = *root_ / skill.name;
    const auto stem = "v" + std::to_string(skill.version);
    // The meta file is written last; a code file without meta is ignored on load.
    if (write_code) write_file_atomic(dir / (stem + ".code"), skill.source);
    write_file_atomic(dir / (stem + ".meta.json"), to_json(skill, false).dump(2) + "\n");
}

Skill SkillBank::register_skill(SkillDraft draft, const RegistrationChecks& checks) {
    if (draft.source.empty()) throw Error(ErrorKind::EmptySource, "skill source is empty");
    if (!valid_skill_name(draft.name)) {
        throw Error(ErrorKind::InvalidArgument, "invalid skill name '" + draft.name + "'");
    }
    if (draft.entrypoint.empty()) draft.entrypoint = kDefaultEntrypoint;
    const auto signature = extract_signature(draft.source, draft.entrypoint);
    if (!signature) {
        throw Error(ErrorKind::InvalidArgument,
                    "source does not define entrypoint '" + draft.entrypoint + "'");
    }
    std::string unknown;
    for (const auto& t : draft.required_tools) {
        if (!checks.tool_known || !checks.tool_known(t)) unknown += (unknown.empty() ? "" : ", ") + t;
    }
    if (!unknown.empty()) throw Error(ErrorKind::UnknownTool, "unknown required tools: " + unknown);
    if (!checks.execution_succeeded || draft.validation.execution_id.empty() ||
        !checks.execution_succeeded(draft.validation)) {
        throw Error(ErrorKind::ValidationMissing,
                    "skill '" + draft.name + "' does not reference a successful execution");
    }

    Skill skill;
    skill.name = std::move(draft.name);
    skill.description = std::move(draft.description);
    skill.entrypoint = std::move(draft.entrypoint);
    skill.signature = draft.signature.empty() ? *signature : std::move(draft.signature);
    skill.required_tools = std::move(draft.required_tools);
    skill.validation = std::move(draft.validation);
    skill.content_hash = sha256_hex(draft.source);
    skill.source = std::move(draft.source);
    skill.created_at = utc_now_iso();

    std::unique_lock lock(mutex_);
    auto it = skills_.find(skill.name);
    skill.version = it == skills_.end() ? 1 : static_cast<int>(it->second.size()) + 1;
    persist(skill, true);
    skills_[skill.name].push_back(std::make_shared<const Skill>(skill));
    return skill;
}

Skill SkillBank::get_skill(const std::string& name, std::optional<int> version) const {
    std::shared_lock lock(mutex_);
    auto it = skills_.find(name);
    if (it == skills_.end() || it->second.empty()) {
        throw Error(ErrorKind::UnknownSkill, "unknown skill '" + name + "'");
    }
    if (!version) return *it->second.back();
    if (*version < 1 || *version > static_cast<int>(it->second.size())) {
        throw Error(ErrorKind::UnknownVersion,
                    "skill '" + name + "' has no version " + std::to_string(*version));
    }
    return *it->second[static_cast<std::size_t>(*version - 1)];
}

std::vector<SkillHit> SkillBank::search_skills(std::string_view query, std::size_t k) const {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    const auto q = word_tokens(query);
    std::vector<SkillHit> hits;
    std::shared_lock lock(mutex_);
    for (const auto& [name, versions] : skills_) {
        const auto& latest = *versions.back();
        if (latest.deprecated) continue;
        const int score = static_cast<int>(3 * overlap(q, word_tokens(latest.name)) +
                                           overlap(q, word_tokens(latest.description)));
        if (score > 0) hits.push_back({latest.name, latest.version, latest.description, score});
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const SkillHit& a, const SkillHit& b) { return a.score > b.score; });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

void SkillBank::deprecate(const std::string& name, int version) {
    std::unique_lock lock(mutex_);
    auto it = skills_.find(name);
    if (it == skills_.end()) throw Error(ErrorKind::UnknownSkill, "unknown skill '" + name + "'");
    if (version < 1 || version > static_cast<int>(it->second.size())) {
        throw Error(ErrorKind::UnknownVersion, "skill '" + name + "' has no version " + std::to_string(version));
    }
    auto& slot = it->second[static_cast<std::size_t>(version - 1)];
    Skill updated = *slot;
    updated.deprecated = true;
    persist(updated, false);
    slot = std::make_shared<const Skill>(std::move(updated));
}

std::vector<Skill> SkillBank::list_latest() const {
    std::shared_lock lock(mutex_);
    std::vector<Skill> out;
    for (const auto& [_, versions] : skills_) out.push_back(*versions.back());
    return out;
}

std::vector<Skill> SkillBank::versions(const std::string& name) const {
    std::shared_lock lock(mutex_);
    auto it = skills_.find(name);
    if (it == skills_.end()) throw Error(ErrorKind::UnknownSkill, "unknown skill '" + name + "'");
    std::vector<Skill> out;
    for (const auto& s : it->second) out.push_back(*s);
    return out;
}

bool SkillBank::contains(const std::string& name) const {
    std::shared_lock lock(mutex_);
    return skills_.count(name) > 0;
}

} // namespace codemem::skillbank
