#pragma once

#include "codemem/util.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace codemem::registry {

inline constexpr std::size_t kMaxSummaryLength = 200;
inline constexpr std::size_t kDefaultSearchK = 5;

struct ToolDescriptor {
    std::string name;
    std::string summary;
    std::set<std::string> tags;
    std::string binding_ref;

    bool operator==(const ToolDescriptor&) const = default;
};

struct ToolSchema {
    ToolDescriptor descriptor;
    std::string long_description;
    /// JSON-Schema subset: {"type":"object","properties":{...},"required":[...]}.
    /// Ordered so generated stubs keep the manifest's parameter order.
    ordered_json parameters;
    std::string returns;
    /// Raw binding document from the manifest; interpreted by the tool host.
    json binding;
};

struct SearchHit {
    ToolDescriptor descriptor;
    int score = 0;
};

/// Names loaded into one session. Owned by the session, never by the registry.
using LoadedSet = std::set<std::string>;

bool valid_tool_name(std::string_view name);

/// Throws ParseError describing the first violation of the parameter grammar.
void validate_parameters(const ordered_json& parameters);

/// score = 3*|q ∩ name| + 2*|q ∩ tags| + 1*|q ∩ summary| over word tokens.
int score_tool(const std::set<std::string>& query_tokens, const ToolDescriptor& tool);

/// One line per hit, `- name: summary`. This is what the model sees.
std::string render_hits(const std::vector<SearchHit>& hits);
std::string render_schemas(const std::vector<ToolSchema>& schemas);

json to_json(const ToolDescriptor& d);
json to_json(const ToolSchema& s);

class Registry {
public:
    Registry();

    /// Atomic: either every tool in the document is added or none is.
    std::size_t import_manifest_text(std::string_view document);
    std::size_t import_manifest(const json& document);

    /// Ranked by (score desc, name asc); zero-score tools are dropped.
    [[nodiscard]] std::vector<SearchHit> search_functions(std::string_view query,
                                                          std::size_t k = kDefaultSearchK) const;

    /// Returns full schemas and extends `loaded`. Unknown names load nothing.
    std::vector<ToolSchema> load_functions(const std::vector<std::string>& names,
                                           LoadedSet& loaded) const;

    [[nodiscard]] std::vector<ToolSchema> schemas(const std::vector<std::string>& names) const;
    [[nodiscard]] std::optional<ToolSchema> find(std::string_view name) const;
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::vector<std::string> names() const;

private:
    using Catalog = std::map<std::string, ToolSchema, std::less<>>;

    std::shared_ptr<const Catalog> snapshot() const;

    mutable std::mutex mutex_;
    std::shared_ptr<const Catalog> catalog_;
};

} // namespace codemem::registry
