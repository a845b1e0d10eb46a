#include "codemem/registry.hpp"

#include "codemem/error.hpp"

#include <algorithm>
#include <regex>

namespace codemem::registry {

namespace {

const std::set<std::string>& allowed_types() {
    static const std::set<std::string> types{"string", "integer", "number", "boolean",
                                             "array",  "object",  "null"};
    return types;
}

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& t : a) n += b.count(t);
    return n;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

ToolSchema parse_tool(const json& entry) {
    if (!entry.is_object()) throw Error(ErrorKind::ParseError, "tool entry must be an object");
    auto str_field = [&](const char* key, bool required) -> std::string {
        auto it = entry.find(key);
        if (it == entry.end()) {
            if (required) throw Error(ErrorKind::ParseError, std::string("tool entry missing '") + key + "'");
            return {};
        }
        if (!it->is_string()) throw Error(ErrorKind::ParseError, std::string("'") + key + "' must be a string");
        return it->get<std::string>();
    };

    ToolSchema schema;
    auto& d = schema.descriptor;
    d.name = str_field("name", true);
    if (!valid_tool_name(d.name)) throw Error(ErrorKind::ParseError, "invalid tool name '" + d.name + "'");
    d.summary = str_field("summary", true);
    if (codepoint_count(d.summary) > kMaxSummaryLength) {
        throw Error(ErrorKind::ParseError, "summary of '" + d.name + "' exceeds 200 characters");
    }
    if (auto it = entry.find("tags"); it != entry.end()) {
        if (!it->is_array()) throw Error(ErrorKind::ParseError, "'tags' must be an array");
        for (const auto& tag : *it) {
            if (!tag.is_string()) throw Error(ErrorKind::ParseError, "tags must be strings");
            d.tags.insert(lower(tag.get<std::string>()));
        }
    }
    schema.long_description = str_field("long_description", false);
    schema.returns = str_field("returns", false);
    if (auto it = entry.find("parameters"); it != entry.end()) {
        schema.parameters = ordered_json::parse(it->dump());
    } else {
        schema.parameters = ordered_json{{"type", "object"}, {"properties", ordered_json::object()}};
    }
    validate_parameters(schema.parameters);
    schema.binding = entry.value("binding", json::object());
    if (!schema.binding.is_object()) throw Error(ErrorKind::ParseError, "'binding' must be an object");
    d.binding_ref = schema.binding.value("ref", d.name);
    return schema;
}

} // namespace

bool valid_tool_name(std::string_view name) {
    static const std::regex pattern("[a-z0-9_]+(__[a-z0-9_]+)?");
    return !name.empty() && std::regex_match(name.begin(), name.end(), pattern);
}

void validate_parameters(const ordered_json& p) {
    if (!p.is_object()) throw Error(ErrorKind::ParseError, "parameters must be an object");
    if (p.value("type", std::string{}) != "object") {
        throw Error(ErrorKind::ParseError, "parameters.type must be \"object\"");
    }
    const auto props = p.find("properties");
    if (props == p.end() || !props->is_object()) {
        throw Error(ErrorKind::ParseError, "parameters.properties must be an object");
    }
    for (const auto& [key, prop] : props->items()) {
        if (!prop.is_object() || !prop.contains("type") || !prop["type"].is_string() ||
            allowed_types().count(prop["type"].get<std::string>()) == 0) {
            throw Error(ErrorKind::ParseError, "property '" + key + "' needs a supported type");
        }
        if (prop.contains("description") && !prop["description"].is_string()) {
            throw Error(ErrorKind::ParseError, "property '" + key + "' description must be a string");
        }
    }
    if (auto req = p.find("required"); req != p.end()) {
        if (!req->is_array()) throw Error(ErrorKind::ParseError, "parameters.required must be an array");
        for (const auto& r : *req) {
            if (!r.is_string() || !props->contains(r.get<std::string>())) {
                throw Error(ErrorKind::ParseError, "required entry " + r.dump() + " is not a declared property");
            }
        }
    }
}

int score_tool(const std::set<std::string>& q, const ToolDescriptor& tool) {
    std::set<std::string> tag_tokens;
    for (const auto& tag : tool.tags) tag_tokens.merge(word_tokens(tag));
    return static_cast<int>(3 * intersection_size(q, word_tokens(tool.name)) +
                            2 * intersection_size(q, tag_tokens) +
                            intersection_size(q, word_tokens(tool.summary)));
}

std::string render_hits(const std::vector<SearchHit>& hits) {
    if (hits.empty()) return "no matching tools\n";
    std::string out;
    for (const auto& h : hits) out += "- " + h.descriptor.name + ": " + h.descriptor.summary + "\n";
    return out;
}

std::string render_schemas(const std::vector<ToolSchema>& schemas) {
    std::string out;
    for (const auto& s : schemas) {
        ordered_json doc;
        doc["name"] = s.descriptor.name;
        doc["description"] = s.long_description.empty() ? s.descriptor.summary : s.long_description;
        doc["parameters"] = s.parameters;
        doc["returns"] = s.returns;
        out += doc.dump() + "\n";
    }
    return out;
}

json to_json(const ToolDescriptor& d) {
    return json{{"name", d.name}, {"summary", d.summary}, {"tags", d.tags}, {"binding_ref", d.binding_ref}};
}

json to_json(const ToolSchema& s) {
    auto j = to_json(s.descriptor);
    j["long_description"] = s.long_description;
    j["parameters"] = json::parse(s.parameters.dump());
    j["returns"] = s.returns;
    j["binding"] = s.binding;
    return j;
}

Registry::Registry() : catalog_(std::make_shared<const Catalog>()) {}

std::shared_ptr<const Registry::Catalog> Registry::snapshot() const {
    std::lock_guard lock(mutex_);
    return catalog_;
}

std::size_t Registry::import_manifest_text(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("manifest is not valid JSON: ") + e.what());
    }
    return import_manifest(doc);
}

std::size_t Registry::import_manifest(const json& document) {
    if (!document.is_object() || !document.contains("tools") || !document["tools"].is_array()) {
        throw Error(ErrorKind::ParseError, "manifest must be an object with a 'tools' array");
    }
    std::vector<ToolSchema> parsed;
    for (const auto& entry : document["tools"]) parsed.push_back(parse_tool(entry));

    std::lock_guard lock(mutex_);
    auto next = std::make_shared<Catalog>(*catalog_);
    for (auto& schema : parsed) {
        const auto name = schema.descriptor.name;
        if (!next->emplace(name, std::move(schema)).second) {
            throw Error(ErrorKind::DuplicateName, "tool '" + name + "' is already registered");
        }
    }
    catalog_ = std::move(next);
    return parsed.size();
}

std::vector<SearchHit> Registry::search_functions(std::string_view query, std::size_t k) const {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    const auto cat = snapshot();
    if (cat->empty()) throw Error(ErrorKind::EmptyRegistry, "the tool registry is empty");
    const auto q = word_tokens(query);
    std::vector<SearchHit> hits;
    for (const auto& [name, schema] : *cat) {
        const int score = score_tool(q, schema.descriptor);
        if (score > 0) hits.push_back({schema.descriptor, score});
    }
    // Catalog iteration is already name-ascending; stable sort keeps that for ties.
    std::stable_sort(hits.begin(), hits.end(),
                     [](const SearchHit& a, const SearchHit& b) { return a.score > b.score; });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<ToolSchema> Registry::schemas(const std::vector<std::string>& names) const {
    const auto cat = snapshot();
    std::vector<ToolSchema> out;
    std::string missing;
    for (const auto& n : names) {
        auto it = cat->find(n);
        if (it == cat->end()) {
            missing += (missing.empty() ? "" : ", ") + n;
        } else {
            out.push_back(it->second);
        }
    }
    if (!missing.empty()) throw Error(ErrorKind::UnknownTool, "unknown tools: " + missing);
    return out;
}

std::vector<ToolSchema> Registry::load_functions(const std::vector<std::string>& names,
                                                 LoadedSet& loaded) const {
    auto out = schemas(names);
    for (const auto& s : out) loaded.insert(s.descriptor.name);
    return out;
}

std::optional<ToolSchema> Registry::find(std::string_view name) const {
    const auto cat = snapshot();
    auto it = cat->find(name);
    if (it == cat->end()) return std::nullopt;
    return it->second;
}

bool Registry::contains(std::string_view name) const { return snapshot()->count(name) > 0; }

std::size_t Registry::size() const { return snapshot()->size(); }

std::vector<std::string> Registry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : *snapshot()) out.push_back(name);
    return out;
}

} // namespace codemem::registry
