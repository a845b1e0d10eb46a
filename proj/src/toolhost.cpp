#include "codemem/toolhost.hpp"

#include "codemem/error.hpp"

#include <algorithm>
#include <sstream>

namespace codemem::toolhost {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_ws(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

[[noreturn]] void filter_error(const std::string& token, const std::string& why) {
    throw Error(ErrorKind::FilterParseError, "filter: " + why + " at token '" + token + "'");
}

const std::string& require_string(const json& args, const char* key) {
    auto it = args.find(key);
    if (it == args.end() || !it->is_string()) {
        throw Error(ErrorKind::InvalidArgument, std::string("argument '") + key + "' must be a string");
    }
    return it->get_ref<const std::string&>();
}

const FixtureEmail& find_email(const FixtureWorld& world, const std::string& id) {
    for (const auto& e : world.emails) {
        if (e.id == id) return e;
    }
    throw Error(ErrorKind::UnknownEmail, "no email with id '" + id + "'");
}

std::string normalize_drive_path(const std::string& raw) {
    std::string path = raw;
    while (!path.empty() && path.front() == '/') path.erase(path.begin());
    if (path.empty()) throw Error(ErrorKind::InvalidArgument, "path must be nonempty");
    if (path.back() == '/') throw Error(ErrorKind::InvalidArgument, "path '" + raw + "' names a folder, not a file");
    if (path.find("//") != std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, "path '" + raw + "' has an empty segment");
    }
    return path;
}

bool type_matches(const std::string& type, const json& v) {
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "array") return v.is_array();
    if (type == "object") return v.is_object();
    if (type == "null") return v.is_null();
    return false;
}

} // namespace

std::string synthesize_content(const std::string& filename, std::size_t size) {
    const std::string unit = filename + "|";
    std::string out;
    out.reserve(size);
    while (out.size() < size) out.append(unit, 0, std::min(unit.size(), size - out.size()));
    return out;
}

FixtureWorld fixture_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("emails") || !doc["emails"].is_array()) {
        throw Error(ErrorKind::ParseError, "fixture must be an object with an 'emails' array");
    }
    FixtureWorld w;
    w.name = doc.value("name", std::string("fixture"));
    if (doc.contains("now") && doc["now"].is_string()) {
        w.now = parse_iso8601(doc["now"].get<std::string>());
        if (!w.now) throw Error(ErrorKind::ParseError, "fixture 'now' is not ISO-8601");
    }
    std::set<std::string> ids;
    for (const auto& e : doc["emails"]) {
        FixtureEmail email;
        email.id = e.at("id").get<std::string>();
        if (!ids.insert(email.id).second) throw Error(ErrorKind::ParseError, "duplicate email id " + email.id);
        email.from_address = e.at("from").get<std::string>();
        auto ts = parse_iso8601(e.at("received_at").get<std::string>());
        if (!ts) throw Error(ErrorKind::ParseError, "email " + email.id + ": bad received_at");
        email.received_at = *ts;
        email.subject = e.value("subject", std::string{});
        for (const auto& a : e.value("attachments", json::array())) {
            FixtureAttachment att;
            att.filename = a.at("filename").get<std::string>();
            if (a.contains("content")) {
                att.content = a["content"].get<std::string>();
            } else {
                att.content = synthesize_content(att.filename, a.value("size", std::size_t{1024}));
            }
            att.company = a.value("company", std::string{});
            att.metadata = a.value("metadata", json::object());
            att.metadata["company"] = att.company;
            if (att.company == "codeword" && !att.metadata.contains("real_company")) {
                throw Error(ErrorKind::ParseError, "codeword attachment " + att.filename + " needs real_company");
            }
            if (att.company != "codeword" && att.metadata.contains("real_company")) {
                throw Error(ErrorKind::ParseError, "real_company is only allowed on codeword attachments");
            }
            email.attachments.push_back(std::move(att));
        }
        if (e.contains("has_attachments") && e["has_attachments"].get<bool>() != email.has_attachments()) {
            throw Error(ErrorKind::ParseError, "email " + email.id + ": has_attachments contradicts attachments");
        }
        w.emails.push_back(std::move(email));
    }
    for (const auto& [path, content] : doc.value("drive", json::object()).items()) {
        w.drive[path] = content.get<std::string>();
    }
    w.outbox = doc.value("outbox", std::vector<json>{});
    for (const auto& [sheet, rows] : doc.value("sheets", json::object()).items()) {
        w.sheets[sheet] = rows.get<std::vector<json>>();
    }
    w.calendar = doc.value("calendar", std::vector<json>{});
    return w;
}

json fixture_to_json(const FixtureWorld& w) {
    json doc;
    doc["name"] = w.name;
    if (w.now) doc["now"] = format_utc(*w.now);
    doc["emails"] = json::array();
    for (const auto& e : w.emails) {
        json je{{"id", e.id},
                {"from", e.from_address},
                {"received_at", format_utc(e.received_at)},
                {"subject", e.subject},
                {"has_attachments", e.has_attachments()},
                {"attachments", json::array()}};
        for (const auto& a : e.attachments) {
            json meta = a.metadata;
            meta.erase("company");
            je["attachments"].push_back(
                {{"filename", a.filename}, {"content", a.content}, {"company", a.company}, {"metadata", meta}});
        }
        doc["emails"].push_back(std::move(je));
    }
    doc["drive"] = w.drive;
    doc["outbox"] = w.outbox;
    doc["sheets"] = w.sheets;
    doc["calendar"] = w.calendar;
    return doc;
}

FixtureWorld load_fixture_file(const std::filesystem::path& path) {
    return fixture_from_json(read_json_file(path));
}

void resize_payloads(FixtureWorld& world, std::size_t size) {
    for (auto& e : world.emails) {
        for (auto& a : e.attachments) a.content = synthesize_content(a.filename, size);
    }
}

json email_summary(const FixtureEmail& e) {
    return json{{"id", e.id},
                {"from", e.from_address},
                {"received_at", format_utc(e.received_at)},
                {"subject", e.subject},
                {"has_attachments", e.has_attachments()}};
}

bool EmailFilter::matches(const FixtureEmail& email) const {
    for (const auto& cutoff : received_at_least) {
        if (email.received_at < cutoff) return false;
    }
    for (bool want : has_attachments) {
        if (email.has_attachments() != want) return false;
    }
    return true;
}

EmailFilter parse_filter(std::string_view text) {
    EmailFilter f;
    const auto tokens = split_ws(text);
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (i > 0) {
            if (lower(tokens[i]) != "and") filter_error(tokens[i], "expected 'and'");
            if (++i >= tokens.size()) filter_error(tokens[i - 1], "dangling 'and'");
        }
        if (i + 2 >= tokens.size()) filter_error(tokens[i], "incomplete predicate");
        const auto& field = tokens[i];
        const auto& op = tokens[i + 1];
        std::string value = tokens[i + 2];
        if (value.size() >= 2 && (value.front() == '\'' || value.front() == '"') && value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        if (field == "receivedDateTime") {
            if (op != ">=") filter_error(op, "receivedDateTime supports only '>='");
            auto ts = parse_iso8601(value);
            if (!ts) filter_error(tokens[i + 2], "expected an ISO-8601 timestamp");
            f.received_at_least.push_back(*ts);
        } else if (field == "hasAttachments") {
            if (op != "eq") filter_error(op, "hasAttachments supports only 'eq'");
            if (value == "true") f.has_attachments.push_back(true);
            else if (value == "false") f.has_attachments.push_back(false);
            else filter_error(tokens[i + 2], "expected true or false");
        } else {
            filter_error(field, "unsupported field");
        }
        i += 3;
    }
    return f;
}

json to_json(const InvocationRecord& r) {
    json j{{"invocation_id", r.invocation_id},
           {"execution_id", r.execution_id},
           {"tool", r.tool},
           {"args", r.args},
           {"sequence_index", r.sequence_index},
           {"timestamp", r.timestamp}};
    if (r.ok) {
        j["outcome"] = {{"ok", true}, {"result", r.result}};
    } else {
        j["outcome"] = {{"ok", false}, {"error", {{"kind", r.error_kind}, {"message", r.error_message}}}};
    }
    return j;
}

InvocationRecord invocation_from_json(const json& j) {
    InvocationRecord r;
    r.invocation_id = j.value("invocation_id", std::string{});
    r.execution_id = j.value("execution_id", std::string{});
    r.tool = j.value("tool", std::string{});
    r.args = j.value("args", json::object());
    r.sequence_index = j.value("sequence_index", std::size_t{0});
    r.timestamp = j.value("timestamp", std::string{});
    const auto& out = j.at("outcome");
    r.ok = out.value("ok", false);
    if (r.ok) {
        r.result = out.value("result", json{});
    } else {
        r.error_kind = out["error"].value("kind", std::string{});
        r.error_message = out["error"].value("message", std::string{});
    }
    return r;
}

InvocationRecord InvocationLog::append(InvocationRecord record) {
    std::lock_guard lock(mutex_);
    record.sequence_index = next_index_[record.execution_id]++;
    record.invocation_id = record.execution_id + "#" + std::to_string(record.sequence_index);
    if (record.timestamp.empty()) record.timestamp = utc_now_iso();
    records_.push_back(record);
    return record;
}

std::vector<InvocationRecord> InvocationLog::for_execution(const std::string& execution_id) const {
    std::lock_guard lock(mutex_);
    std::vector<InvocationRecord> out;
    for (const auto& r : records_) {
        if (r.execution_id == execution_id) out.push_back(r);
    }
    return out;
}

std::size_t InvocationLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

void validate_args(const registry::ToolSchema& schema, const json& args) {
    if (!args.is_object()) throw Error(ErrorKind::InvalidArgument, "tool arguments must be an object");
    const auto& props = schema.parameters["properties"];
    for (const auto& req : schema.parameters.value("required", ordered_json::array())) {
        const auto key = req.get<std::string>();
        if (!args.contains(key)) {
            throw Error(ErrorKind::InvalidArgument,
                        schema.descriptor.name + ": missing required argument '" + key + "'");
        }
    }
    for (const auto& [key, value] : args.items()) {
        auto it = props.find(key);
        if (it == props.end()) {
            throw Error(ErrorKind::InvalidArgument, schema.descriptor.name + ": unexpected argument '" + key + "'");
        }
        if (!type_matches((*it)["type"].get<std::string>(), value)) {
            throw Error(ErrorKind::InvalidArgument, schema.descriptor.name + ": argument '" + key + "' must be " +
                                                        (*it)["type"].get<std::string>());
        }
    }
}

ToolHost::ToolHost(const registry::Registry& registry) : registry_(registry) {}

void ToolHost::load_fixture(const std::string& session_id, FixtureWorld world) {
    auto slot = std::make_shared<SessionFixture>();
    slot->world = std::move(world);
    std::lock_guard lock(mutex_);
    fixtures_[session_id] = std::move(slot);
}

bool ToolHost::has_fixture(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return fixtures_.count(session_id) > 0;
}

std::shared_ptr<ToolHost::SessionFixture> ToolHost::session_fixture(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = fixtures_.find(session_id);
    if (it == fixtures_.end()) return nullptr;
    return it->second;
}

FixtureWorld ToolHost::fixture(const std::string& session_id) const {
    auto slot = session_fixture(session_id);
    if (!slot) throw Error(ErrorKind::FixtureMissing, "session '" + session_id + "' has no fixture loaded");
    std::lock_guard lock(slot->mutex);
    return slot->world;
}

std::map<std::string, std::string> ToolHost::drive(const std::string& session_id) const {
    return fixture(session_id).drive;
}

json ToolHost::invoke(const std::string& tool, const json& args, const InvocationContext& ctx) {
    InvocationRecord rec;
    rec.execution_id = ctx.execution_id;
    rec.tool = tool;
    rec.args = args;
    try {
        const auto schema = registry_.find(tool);
        if (!schema || schema->binding.empty()) {
            throw Error(ErrorKind::UnboundTool, "tool '" + tool + "' has no binding");
        }
        if (ctx.loaded_tools.count(tool) == 0) {
            throw Error(ErrorKind::NotLoaded, "tool '" + tool + "' was not loaded in this session");
        }
        validate_args(*schema, args);
        const auto kind = schema->binding.value("kind", std::string{});
        if (kind == "fixture") {
            rec.result = dispatch_fixture(schema->binding.value("op", std::string{}), args, ctx.session_id);
        } else if (kind == "http") {
            rec.result = invoke_http_binding(schema->binding, args);
        } else {
            throw Error(ErrorKind::UnboundTool, "tool '" + tool + "' has unknown binding kind '" + kind + "'");
        }
        rec.ok = true;
    } catch (const Error& e) {
        rec.ok = false;
        rec.error_kind = std::string(to_string(e.kind()));
        rec.error_message = e.what();
        log_.append(std::move(rec));
        throw;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error_kind = std::string(to_string(ErrorKind::BindingError));
        rec.error_message = e.what();
        log_.append(std::move(rec));
        throw Error(ErrorKind::BindingError, e.what());
    }
    auto result = rec.result;
    log_.append(std::move(rec));
    return result;
}

void ToolHost::record_rejection(const std::string& tool, const json& args, const InvocationContext& ctx,
                                std::string_view kind, const std::string& message) {
    InvocationRecord rec;
    rec.execution_id = ctx.execution_id;
    rec.tool = tool;
    rec.args = args;
    rec.ok = false;
    rec.error_kind = std::string(kind);
    rec.error_message = message;
    log_.append(std::move(rec));
}

json ToolHost::dispatch_fixture(const std::string& op, const json& args, const std::string& session_id) {
    auto slot = session_fixture(session_id);
    if (!slot) throw Error(ErrorKind::BindingError, "session '" + session_id + "' has no fixture loaded");
    std::lock_guard lock(slot->mutex);
    auto& w = slot->world;

    if (op == "outlook.list_emails") {
        const auto filter = parse_filter(args.value("filter", std::string{}));
        std::vector<const FixtureEmail*> hits;
        for (const auto& e : w.emails) {
            if (filter.matches(e)) hits.push_back(&e);
        }
        std::stable_sort(hits.begin(), hits.end(),
                         [](const FixtureEmail* a, const FixtureEmail* b) { return a->received_at > b->received_at; });
        json out = json::array();
        for (const auto* e : hits) out.push_back(email_summary(*e));
        return out;
    }
    if (op == "outlook.get_attachment") {
        const auto& email = find_email(w, require_string(args, "email_id"));
        const auto index = args.value("index", 0);
        if (!email.has_attachments()) {
            throw Error(ErrorKind::NoAttachment, "email '" + email.id + "' has no attachments");
        }
        if (index < 0 || static_cast<std::size_t>(index) >= email.attachments.size()) {
            throw Error(ErrorKind::NoAttachment,
                        "email '" + email.id + "' has no attachment at index " + std::to_string(index));
        }
        const auto& a = email.attachments[static_cast<std::size_t>(index)];
        return json{{"filename", a.filename}, {"content", a.content}, {"size", a.content.size()}, {"metadata", a.metadata}};
    }
    if (op == "outlook.get_email") {
        const auto& email = find_email(w, require_string(args, "email_id"));
        auto out = email_summary(email);
        out["attachments"] = json::array();
        for (const auto& a : email.attachments) out["attachments"].push_back(a.filename);
        return out;
    }
    if (op == "outlook.send_email") {
        json msg{{"message_id", "m" + std::to_string(w.outbox.size() + 1)},
                 {"to", require_string(args, "to")},
                 {"subject", require_string(args, "subject")},
                 {"body", require_string(args, "body")}};
        w.outbox.push_back(msg);
        return json{{"message_id", msg["message_id"]}};
    }
    if (op == "onedrive.upload_file") {
        const auto path = normalize_drive_path(require_string(args, "path"));
        const auto& content = require_string(args, "content");
        w.drive[path] = content;
        return json{{"path", path}, {"bytes_written", content.size()}};
    }
    if (op == "onedrive.list_files") {
        const auto prefix = args.value("prefix", std::string{});
        json out = json::array();
        for (const auto& [path, content] : w.drive) {
            if (path.rfind(prefix, 0) == 0) out.push_back({{"path", path}, {"size", content.size()}});
        }
        return out;
    }
    if (op == "onedrive.download_file") {
        const auto path = normalize_drive_path(require_string(args, "path"));
        auto it = w.drive.find(path);
        if (it == w.drive.end()) throw Error(ErrorKind::BindingError, "no file at '" + path + "'");
        return json{{"path", path}, {"content", it->second}};
    }
    if (op == "calendar.list_events") {
        const auto start = parse_iso8601(require_string(args, "start"));
        const auto end = parse_iso8601(require_string(args, "end"));
        if (!start || !end) throw Error(ErrorKind::InvalidArgument, "start/end must be ISO-8601");
        json out = json::array();
        for (const auto& ev : w.calendar) {
            const auto t = parse_iso8601(ev.value("start", std::string{}));
            if (t && *t >= *start && *t < *end) out.push_back(ev);
        }
        return out;
    }
    if (op == "sheets.append_row") {
        auto& rows = w.sheets[require_string(args, "sheet")];
        rows.push_back(args.at("values"));
        return json{{"sheet", args["sheet"]}, {"row_count", rows.size()}};
    }
    if (op == "sheets.read_rows") {
        auto it = w.sheets.find(require_string(args, "sheet"));
        return it == w.sheets.end() ? json::array() : json(it->second);
    }
    throw Error(ErrorKind::UnboundTool, "no fixture operation '" + op + "'");
}

} // namespace codemem::toolhost
