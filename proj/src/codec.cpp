#include "hearth/codec.hpp"

#include "hearth/errors.hpp"

namespace hearth {

namespace {

template <class T>
T parse_enum(const Json& j, const char* field, std::optional<T> (*parse)(std::string_view) noexcept) {
    auto s = require_string(j, field);
    auto v = parse(s);
    if (!v) throw ValidationError(field, std::string("invalid ") + field + " '" + s + "'");
    return *v;
}

Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

}  // namespace

const Json& require_field(const Json& j, const char* field) {
    if (!j.is_object()) throw ValidationError(field, "expected an object containing '" + std::string(field) + "'");
    auto it = j.find(field);
    if (it == j.end()) throw ValidationError(field, std::string("missing field '") + field + "'");
    return *it;
}

std::string require_string(const Json& j, const char* field) {
    const auto& v = require_field(j, field);
    if (!v.is_string()) throw ValidationError(field, std::string("field '") + field + "' must be a string");
    return v.get<std::string>();
}

std::int64_t require_int(const Json& j, const char* field) {
    const auto& v = require_field(j, field);
    if (!v.is_number_integer()) throw ValidationError(field, std::string("field '") + field + "' must be an integer");
    return v.get<std::int64_t>();
}

std::uint64_t require_uint(const Json& j, const char* field) {
    const auto& v = require_field(j, field);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ValidationError(field, std::string("field '") + field + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

Json to_json(const FlowRecord& r) {
    return Json{{"id", r.id},
                {"device_id", r.device_id},
                {"dst_ip", r.dst_ip.to_string()},
                {"dst_port", r.dst_port},
                {"transport", to_string(r.transport)},
                {"window_start_ms", r.window_start_ms},
                {"byte_count", r.byte_count},
                {"packet_count", r.packet_count},
                {"direction", to_string(r.direction)},
                {"locality", to_string(r.locality)},
                {"encryption", to_string(r.encryption)}};
}

FlowRecord flow_from_json(const Json& j) {
    FlowRecord r;
    r.id = require_uint(j, "id");
    r.device_id = require_string(j, "device_id");
    auto ip = IpAddress::parse(require_string(j, "dst_ip"));
    if (!ip) throw ValidationError("dst_ip", "invalid dst_ip");
    r.dst_ip = *ip;
    auto port = require_uint(j, "dst_port");
    if (port > 65535) throw ValidationError("dst_port", "dst_port out of range");
    r.dst_port = static_cast<std::uint16_t>(port);
    r.transport = parse_enum(j, "transport", &parse_transport);
    r.window_start_ms = require_int(j, "window_start_ms");
    r.byte_count = require_uint(j, "byte_count");
    r.packet_count = require_uint(j, "packet_count");
    r.direction = parse_enum(j, "direction", &parse_direction);
    r.locality = parse_enum(j, "locality", &parse_locality);
    r.encryption = parse_enum(j, "encryption", &parse_encryption);
    return r;
}

Json to_json(const Device& d) {
    return Json{{"device_id", d.device_id},
                {"friendly_name", d.friendly_name},
                {"first_seen_ms", d.first_seen_ms},
                {"last_seen_ms", d.last_seen_ms}};
}

Json to_json(const CompanyRecord& c) {
    return Json{{"name", c.name},
                {"parent", optional_string(c.parent)},
                {"jurisdiction", c.jurisdiction},
                {"threat", to_string(c.threat)},
                {"source", to_string(c.source)},
                {"resolved_at_ms", c.resolved_at_ms},
                {"ttl_ms", c.ttl_ms}};
}

CompanyRecord company_from_json(const Json& j) {
    CompanyRecord c;
    c.name = require_string(j, "name");
    const auto& parent = require_field(j, "parent");
    if (parent.is_string()) c.parent = parent.get<std::string>();
    c.jurisdiction = require_string(j, "jurisdiction");
    if (!is_valid_jurisdiction(c.jurisdiction)) throw ValidationError("jurisdiction", "invalid jurisdiction");
    c.threat = parse_enum(j, "threat", &parse_threat);
    c.source = parse_enum(j, "source", &parse_record_source);
    c.resolved_at_ms = require_int(j, "resolved_at_ms");
    c.ttl_ms = require_int(j, "ttl_ms");
    return c;
}

Json to_json(const TimeWindow& w) { return Json{{"start_ms", w.start_ms}, {"end_ms", w.end_ms}}; }

TimeWindow window_from_json(const Json& j) {
    TimeWindow w{require_int(j, "start_ms"), require_int(j, "end_ms")};
    if (w.start_ms >= w.end_ms) throw ValidationError("end_ms", "window end must be after its start");
    return w;
}

Json to_json(const ExposureBucket& b) {
    return Json{{"bucket_start_ms", b.bucket_start_ms}, {"bucket_width_ms", b.bucket_width_ms},
                {"device_id", b.device_id},             {"company", b.company},
                {"jurisdiction", b.jurisdiction},       {"byte_count", b.byte_count},
                {"packet_count", b.packet_count}};
}

Json to_json(const ExposureProfile& p) {
    Json rows = Json::array();
    for (const auto& r : p.rows)
        rows.push_back(Json{{"device_id", r.device_id},
                            {"company", r.company},
                            {"jurisdiction", r.jurisdiction},
                            {"byte_count", r.byte_count},
                            {"packet_count", r.packet_count},
                            {"share", r.share}});
    return Json{{"window", to_json(p.window)}, {"rows", std::move(rows)}};
}

Json to_json(const StatsReport& r) {
    return Json{{"total_packets", r.total_packets},
                {"total_bytes", r.total_bytes},
                {"distinct_devices", r.distinct_devices},
                {"distinct_companies", r.distinct_companies},
                {"distinct_jurisdictions", r.distinct_jurisdictions},
                {"top_n_share", r.top_n_share},
                {"out_of_region_share", r.out_of_region_share}};
}

Json to_json(const std::vector<SeriesPoint>& series) {
    Json out = Json::array();
    for (const auto& p : series) out.push_back(Json{{"bucket_start_ms", p.bucket_start_ms}, {"byte_count", p.byte_count}});
    return out;
}

Json to_json(const PeriodComparison& c) {
    return Json{{"is_new", c.is_new},
                {"change", c.change},
                {"avg_daily_a", c.avg_daily_a},
                {"avg_daily_b", c.avg_daily_b}};
}

CompanyScope scope_from_json(const Json& j) {
    CompanyScope s;
    s.kind = parse_enum(j, "kind", &parse_scope_kind);
    s.name = require_string(j, "name");
    if (s.name.empty()) throw ValidationError("name", "scope name is empty");
    return s;
}

Json to_json(const FirewallDirective& d) {
    return Json{{"id", d.id},
                {"device_id", optional_string(d.device_id)},
                {"scope", Json{{"kind", to_string(d.scope.kind)}, {"name", d.scope.name}}},
                {"state", to_string(d.state)},
                {"created_at_ms", d.created_at_ms},
                {"label", d.label}};
}

FirewallDirective directive_from_json(const Json& j) {
    FirewallDirective d;
    d.id = require_uint(j, "id");
    if (d.id == 0) throw ValidationError("id", "directive id must be positive");
    const auto& dev = require_field(j, "device_id");
    if (dev.is_string()) {
        d.device_id = dev.get<std::string>();
    } else if (!dev.is_null()) {
        throw ValidationError("device_id", "device_id must be a string or null");
    }
    d.scope = scope_from_json(require_field(j, "scope"));
    d.state = parse_enum(j, "state", &parse_directive_state);
    d.created_at_ms = require_int(j, "created_at_ms");
    if (j.contains("label") && j["label"].is_string()) d.label = j["label"].get<std::string>();
    return d;
}

Json to_json(const CompiledRuleSet& r) {
    Json entries = Json::array();
    for (const auto& e : r.entries()) {
        Json prefixes = Json::array();
        for (const auto& p : e.prefixes) prefixes.push_back(p.to_string());
        entries.push_back(Json{{"directive_id", e.directive_id},
                               {"device_id", optional_string(e.device_id)},
                               {"prefixes", std::move(prefixes)}});
    }
    return Json{{"version", r.version()},
                {"generated_at_ms", r.generated_at_ms()},
                {"entries", std::move(entries)},
                {"inert", r.inert()}};
}

Json to_json(const BlockImpactPreview& p) {
    Json per_device = Json::object();
    for (const auto& [dev, imp] : p.per_device)
        per_device[dev] = Json{{"matched_bytes", imp.matched_bytes}, {"matched_flows", imp.matched_flows}};
    return Json{{"directive_id", p.directive_id},
                {"window", to_json(p.window)},
                {"matched_bytes", p.matched_bytes},
                {"matched_flows", p.matched_flows},
                {"window_bytes", p.window_bytes},
                {"window_flows", p.window_flows},
                {"affected_companies", p.affected_companies},
                {"per_device", std::move(per_device)}};
}

Json to_json(const Suggestion& s) {
    return Json{{"company", s.company}, {"reason", to_string(s.reason)}, {"bytes", s.bytes}};
}

Json to_json(const Blocklist& b) {
    Json prefixes = Json::array();
    for (const auto& p : b.prefixes) prefixes.push_back(p.to_string());
    return Json{{"id", b.id},
                {"name", b.name},
                {"companies", b.companies},
                {"prefixes", std::move(prefixes)},
                {"source", to_string(b.source)},
                {"enabled", b.enabled}};
}

Blocklist blocklist_from_json(const Json& j) {
    Blocklist b;
    b.id = require_string(j, "id");
    b.name = require_string(j, "name");
    const auto& companies = require_field(j, "companies");
    if (!companies.is_array()) throw ValidationError("companies", "companies must be an array");
    for (const auto& c : companies) {
        if (!c.is_string()) throw ValidationError("companies", "companies must be strings");
        b.companies.push_back(c.get<std::string>());
    }
    const auto& prefixes = require_field(j, "prefixes");
    if (!prefixes.is_array()) throw ValidationError("prefixes", "prefixes must be an array");
    for (const auto& p : prefixes) {
        auto parsed = p.is_string() ? Prefix::parse(p.get<std::string>()) : std::nullopt;
        if (!parsed) throw ValidationError("prefixes", "invalid prefix in blocklist");
        b.prefixes.push_back(*parsed);
    }
    b.source = parse_enum(j, "source", &parse_blocklist_source);
    const auto& enabled = require_field(j, "enabled");
    if (!enabled.is_boolean()) throw ValidationError("enabled", "enabled must be a boolean");
    b.enabled = enabled.get<bool>();
    return b;
}

StageConfig stage_from_json(const Json& j) {
    StageConfig s;
    s.stage = static_cast<int>(require_int(j, "stage"));
    if (s.stage < 1 || s.stage > 3) throw ValidationError("stage", "stage must be 1, 2 or 3");
    const auto& started = require_field(j, "started_ms");
    for (int i = 1; i <= 3; ++i) {
        auto key = std::to_string(i);
        if (started.contains(key) && started[key].is_number_integer()) s.started_ms[i - 1] = started[key].get<std::int64_t>();
    }
    return s;
}

Json to_json(const StageConfig& s) {
    Json started = Json::object();
    for (int i = 1; i <= 3; ++i)
        started[std::to_string(i)] = s.started(i) ? Json(*s.started(i)) : Json(nullptr);
    Json features = Json::array();
    for (auto f : s.features()) features.push_back(to_string(f));
    return Json{{"stage", s.stage}, {"started_ms", std::move(started)}, {"features", std::move(features)}};
}

Json to_json(const CurriculumModule& m) {
    return Json{{"id", m.id},
                {"title", m.title},
                {"stage_offset_days", m.stage_offset_days},
                {"completed_at_ms", m.completed_at_ms ? Json(*m.completed_at_ms) : Json(nullptr)}};
}

Json to_json(const RenderedModule& m) {
    Json examples = Json::array();
    for (const auto& e : m.examples)
        examples.push_back(Json{{"slot", e.slot},
                                {"text", e.text},
                                {"window", to_json(e.window)},
                                {"source_query", e.source_query}});
    return Json{{"id", m.id}, {"title", m.title}, {"body", m.body}, {"examples", std::move(examples)}};
}

Json to_json(const RedactionScope& s) {
    Json j{{"kind", to_string(s.kind)}};
    if (s.kind == RedactionKind::TimeRange) {
        j["range"] = to_json(s.range);
    } else {
        j["value"] = s.value;
    }
    return j;
}

RedactionScope redaction_scope_from_json(const Json& j) {
    RedactionScope s;
    s.kind = parse_enum(j, "kind", &parse_redaction_kind);
    if (s.kind == RedactionKind::TimeRange) {
        s.range = window_from_json(require_field(j, "range"));
    } else {
        s.value = require_string(j, "value");
        if (s.value.empty()) throw ValidationError("value", "redaction value is empty");
    }
    return s;
}

Json to_json(const RedactionRequest& r) {
    return Json{{"id", r.id},
                {"scope", to_json(r.scope)},
                {"description", r.description},
                {"requested_at_ms", r.requested_at_ms},
                {"executed_at_ms", r.executed_at_ms ? Json(*r.executed_at_ms) : Json(nullptr)},
                {"rows_removed", r.rows_removed}};
}

Json to_json(const IngestStats& s) {
    return Json{{"frames", s.frames},
                {"ip_packets", s.ip_packets},
                {"ip_bytes", s.ip_bytes},
                {"skipped_frames", s.skipped_frames},
                {"late_packets", s.late_packets},
                {"records", s.records},
                {"auto_registered", s.auto_registered}};
}

Json to_json(const AttributedFlow& f) {
    auto j = to_json(f.flow);
    j["company"] = f.company;
    j["jurisdiction"] = f.jurisdiction;
    return j;
}

}  // namespace hearth
