#include "hearth/store.hpp"

#include <sqlite3.h>

#include <chrono>
#include <istream>
#include <ostream>

#include "hearth/codec.hpp"
#include "hearth/errors.hpp"

namespace hearth {

namespace {

constexpr int kSchemaVersion = 1;

const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS flows (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    device_id TEXT NOT NULL,
    dst_ip TEXT NOT NULL,
    dst_port INTEGER NOT NULL,
    transport TEXT NOT NULL,
    window_start_ms INTEGER NOT NULL,
    byte_count INTEGER NOT NULL,
    packet_count INTEGER NOT NULL,
    direction TEXT NOT NULL,
    locality TEXT NOT NULL,
    encryption TEXT NOT NULL,
    company TEXT NOT NULL,
    jurisdiction TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS flows_window ON flows (window_start_ms);
CREATE INDEX IF NOT EXISTS flows_device ON flows (device_id);
CREATE INDEX IF NOT EXISTS flows_company ON flows (company);
CREATE TABLE IF NOT EXISTS buckets (
    bucket_start_ms INTEGER NOT NULL,
    bucket_width_ms INTEGER NOT NULL,
    device_id TEXT NOT NULL,
    company TEXT NOT NULL,
    jurisdiction TEXT NOT NULL,
    byte_count INTEGER NOT NULL,
    packet_count INTEGER NOT NULL,
    PRIMARY KEY (bucket_start_ms, device_id, company)
);
CREATE TABLE IF NOT EXISTS devices (
    device_id TEXT PRIMARY KEY,
    friendly_name TEXT NOT NULL,
    first_seen_ms INTEGER NOT NULL,
    last_seen_ms INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS resolver_cache (key TEXT PRIMARY KEY, company TEXT NOT NULL, json TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS directives (key TEXT PRIMARY KEY, json TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS blocklists (key TEXT PRIMARY KEY, json TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS curriculum (module_id TEXT PRIMARY KEY, completed_at_ms INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS stage (key TEXT PRIMARY KEY, json TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS redactions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    kind TEXT NOT NULL,
    value TEXT NOT NULL,
    range_start_ms INTEGER NOT NULL,
    range_end_ms INTEGER NOT NULL,
    description TEXT NOT NULL,
    requested_at_ms INTEGER NOT NULL,
    executed_at_ms INTEGER NOT NULL,
    rows_removed INTEGER NOT NULL
);
CREATE TRIGGER IF NOT EXISTS redactions_no_update BEFORE UPDATE ON redactions
BEGIN SELECT RAISE(ABORT, 'redaction audit is append-only'); END;
CREATE TRIGGER IF NOT EXISTS redactions_no_delete BEFORE DELETE ON redactions
BEGIN SELECT RAISE(ABORT, 'redaction audit is append-only'); END;
)sql";

[[noreturn]] void fail(sqlite3* db, int rc, const std::string& what) {
    std::string msg = what + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc));
    if (rc == SQLITE_FULL || (rc & 0xff) == SQLITE_FULL) throw StorageFullError(msg);
    throw StoreError(msg);
}

class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (int rc = sqlite3_prepare_v2(db, sql, -1, &s_, nullptr); rc != SQLITE_OK) fail(db, rc, "prepare");
    }
    ~Stmt() { sqlite3_finalize(s_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(s_, i, v);
        return *this;
    }
    Stmt& bind(int i, const std::string& v) {
        sqlite3_bind_text(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int i, std::string_view v) { return bind(i, std::string(v)); }

    /// True while rows remain.
    bool step() {
        int rc = sqlite3_step(s_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        fail(db_, rc, "step");
    }
    void run() {
        while (step()) {
        }
    }

    std::int64_t i64(int col) const { return sqlite3_column_int64(s_, col); }
    std::string text(int col) const {
        auto p = reinterpret_cast<const char*>(sqlite3_column_text(s_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(s_, col))) : std::string();
    }

private:
    sqlite3* db_;
    sqlite3_stmt* s_ = nullptr;
};

// Rolls back unless committed.
class Txn {
public:
    explicit Txn(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
    ~Txn() {
        if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        exec("COMMIT");
        done_ = true;
    }

private:
    void exec(const char* sql) {
        if (int rc = sqlite3_exec(db_, sql, nullptr, nullptr, nullptr); rc != SQLITE_OK) fail(db_, rc, sql);
    }
    sqlite3* db_;
    bool done_ = false;
};

template <class E>
E parse_or_throw(std::optional<E> v, const char* what) {
    if (!v) throw StoreError(std::string("corrupt ") + what + " column");
    return *v;
}

AttributedFlow read_flow(const Stmt& s) {
    AttributedFlow af;
    auto& f = af.flow;
    f.id = static_cast<std::uint64_t>(s.i64(0));
    f.device_id = s.text(1);
    f.dst_ip = IpAddress::from_string(s.text(2));
    f.dst_port = static_cast<std::uint16_t>(s.i64(3));
    f.transport = parse_or_throw(parse_transport(s.text(4)), "transport");
    f.window_start_ms = s.i64(5);
    f.byte_count = static_cast<std::uint64_t>(s.i64(6));
    f.packet_count = static_cast<std::uint64_t>(s.i64(7));
    f.direction = parse_or_throw(parse_direction(s.text(8)), "direction");
    f.locality = parse_or_throw(parse_locality(s.text(9)), "locality");
    f.encryption = parse_or_throw(parse_encryption(s.text(10)), "encryption");
    af.company = s.text(11);
    af.jurisdiction = s.text(12);
    return af;
}

constexpr const char* kFlowColumns =
    "id, device_id, dst_ip, dst_port, transport, window_start_ms, byte_count, packet_count, direction, locality, "
    "encryption, company, jurisdiction";

bool in_scope(const RedactionScope& scope, const std::string& device, const std::string& company, std::int64_t t) {
    switch (scope.kind) {
        case RedactionKind::Device: return device == scope.value;
        case RedactionKind::Company: return company == scope.value;
        case RedactionKind::TimeRange: return scope.range.contains(t);
    }
    return false;
}

}  // namespace

std::string_view to_string(RedactionKind k) noexcept {
    switch (k) {
        case RedactionKind::Device: return "DEVICE";
        case RedactionKind::Company: return "COMPANY";
        case RedactionKind::TimeRange: return "TIME_RANGE";
    }
    return "DEVICE";
}

std::optional<RedactionKind> parse_redaction_kind(std::string_view s) noexcept {
    if (s == "DEVICE") return RedactionKind::Device;
    if (s == "COMPANY") return RedactionKind::Company;
    if (s == "TIME_RANGE") return RedactionKind::TimeRange;
    return std::nullopt;
}

std::string RedactionScope::describe() const {
    switch (kind) {
        case RedactionKind::Device: return "all data for device " + value;
        case RedactionKind::Company: return "all data sent to " + value;
        case RedactionKind::TimeRange:
            return "all data between " + std::to_string(range.start_ms) + " and " + std::to_string(range.end_ms) + " ms";
    }
    return {};
}

std::int64_t system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Store::Store(const std::string& path, Clock clock) : clock_(std::move(clock)) {
    int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                             nullptr);
    if (rc != SQLITE_OK) {
        std::string msg = "cannot open store " + path + ": " + (db_ ? sqlite3_errmsg(db_) : sqlite3_errstr(rc));
        sqlite3_close(db_);
        db_ = nullptr;
        throw StoreError(msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    std::lock_guard lock(mu_);
    if (path != ":memory:") exec_locked("PRAGMA journal_mode=WAL");
    exec_locked("PRAGMA foreign_keys=ON");
    exec_locked(kSchema);
    Stmt get(db_, "SELECT value FROM meta WHERE key = 'schema_version'");
    if (get.step()) {
        if (std::stoi(get.text(0)) != kSchemaVersion)
            throw StoreError("store schema version " + get.text(0) + " is not supported");
    } else {
        Stmt put(db_, "INSERT INTO meta (key, value) VALUES ('schema_version', ?)");
        put.bind(1, std::to_string(kSchemaVersion)).run();
    }
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec_locked(const char* sql) const {
    char* err = nullptr;
    int rc = sqlite3_exec(db_, sql, nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
        std::string msg = err ? err : sqlite3_errstr(rc);
        sqlite3_free(err);
        if (rc == SQLITE_FULL) throw StorageFullError(msg);
        throw StoreError(msg);
    }
}

bool Store::tombstoned_locked(const AttributedFlow& af, std::int64_t now) const {
    for (const auto& t : tombstones_)
        if (now < t.until_ms && in_scope(t.scope, af.flow.device_id, af.company, af.flow.window_start_ms)) return true;
    return false;
}

void Store::insert_flow_locked(AttributedFlow& af, bool keep_id) {
    const auto& f = af.flow;
    Stmt s(db_, keep_id ? "INSERT INTO flows (id, device_id, dst_ip, dst_port, transport, window_start_ms, byte_count, "
                          "packet_count, direction, locality, encryption, company, jurisdiction) VALUES "
                          "(?13, ?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)"
                        : "INSERT INTO flows (device_id, dst_ip, dst_port, transport, window_start_ms, byte_count, "
                          "packet_count, direction, locality, encryption, company, jurisdiction) VALUES "
                          "(?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)");
    s.bind(1, f.device_id)
        .bind(2, f.dst_ip.to_string())
        .bind(3, static_cast<std::int64_t>(f.dst_port))
        .bind(4, to_string(f.transport))
        .bind(5, f.window_start_ms)
        .bind(6, static_cast<std::int64_t>(f.byte_count))
        .bind(7, static_cast<std::int64_t>(f.packet_count))
        .bind(8, to_string(f.direction))
        .bind(9, to_string(f.locality))
        .bind(10, to_string(f.encryption))
        .bind(11, af.company)
        .bind(12, af.jurisdiction);
    if (keep_id) s.bind(13, static_cast<std::int64_t>(f.id));
    s.run();
    af.flow.id = static_cast<std::uint64_t>(sqlite3_last_insert_rowid(db_));
}

std::uint64_t Store::persist_flow(AttributedFlow& flow) {
    std::lock_guard lock(mu_);
    if (tombstoned_locked(flow, clock_())) throw RedactedScopeError("flow falls inside a redacted scope");
    insert_flow_locked(flow, false);
    return flow.flow.id;
}

std::size_t Store::persist_flows(std::vector<AttributedFlow>& flows) {
    std::lock_guard lock(mu_);
    const auto now = clock_();
    std::size_t refused = 0;
    std::vector<std::uint64_t> ids(flows.size(), 0);
    {
        Txn txn(db_);
        for (std::size_t i = 0; i < flows.size(); ++i) {
            if (tombstoned_locked(flows[i], now)) {
                ++refused;
                continue;
            }
            auto copy = flows[i];
            insert_flow_locked(copy, false);
            ids[i] = copy.flow.id;
        }
        txn.commit();
    }
    // Ids become visible to the caller only once the transaction is durable.
    for (std::size_t i = 0; i < flows.size(); ++i) flows[i].flow.id = ids[i];
    return refused;
}

std::vector<AttributedFlow> Store::query_flows(const FlowFilter& filter) const {
    std::string sql = std::string("SELECT ") + kFlowColumns + " FROM flows WHERE 1=1";
    if (filter.id) sql += " AND id = ?1";
    if (filter.device_id) sql += " AND device_id = ?2";
    if (filter.company) sql += " AND company = ?3";
    if (filter.window) sql += " AND window_start_ms >= ?4 AND window_start_ms < ?5";
    sql += " ORDER BY id";
    std::lock_guard lock(mu_);
    Stmt s(db_, sql.c_str());
    if (filter.id) s.bind(1, static_cast<std::int64_t>(*filter.id));
    if (filter.device_id) s.bind(2, *filter.device_id);
    if (filter.company) s.bind(3, *filter.company);
    if (filter.window) s.bind(4, filter.window->start_ms).bind(5, filter.window->end_ms);
    std::vector<AttributedFlow> out;
    while (s.step()) out.push_back(read_flow(s));
    return out;
}

std::uint64_t Store::flow_count() const {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT COUNT(*) FROM flows");
    s.step();
    return static_cast<std::uint64_t>(s.i64(0));
}

void Store::put_bucket(const ExposureBucket& b) { put_buckets({b}); }

void Store::put_buckets(const std::vector<ExposureBucket>& buckets) {
    std::lock_guard lock(mu_);
    Txn txn(db_);
    for (const auto& b : buckets) {
        Stmt one(db_,
                 "INSERT OR REPLACE INTO buckets (bucket_start_ms, bucket_width_ms, device_id, company, jurisdiction, "
                 "byte_count, packet_count) VALUES (?, ?, ?, ?, ?, ?, ?)");
        one.bind(1, b.bucket_start_ms)
            .bind(2, b.bucket_width_ms)
            .bind(3, b.device_id)
            .bind(4, b.company)
            .bind(5, b.jurisdiction)
            .bind(6, static_cast<std::int64_t>(b.byte_count))
            .bind(7, static_cast<std::int64_t>(b.packet_count))
            .run();
    }
    txn.commit();
}

std::vector<ExposureBucket> Store::buckets() const {
    std::lock_guard lock(mu_);
    Stmt s(db_,
           "SELECT bucket_start_ms, bucket_width_ms, device_id, company, jurisdiction, byte_count, packet_count "
           "FROM buckets ORDER BY bucket_start_ms, device_id, company");
    std::vector<ExposureBucket> out;
    while (s.step()) {
        ExposureBucket b;
        b.bucket_start_ms = s.i64(0);
        b.bucket_width_ms = s.i64(1);
        b.device_id = s.text(2);
        b.company = s.text(3);
        b.jurisdiction = s.text(4);
        b.byte_count = static_cast<std::uint64_t>(s.i64(5));
        b.packet_count = static_cast<std::uint64_t>(s.i64(6));
        out.push_back(std::move(b));
    }
    return out;
}

void Store::put_device(const Device& d) {
    std::lock_guard lock(mu_);
    Stmt s(db_,
           "INSERT OR REPLACE INTO devices (device_id, friendly_name, first_seen_ms, last_seen_ms) VALUES (?, ?, ?, ?)");
    s.bind(1, d.device_id).bind(2, d.friendly_name).bind(3, d.first_seen_ms).bind(4, d.last_seen_ms).run();
}

std::vector<Device> Store::devices() const {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT device_id, friendly_name, first_seen_ms, last_seen_ms FROM devices ORDER BY device_id");
    std::vector<Device> out;
    while (s.step()) out.push_back({s.text(0), s.text(1), s.i64(2), s.i64(3)});
    return out;
}

void Store::put_cache(const std::vector<CacheEntry>& entries) {
    std::lock_guard lock(mu_);
    Txn txn(db_);
    for (const auto& e : entries) {
        Stmt s(db_, "INSERT OR REPLACE INTO resolver_cache (key, company, json) VALUES (?, ?, ?)");
        s.bind(1, e.ip.to_string()).bind(2, e.record.name).bind(3, to_json(e.record).dump()).run();
    }
    txn.commit();
}

std::vector<CacheEntry> Store::cache() const {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT key, json FROM resolver_cache ORDER BY key");
    std::vector<CacheEntry> out;
    while (s.step()) out.push_back({IpAddress::from_string(s.text(0)), company_from_json(Json::parse(s.text(1)))});
    return out;
}

void Store::put_json_locked(const char* table, const std::string& key, const std::string& json) {
    std::string sql = std::string("INSERT OR REPLACE INTO ") + table + " (key, json) VALUES (?, ?)";
    Stmt s(db_, sql.c_str());
    s.bind(1, key).bind(2, json).run();
}

std::vector<std::string> Store::get_json_locked(const char* table) const {
    std::string sql = std::string("SELECT json FROM ") + table + " ORDER BY key";
    Stmt s(db_, sql.c_str());
    std::vector<std::string> out;
    while (s.step()) out.push_back(s.text(0));
    return out;
}

void Store::put_directive(const FirewallDirective& d) {
    std::lock_guard lock(mu_);
    // Zero-padded keys keep ORDER BY key numeric.
    char key[24];
    std::snprintf(key, sizeof key, "%020llu", static_cast<unsigned long long>(d.id));
    put_json_locked("directives", key, to_json(d).dump());
}

std::vector<FirewallDirective> Store::directives() const {
    std::lock_guard lock(mu_);
    std::vector<FirewallDirective> out;
    for (const auto& j : get_json_locked("directives")) out.push_back(directive_from_json(Json::parse(j)));
    return out;
}

void Store::put_blocklist(const Blocklist& list) {
    std::lock_guard lock(mu_);
    put_json_locked("blocklists", list.id, to_json(list).dump());
}

std::vector<Blocklist> Store::blocklists() const {
    std::lock_guard lock(mu_);
    std::vector<Blocklist> out;
    for (const auto& j : get_json_locked("blocklists")) out.push_back(blocklist_from_json(Json::parse(j)));
    return out;
}

void Store::put_completion(const std::string& module_id, std::int64_t completed_at_ms) {
    std::lock_guard lock(mu_);
    Stmt s(db_, "INSERT OR IGNORE INTO curriculum (module_id, completed_at_ms) VALUES (?, ?)");
    s.bind(1, module_id).bind(2, completed_at_ms).run();
}

std::map<std::string, std::int64_t> Store::completions() const {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT module_id, completed_at_ms FROM curriculum");
    std::map<std::string, std::int64_t> out;
    while (s.step()) out[s.text(0)] = s.i64(1);
    return out;
}

void Store::put_stage(const StageConfig& stage) {
    std::lock_guard lock(mu_);
    put_json_locked("stage", "current", to_json(stage).dump());
}

std::optional<StageConfig> Store::stage() const {
    std::lock_guard lock(mu_);
    auto rows = get_json_locked("stage");
    if (rows.empty()) return std::nullopt;
    return stage_from_json(Json::parse(rows.front()));
}

RedactionRequest Store::redact(const RedactionScope& scope, ExposureModel* exposure, std::int64_t bucket_width_ms) {
    switch (scope.kind) {
        case RedactionKind::Device:
        case RedactionKind::Company:
            if (scope.value.empty()) throw ValidationError("value", "redaction scope value is empty");
            break;
        case RedactionKind::TimeRange:
            if (scope.range.start_ms >= scope.range.end_ms)
                throw ValidationError("range", "redaction range end must be after its start");
            if (scope.range.start_ms % bucket_width_ms != 0 || scope.range.end_ms % bucket_width_ms != 0)
                throw ValidationError("range", "redaction range must align to " + std::to_string(bucket_width_ms) +
                                                   " ms buckets");
            break;
    }

    RedactionRequest req;
    req.scope = scope;
    req.description = scope.describe();

    std::lock_guard lock(mu_);
    req.requested_at_ms = clock_();
    const char* flow_where = nullptr;
    const char* bucket_where = nullptr;
    switch (scope.kind) {
        case RedactionKind::Device:
            flow_where = "device_id = ?1";
            bucket_where = "device_id = ?1";
            break;
        case RedactionKind::Company:
            flow_where = "company = ?1";
            bucket_where = "company = ?1";
            break;
        case RedactionKind::TimeRange:
            flow_where = "window_start_ms >= ?2 AND window_start_ms < ?3";
            bucket_where = "bucket_start_ms >= ?2 AND bucket_start_ms < ?3";
            break;
    }
    auto run_delete = [&](const std::string& sql) {
        Stmt s(db_, sql.c_str());
        if (scope.kind == RedactionKind::TimeRange) {
            s.bind(2, scope.range.start_ms).bind(3, scope.range.end_ms);
        } else {
            s.bind(1, scope.value);
        }
        s.run();
        return static_cast<std::uint64_t>(sqlite3_changes(db_));
    };

    {
        Txn txn(db_);
        req.rows_removed += run_delete(std::string("DELETE FROM flows WHERE ") + flow_where);
        req.rows_removed += run_delete(std::string("DELETE FROM buckets WHERE ") + bucket_where);
        if (scope.kind == RedactionKind::Device) req.rows_removed += run_delete("DELETE FROM devices WHERE device_id = ?1");
        if (scope.kind == RedactionKind::Company)
            req.rows_removed += run_delete("DELETE FROM resolver_cache WHERE company = ?1");
        req.executed_at_ms = clock_();
        Stmt audit(db_,
                   "INSERT INTO redactions (kind, value, range_start_ms, range_end_ms, description, requested_at_ms, "
                   "executed_at_ms, rows_removed) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
        audit.bind(1, to_string(scope.kind))
            .bind(2, scope.value)
            .bind(3, scope.range.start_ms)
            .bind(4, scope.range.end_ms)
            .bind(5, req.description)
            .bind(6, req.requested_at_ms)
            .bind(7, *req.executed_at_ms)
            .bind(8, static_cast<std::int64_t>(req.rows_removed))
            .run();
        req.id = static_cast<std::uint64_t>(sqlite3_last_insert_rowid(db_));
        txn.commit();
    }
    if (exposure) {
        exposure->remove_if([&](const ExposureBucket& b) {
            return in_scope(scope, b.device_id, b.company, b.bucket_start_ms);
        });
    }
    std::erase_if(tombstones_, [&](const Tombstone& t) { return t.until_ms <= *req.executed_at_ms; });
    tombstones_.push_back({scope, *req.executed_at_ms + grace_ms_});
    return req;
}

std::vector<RedactionRequest> Store::audit() const {
    std::lock_guard lock(mu_);
    Stmt s(db_,
           "SELECT id, kind, value, range_start_ms, range_end_ms, description, requested_at_ms, executed_at_ms, "
           "rows_removed FROM redactions ORDER BY id");
    std::vector<RedactionRequest> out;
    while (s.step()) {
        RedactionRequest r;
        r.id = static_cast<std::uint64_t>(s.i64(0));
        r.scope.kind = parse_or_throw(parse_redaction_kind(s.text(1)), "redaction kind");
        r.scope.value = s.text(2);
        r.scope.range = {s.i64(3), s.i64(4)};
        r.description = s.text(5);
        r.requested_at_ms = s.i64(6);
        r.executed_at_ms = s.i64(7);
        r.rows_removed = static_cast<std::uint64_t>(s.i64(8));
        out.push_back(std::move(r));
    }
    return out;
}

void Store::set_redaction_grace_ms(std::int64_t grace_ms) {
    std::lock_guard lock(mu_);
    grace_ms_ = grace_ms;
}

std::uint64_t Store::retention_sweep(std::int64_t max_age_ms) {
    if (max_age_ms <= 0) throw ValidationError("max_age_ms", "retention age must be positive");
    std::lock_guard lock(mu_);
    Stmt s(db_, "DELETE FROM flows WHERE window_start_ms < ?");
    s.bind(1, clock_() - max_age_ms).run();
    return static_cast<std::uint64_t>(sqlite3_changes(db_));
}

void Store::export_flows(std::ostream& out) const {
    out << Json{{"schema", "hearth.flows"}, {"version", 1}}.dump() << '\n';
    for (const auto& af : query_flows()) {
        auto j = to_json(af.flow);
        j["company"] = af.company;
        j["jurisdiction"] = af.jurisdiction;
        out << j.dump() << '\n';
    }
}

std::uint64_t Store::import_flows(std::istream& in) {
    std::string line;
    int lineno = 0;
    std::vector<AttributedFlow> flows;
    auto bad = [&](const std::string& field, const std::string& what) {
        return ValidationError(field, "line " + std::to_string(lineno) + ": " + what);
    };
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error&) {
            throw bad("line", "malformed JSON");
        }
        if (!header) {
            if (!j.is_object() || j.value("schema", "") != "hearth.flows") throw bad("schema", "missing hearth.flows header");
            if (j.value("version", 0) != 1) throw bad("version", "unsupported export version");
            header = true;
            continue;
        }
        try {
            AttributedFlow af;
            af.flow = flow_from_json(j);
            af.company = require_string(j, "company");
            af.jurisdiction = require_string(j, "jurisdiction");
            if (af.flow.id == 0) throw ValidationError("id", "flow id must be positive");
            flows.push_back(std::move(af));
        } catch (const ValidationError& e) {
            throw bad(e.field(), e.what());
        }
    }
    if (!header) throw ValidationError("schema", "empty export");

    std::lock_guard lock(mu_);
    Txn txn(db_);
    for (auto& af : flows) {
        Stmt exists(db_, "SELECT 1 FROM flows WHERE id = ?");
        exists.bind(1, static_cast<std::int64_t>(af.flow.id));
        if (exists.step()) throw ValidationError("id", "flow id " + std::to_string(af.flow.id) + " already exists");
        insert_flow_locked(af, true);
    }
    txn.commit();
    return flows.size();
}

void Store::set_max_pages(std::int64_t pages) {
    std::lock_guard lock(mu_);
    exec_locked(("PRAGMA max_page_count=" + std::to_string(pages)).c_str());
}

}  // namespace hearth
