#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hearth/exposure.hpp"
#include "hearth/flowcap.hpp"
#include "hearth/guard.hpp"
#include "hearth/resolver.hpp"
#include "hearth/stage.hpp"

struct sqlite3;

namespace hearth {

inline constexpr std::int64_t kDefaultRetentionMs = 42 * kDay;
inline constexpr std::int64_t kDefaultRedactionGraceMs = 5 * 60'000;

class StoreError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The database file is out of space. Callers pause ingest; nothing was written.
class StorageFullError : public StoreError {
    using StoreError::StoreError;
};

/// A write fell inside a recently redacted scope and was refused.
class RedactedScopeError : public StoreError {
    using StoreError::StoreError;
};

struct FlowFilter {
    std::optional<std::uint64_t> id;
    std::optional<std::string> device_id;
    std::optional<std::string> company;
    std::optional<TimeWindow> window;
};

enum class RedactionKind : std::uint8_t { Device, Company, TimeRange };
std::string_view to_string(RedactionKind k) noexcept;
std::optional<RedactionKind> parse_redaction_kind(std::string_view s) noexcept;

struct RedactionScope {
    RedactionKind kind = RedactionKind::Device;
    std::string value;  // device id or company name
    TimeWindow range;   // TimeRange only

    /// Human-readable scope, kept in the audit log instead of the data.
    std::string describe() const;
    bool operator==(const RedactionScope&) const = default;
};

struct RedactionRequest {
    std::uint64_t id = 0;
    RedactionScope scope;
    std::int64_t requested_at_ms = 0;
    std::optional<std::int64_t> executed_at_ms;
    std::uint64_t rows_removed = 0;
    std::string description;

    bool operator==(const RedactionRequest&) const = default;
};

using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

/// SQLite-backed persistence. One connection guarded by a mutex: writes are
/// serialized, reads see every acknowledged write.
class Store {
public:
    /// `path` may be ":memory:". Throws StoreError if the file cannot be opened.
    explicit Store(const std::string& path, Clock clock = system_clock_ms);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Assigns and returns a fresh id. Throws RedactedScopeError inside a
    /// redaction grace period and StorageFullError when the disk is full.
    std::uint64_t persist_flow(AttributedFlow& flow);
    /// One transaction. Flows refused by a redaction tombstone get id 0 and are
    /// skipped; returns how many were refused. StorageFullError rolls back all.
    std::size_t persist_flows(std::vector<AttributedFlow>& flows);
    std::vector<AttributedFlow> query_flows(const FlowFilter& filter = {}) const;
    std::uint64_t flow_count() const;

    /// Replaces the stored totals for the bucket's key.
    void put_bucket(const ExposureBucket& bucket);
    void put_buckets(const std::vector<ExposureBucket>& buckets);
    std::vector<ExposureBucket> buckets() const;

    void put_device(const Device& device);
    std::vector<Device> devices() const;

    void put_cache(const std::vector<CacheEntry>& entries);
    std::vector<CacheEntry> cache() const;

    void put_directive(const FirewallDirective& directive);
    std::vector<FirewallDirective> directives() const;

    void put_blocklist(const Blocklist& list);
    std::vector<Blocklist> blocklists() const;

    void put_completion(const std::string& module_id, std::int64_t completed_at_ms);
    std::map<std::string, std::int64_t> completions() const;

    void put_stage(const StageConfig& stage);
    std::optional<StageConfig> stage() const;

    /// Removes every flow, bucket and derived row in scope in one transaction,
    /// mirrors the removal in `exposure` if given, and appends an audit entry.
    /// Time ranges must align to the bucket width. Throws ValidationError.
    RedactionRequest redact(const RedactionScope& scope, ExposureModel* exposure = nullptr,
                            std::int64_t bucket_width_ms = kDefaultStorageWidthMs);
    /// Append-only; oldest first.
    std::vector<RedactionRequest> audit() const;
    void set_redaction_grace_ms(std::int64_t grace_ms);

    /// Deletes raw flows older than `max_age_ms`; buckets stay. Returns rows removed.
    std::uint64_t retention_sweep(std::int64_t max_age_ms = kDefaultRetentionMs);

    /// JSON lines: a schema header, then one flow per line in id order.
    void export_flows(std::ostream& out) const;
    /// Re-imports an export, keeping ids. All-or-nothing; throws ValidationError
    /// naming the line on malformed input or an id clash. Returns flows added.
    std::uint64_t import_flows(std::istream& in);

    /// Test hook: caps the database size in pages.
    void set_max_pages(std::int64_t pages);

private:
    struct Tombstone {
        RedactionScope scope;
        std::int64_t until_ms;
    };
    bool tombstoned_locked(const AttributedFlow& flow, std::int64_t now) const;
    void insert_flow_locked(AttributedFlow& flow, bool keep_id);
    void exec_locked(const char* sql) const;
    void put_json_locked(const char* table, const std::string& key, const std::string& json);
    std::vector<std::string> get_json_locked(const char* table) const;

    sqlite3* db_ = nullptr;
    Clock clock_;
    mutable std::mutex mu_;
    std::vector<Tombstone> tombstones_;
    std::int64_t grace_ms_ = kDefaultRedactionGraceMs;
};

}  // namespace hearth
