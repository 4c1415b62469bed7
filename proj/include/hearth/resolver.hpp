#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hearth/net.hpp"
#include "hearth/prefix_trie.hpp"

namespace hearth {

enum class Threat : std::uint8_t { None, Suspicious, Malicious, Unknown };
enum class RecordSource : std::uint8_t { Fixture, Provider, Manual };

std::string_view to_string(Threat t) noexcept;
std::string_view to_string(RecordSource s) noexcept;
std::optional<Threat> parse_threat(std::string_view s) noexcept;
std::optional<RecordSource> parse_record_source(std::string_view s) noexcept;

inline constexpr std::int64_t kDay = 86'400'000;
inline constexpr std::int64_t kDefaultRecordTtlMs = 7 * kDay;
inline constexpr std::int64_t kFailureTtlMs = 3'600'000;
inline constexpr std::string_view kUnknownCompany = "Unknown";
inline constexpr std::string_view kUnknownJurisdiction = "??";

struct CompanyRecord {
    std::string name{kUnknownCompany};
    std::optional<std::string> parent;
    std::string jurisdiction{kUnknownJurisdiction};
    Threat threat = Threat::Unknown;
    RecordSource source = RecordSource::Fixture;
    std::int64_t resolved_at_ms = 0;
    std::int64_t ttl_ms = kDefaultRecordTtlMs;

    bool is_unknown() const noexcept { return name == kUnknownCompany; }
    bool operator==(const CompanyRecord&) const = default;
};

/// ISO 3166-1 alpha-2 shape check (two ASCII capitals) or "??".
bool is_valid_jurisdiction(std::string_view code) noexcept;

struct FixtureEntry {
    Prefix cidr;
    CompanyRecord company;  // template: resolved_at_ms unused
    int line = 0;
};

class FixtureError : public std::runtime_error {
public:
    FixtureError(const std::string& what, std::vector<int> lines)
        : std::runtime_error(what), lines_(std::move(lines)) {}
    const std::vector<int>& lines() const noexcept { return lines_; }

private:
    std::vector<int> lines_;
};

/// Parses the tab-separated fixture format:
/// `CIDR<TAB>name<TAB>parent-or-"-"<TAB>jurisdiction<TAB>threat`.
std::vector<FixtureEntry> parse_fixtures(std::string_view text);

/// Enrichment provider contract: one call maps an external address to a
/// company. Implementations throw ProviderError on timeout or failure.
class ResolutionProvider {
public:
    virtual ~ResolutionProvider() = default;
    virtual CompanyRecord lookup(const IpAddress& ip) = 0;
};

class ProviderError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Replays recorded responses. Unrecorded addresses raise ProviderError.
class RecordedProvider : public ResolutionProvider {
public:
    void record(const IpAddress& ip, CompanyRecord response);
    /// Loads `ip<TAB>name<TAB>parent<TAB>jurisdiction<TAB>threat` lines.
    void load(std::string_view text);
    void set_failing(bool failing) { failing_ = failing; }
    std::uint64_t calls() const noexcept { return calls_; }

    CompanyRecord lookup(const IpAddress& ip) override;

private:
    std::mutex mu_;
    std::map<IpAddress, CompanyRecord> responses_;
    bool failing_ = false;
    std::uint64_t calls_ = 0;
};

class GroupCycleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GroupResult {
    std::string root;
    bool unknown = false;  // company absent from fixture/provider data
};

/// One prefix-to-company binding. Higher `layer` wins over lower, then the
/// longer prefix: 0 fixture, 1 manual, 2 cached provider answer (host prefix).
struct Attribution {
    Prefix prefix;
    std::string company;
    int layer = 0;
};

struct ResolverOptions {
    std::int64_t record_ttl_ms = kDefaultRecordTtlMs;
    std::int64_t failure_ttl_ms = kFailureTtlMs;
};

struct CacheEntry {
    IpAddress ip;
    CompanyRecord record;
};

/// Destination enrichment: cache, then fixture longest-prefix match, then
/// provider, then an Unknown record. Safe for concurrent use.
class Resolver {
public:
    explicit Resolver(ResolverOptions options = {}, std::shared_ptr<ResolutionProvider> provider = nullptr);

    void set_provider(std::shared_ptr<ResolutionProvider> provider);

    /// Replaces the fixture set atomically. Throws FixtureError (nothing changes).
    std::size_t load_fixtures(const std::string& path);
    std::size_t load_fixtures_text(std::string_view text);

    /// Manual override for a prefix; checked before fixtures.
    void assign(const Prefix& prefix, CompanyRecord record);

    /// Throws std::invalid_argument for LOCAL addresses.
    CompanyRecord resolve(const IpAddress& ip, std::int64_t now_ms);

    /// Follows parent links to the root. Throws GroupCycleError.
    GroupResult corporate_group(std::string_view company) const;
    /// Every known company whose group root is `root` (including the root if known).
    std::vector<std::string> group_members(std::string_view root) const;

    /// Prefixes currently attributed to `company`: fixture and manual
    /// prefixes plus host prefixes of cached provider answers.
    std::vector<Prefix> prefixes_of(std::string_view company) const;

    /// Every binding that can decide a resolve. Cached provider answers are
    /// included regardless of expiry.
    std::vector<Attribution> attributions() const;

    std::vector<std::string> company_names() const;
    std::optional<CompanyRecord> company_info(std::string_view name) const;
    bool is_known_company(std::string_view name) const;

    /// Bumped whenever the company-to-prefix attribution may have changed.
    std::uint64_t generation() const noexcept;

    std::vector<CacheEntry> cache_snapshot() const;
    void restore_cache(const std::vector<CacheEntry>& entries);
    /// Forgets every cached answer naming `company`; returns how many.
    std::size_t drop_cached(std::string_view company);
    std::size_t fixture_count() const;

    /// Fired after a resolve that was not served from cache.
    void on_resolved(std::function<void(const IpAddress&, const CompanyRecord&)> cb);

private:
    struct Layer {
        PrefixTrie<CompanyRecord> trie;
        std::vector<FixtureEntry> entries;
    };

    CompanyRecord lookup_uncached(const IpAddress& ip, std::int64_t now_ms);
    void rebuild_company_index_locked();

    ResolverOptions options_;
    std::shared_ptr<ResolutionProvider> provider_;

    mutable std::shared_mutex data_mu_;
    Layer fixtures_;
    Layer manual_;
    std::map<std::string, CompanyRecord, std::less<>> companies_;  // name -> template
    std::map<std::string, std::optional<std::string>, std::less<>> parents_;

    mutable std::mutex cache_mu_;
    std::map<IpAddress, CompanyRecord> cache_;
    std::map<IpAddress, std::shared_future<CompanyRecord>> inflight_;
    std::uint64_t generation_ = 0;

    std::function<void(const IpAddress&, const CompanyRecord&)> on_resolved_;
};

}  // namespace hearth
