#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "hearth/flowcap.hpp"
#include "hearth/resolver.hpp"

namespace hearth {

inline constexpr std::int64_t kDefaultStorageWidthMs = 60'000;

/// Half-open interval [start_ms, end_ms).
struct TimeWindow {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    bool contains(std::int64_t t) const noexcept { return t >= start_ms && t < end_ms; }
    bool operator==(const TimeWindow&) const = default;
};

struct ExposureBucket {
    std::int64_t bucket_start_ms = 0;
    std::int64_t bucket_width_ms = kDefaultStorageWidthMs;
    std::string device_id;
    std::string company;
    std::string jurisdiction;
    std::uint64_t byte_count = 0;
    std::uint64_t packet_count = 0;

    bool operator==(const ExposureBucket&) const = default;
};

struct ProfileRow {
    std::string device_id;
    std::string company;
    std::string jurisdiction;
    std::uint64_t byte_count = 0;
    std::uint64_t packet_count = 0;
    double share = 0.0;

    bool operator==(const ProfileRow&) const = default;
};

struct ExposureProfile {
    TimeWindow window;
    std::vector<ProfileRow> rows;
};

struct StatsReport {
    std::uint64_t total_packets = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t distinct_devices = 0;
    std::uint64_t distinct_companies = 0;
    std::uint64_t distinct_jurisdictions = 0;
    double top_n_share = 0.0;
    double out_of_region_share = 0.0;

    bool operator==(const StatsReport&) const = default;
};

struct BucketFilter {
    std::optional<std::string> device_id;
    std::optional<std::string> company;

    bool matches(const ExposureBucket& b) const noexcept {
        return (!device_id || *device_id == b.device_id) && (!company || *company == b.company);
    }
};

struct SeriesPoint {
    std::int64_t bucket_start_ms = 0;
    std::uint64_t byte_count = 0;

    bool operator==(const SeriesPoint&) const = default;
};

/// Relative change in average daily bytes from period A to period B.
/// `is_new` marks A = 0 with B > 0, where no ratio exists.
struct PeriodComparison {
    bool is_new = false;
    double change = 0.0;
    double avg_daily_a = 0.0;
    double avg_daily_b = 0.0;
};

using RegionSet = std::set<std::string, std::less<>>;

/// EU member states.
const RegionSet& eu_member_states();
/// Expands a comma-separated list of country codes and the token "EU".
RegionSet parse_home_region(std::string_view spec);

class DuplicateFlowError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class QueryError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ExposureOptions {
    std::int64_t storage_width_ms = kDefaultStorageWidthMs;
    bool include_inbound = false;
};

/// Time-series and aggregate exposure over (device x company x time bucket).
/// One writer, many readers.
class ExposureModel {
public:
    using BucketObserver = std::function<void(const ExposureBucket&)>;

    explicit ExposureModel(ExposureOptions options = {});

    std::int64_t storage_width_ms() const noexcept { return options_.storage_width_ms; }
    bool counts(const FlowRecord& record) const noexcept;

    /// Returns the updated bucket, or nullopt when the flow is not bucketed
    /// (LOCAL, or INBOUND unless configured). Throws DuplicateFlowError for a
    /// repeated record id (no mutation) and std::invalid_argument for id 0.
    std::optional<ExposureBucket> add_flow(const FlowRecord& record, const CompanyRecord& company);

    /// Throws QueryError if start >= end, or the width is not a positive
    /// multiple of the storage width.
    std::vector<SeriesPoint> timeseries(const BucketFilter& filter, TimeWindow window,
                                        std::int64_t bucket_width_ms) const;
    ExposureProfile profile(TimeWindow window) const;
    StatsReport stats_report(TimeWindow window, std::size_t top_n, const RegionSet& home_region) const;
    PeriodComparison compare_periods(TimeWindow a, TimeWindow b, const BucketFilter& filter) const;

    std::vector<ExposureBucket> buckets(TimeWindow window, const BucketFilter& filter = {}) const;
    std::vector<ExposureBucket> all_buckets() const;

    /// Removes buckets matching `pred`; returns how many were removed.
    std::size_t remove_if(const std::function<bool(const ExposureBucket&)>& pred);
    /// Replaces the model contents (e.g. from the store on start-up).
    void restore(const std::vector<ExposureBucket>& buckets);
    void on_bucket(BucketObserver observer);

private:
    using Key = std::tuple<std::int64_t, std::string, std::string>;
    struct Totals {
        std::string jurisdiction;
        std::uint64_t bytes = 0;
        std::uint64_t packets = 0;
    };
    ExposureBucket to_bucket(const Key& k, const Totals& t) const;

    ExposureOptions options_;
    mutable std::shared_mutex mu_;
    std::map<Key, Totals> buckets_;
    std::unordered_set<std::uint64_t> seen_ids_;
    BucketObserver observer_;
};

}  // namespace hearth
