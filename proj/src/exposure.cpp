#include "hearth/exposure.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>

namespace hearth {

namespace {

std::int64_t floor_to(std::int64_t t, std::int64_t w) {
    auto q = t / w;
    if (t % w != 0 && t < 0) --q;
    return q * w;
}

constexpr std::size_t kMaxSeriesPoints = 2'000'000;

}  // namespace

const RegionSet& eu_member_states() {
    static const RegionSet eu = {"AT", "BE", "BG", "HR", "CY", "CZ", "DK", "EE", "FI", "FR", "DE", "GR", "HU", "IE",
                                 "IT", "LV", "LT", "LU", "MT", "NL", "PL", "PT", "RO", "SK", "SI", "ES", "SE"};
    return eu;
}

RegionSet parse_home_region(std::string_view spec) {
    RegionSet out;
    std::size_t start = 0;
    while (start <= spec.size()) {
        auto comma = spec.find(',', start);
        auto tok = spec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        std::string code;
        for (char c : tok)
            if (!std::isspace(static_cast<unsigned char>(c))) code.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (code == "EU") {
            out.insert(eu_member_states().begin(), eu_member_states().end());
        } else if (!code.empty()) {
            if (!is_valid_jurisdiction(code) || code == kUnknownJurisdiction)
                throw std::invalid_argument("invalid home region code '" + code + "'");
            out.insert(code);
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

ExposureModel::ExposureModel(ExposureOptions options) : options_(options) {
    if (options_.storage_width_ms <= 0) throw std::invalid_argument("storage width must be positive");
}

bool ExposureModel::counts(const FlowRecord& r) const noexcept {
    return r.locality == Locality::External && (r.direction == Direction::Outbound || options_.include_inbound);
}

std::optional<ExposureBucket> ExposureModel::add_flow(const FlowRecord& record, const CompanyRecord& company) {
    if (record.id == 0) throw std::invalid_argument("flow record has no id");
    ExposureBucket updated;
    {
        std::unique_lock lock(mu_);
        if (seen_ids_.count(record.id))
            throw DuplicateFlowError("flow record " + std::to_string(record.id) + " already added");
        seen_ids_.insert(record.id);
        if (!counts(record)) return std::nullopt;
        Key key{floor_to(record.window_start_ms, options_.storage_width_ms), record.device_id, company.name};
        auto [it, inserted] = buckets_.try_emplace(key);
        if (inserted) it->second.jurisdiction = company.jurisdiction;
        it->second.bytes += record.byte_count;
        it->second.packets += record.packet_count;
        updated = to_bucket(it->first, it->second);
    }
    if (observer_) observer_(updated);
    return updated;
}

ExposureBucket ExposureModel::to_bucket(const Key& k, const Totals& t) const {
    ExposureBucket b;
    b.bucket_start_ms = std::get<0>(k);
    b.bucket_width_ms = options_.storage_width_ms;
    b.device_id = std::get<1>(k);
    b.company = std::get<2>(k);
    b.jurisdiction = t.jurisdiction;
    b.byte_count = t.bytes;
    b.packet_count = t.packets;
    return b;
}

std::vector<ExposureBucket> ExposureModel::buckets(TimeWindow window, const BucketFilter& filter) const {
    std::shared_lock lock(mu_);
    std::vector<ExposureBucket> out;
    auto lo = buckets_.lower_bound(Key{window.start_ms, {}, {}});
    for (auto it = lo; it != buckets_.end() && std::get<0>(it->first) < window.end_ms; ++it) {
        auto b = to_bucket(it->first, it->second);
        if (filter.matches(b)) out.push_back(std::move(b));
    }
    return out;
}

std::vector<ExposureBucket> ExposureModel::all_buckets() const {
    std::shared_lock lock(mu_);
    std::vector<ExposureBucket> out;
    out.reserve(buckets_.size());
    for (const auto& [k, t] : buckets_) out.push_back(to_bucket(k, t));
    return out;
}

std::vector<SeriesPoint> ExposureModel::timeseries(const BucketFilter& filter, TimeWindow window,
                                                   std::int64_t width) const {
    if (window.start_ms >= window.end_ms) throw QueryError("window start must precede end");
    if (width <= 0 || width % options_.storage_width_ms != 0)
        throw QueryError("bucket width " + std::to_string(width) + " is not a multiple of the storage width " +
                         std::to_string(options_.storage_width_ms));
    const std::int64_t first = floor_to(window.start_ms, width);
    const std::int64_t last = floor_to(window.end_ms - 1, width);
    const auto n = static_cast<std::size_t>((last - first) / width + 1);
    if (n > kMaxSeriesPoints) throw QueryError("series would have " + std::to_string(n) + " points");

    std::vector<SeriesPoint> series(n);
    for (std::size_t i = 0; i < n; ++i) series[i].bucket_start_ms = first + static_cast<std::int64_t>(i) * width;
    for (const auto& b : buckets(window, filter)) {
        auto idx = static_cast<std::size_t>((floor_to(b.bucket_start_ms, width) - first) / width);
        series[idx].byte_count += b.byte_count;
    }
    return series;
}

ExposureProfile ExposureModel::profile(TimeWindow window) const {
    ExposureProfile p;
    p.window = window;
    std::map<std::pair<std::string, std::string>, ProfileRow> rows;
    std::uint64_t total = 0;
    for (const auto& b : buckets(window)) {
        auto& row = rows[{b.device_id, b.company}];
        if (row.company.empty()) {
            row.device_id = b.device_id;
            row.company = b.company;
            row.jurisdiction = b.jurisdiction;
        }
        row.byte_count += b.byte_count;
        row.packet_count += b.packet_count;
        total += b.byte_count;
    }
    p.rows.reserve(rows.size());
    for (auto& [_, r] : rows) {
        r.share = total ? static_cast<double>(r.byte_count) / static_cast<double>(total) : 0.0;
        p.rows.push_back(std::move(r));
    }
    std::sort(p.rows.begin(), p.rows.end(), [](const ProfileRow& a, const ProfileRow& b) {
        if (a.byte_count != b.byte_count) return a.byte_count > b.byte_count;
        if (a.company != b.company) return a.company < b.company;
        return a.device_id < b.device_id;
    });
    return p;
}

StatsReport ExposureModel::stats_report(TimeWindow window, std::size_t top_n, const RegionSet& home_region) const {
    if (top_n < 1) throw QueryError("top_n must be at least 1");
    StatsReport r;
    std::set<std::string> devices, jurisdictions;
    std::map<std::string, std::uint64_t> by_company;
    std::uint64_t out_of_region = 0;
    for (const auto& b : buckets(window)) {
        r.total_bytes += b.byte_count;
        r.total_packets += b.packet_count;
        devices.insert(b.device_id);
        jurisdictions.insert(b.jurisdiction);
        by_company[b.company] += b.byte_count;
        if (!home_region.count(b.jurisdiction)) out_of_region += b.byte_count;
    }
    r.distinct_devices = devices.size();
    r.distinct_companies = by_company.size();
    r.distinct_jurisdictions = jurisdictions.size();
    if (r.total_bytes == 0) return r;

    std::vector<std::uint64_t> volumes;
    volumes.reserve(by_company.size());
    for (const auto& [_, v] : by_company) volumes.push_back(v);
    std::sort(volumes.begin(), volumes.end(), std::greater<>());
    std::uint64_t top = 0;
    for (std::size_t i = 0; i < std::min(top_n, volumes.size()); ++i) top += volumes[i];
    // One division per share keeps results exact to the nearest double.
    r.top_n_share = static_cast<double>(top) / static_cast<double>(r.total_bytes);
    r.out_of_region_share = static_cast<double>(out_of_region) / static_cast<double>(r.total_bytes);
    return r;
}

PeriodComparison ExposureModel::compare_periods(TimeWindow a, TimeWindow b, const BucketFilter& filter) const {
    if (a.start_ms >= a.end_ms || b.start_ms >= b.end_ms) throw QueryError("both windows must have positive duration");
    auto sum = [&](TimeWindow w) {
        std::uint64_t s = 0;
        for (const auto& bk : buckets(w, filter)) s += bk.byte_count;
        return s;
    };
    const std::uint64_t bytes_a = sum(a), bytes_b = sum(b);
    const auto dur_a = static_cast<__int128>(a.end_ms - a.start_ms);
    const auto dur_b = static_cast<__int128>(b.end_ms - b.start_ms);

    PeriodComparison c;
    c.avg_daily_a = static_cast<double>(static_cast<__int128>(bytes_a) * kDay) / static_cast<double>(dur_a);
    c.avg_daily_b = static_cast<double>(static_cast<__int128>(bytes_b) * kDay) / static_cast<double>(dur_b);
    if (bytes_a == 0) {
        c.is_new = bytes_b > 0;
        c.change = 0.0;
        return c;
    }
    // (b/db - a/da) / (a/da) = (b*da - a*db) / (a*db), evaluated in integers.
    const __int128 num = static_cast<__int128>(bytes_b) * dur_a - static_cast<__int128>(bytes_a) * dur_b;
    const __int128 den = static_cast<__int128>(bytes_a) * dur_b;
    c.change = static_cast<double>(num) / static_cast<double>(den);
    return c;
}

std::size_t ExposureModel::remove_if(const std::function<bool(const ExposureBucket&)>& pred) {
    std::unique_lock lock(mu_);
    return std::erase_if(buckets_, [&](const auto& kv) { return pred(to_bucket(kv.first, kv.second)); });
}

void ExposureModel::restore(const std::vector<ExposureBucket>& buckets) {
    std::unique_lock lock(mu_);
    buckets_.clear();
    for (const auto& b : buckets) {
        auto& t = buckets_[Key{b.bucket_start_ms, b.device_id, b.company}];
        t.jurisdiction = b.jurisdiction;
        t.bytes += b.byte_count;
        t.packets += b.packet_count;
    }
}

void ExposureModel::on_bucket(BucketObserver observer) { observer_ = std::move(observer); }

}  // namespace hearth
