#include <doctest.h>

#include <numeric>
#include <random>

#include "fixture_a.hpp"
#include "hearth/exposure.hpp"

using namespace hearth;

namespace {

CompanyRecord company(const std::string& name, const std::string& j) {
    CompanyRecord c;
    c.name = name;
    c.jurisdiction = j;
    c.threat = Threat::None;
    return c;
}

FlowRecord flow(std::uint64_t id, std::int64_t t, std::uint64_t bytes, const std::string& dev = "dev") {
    FlowRecord r;
    r.id = id;
    r.device_id = dev;
    r.dst_ip = IpAddress::from_string("23.1.1.1");
    r.window_start_ms = t;
    r.byte_count = bytes;
    r.packet_count = 1;
    return r;
}

void load_fixture_a(ExposureModel& m) {
    Resolver res;
    res.load_fixtures_text(fixture_a::fixtures_text());
    for (const auto& f : fixture_a::flows()) m.add_flow(f, res.resolve(f.dst_ip, fixture_a::kT0));
}

}  // namespace

TEST_CASE("add_flow buckets and rejects duplicates") {
    ExposureModel m;
    auto b = m.add_flow(flow(1, 120'000, 600), company("A", "US"));
    REQUIRE(b);
    CHECK(b->byte_count == 600);
    CHECK(m.all_buckets().size() == 1);
    CHECK_THROWS_AS(m.add_flow(flow(1, 120'000, 600), company("A", "US")), DuplicateFlowError);
    CHECK(m.all_buckets().front().byte_count == 600);
    CHECK_THROWS_AS(m.add_flow(flow(0, 0, 1), company("A", "US")), std::invalid_argument);

    // 30 s apart inside one 60 s bucket: manual arithmetic gives 600 + 400 at bucket 120 000.
    m.add_flow(flow(2, 150'000, 400), company("A", "US"));
    auto all = m.all_buckets();
    REQUIRE(all.size() == 1);
    CHECK(all[0].bucket_start_ms == 120'000);
    CHECK(all[0].byte_count == 1000);
    CHECK(all[0].packet_count == 2);
    CHECK(all[0].bucket_start_ms % all[0].bucket_width_ms == 0);
}

TEST_CASE("local and inbound flows are not bucketed by default") {
    ExposureModel m;
    auto local = flow(1, 0, 10);
    local.locality = Locality::Local;
    auto in = flow(2, 0, 10);
    in.direction = Direction::Inbound;
    CHECK_FALSE(m.add_flow(local, company("A", "US")));
    CHECK_FALSE(m.add_flow(in, company("A", "US")));
    CHECK(m.all_buckets().empty());

    ExposureModel with_inbound({kDefaultStorageWidthMs, true});
    CHECK(with_inbound.add_flow(in, company("A", "US")));
}

TEST_CASE("timeseries") {
    ExposureModel m;
    SUBCASE("empty model gives zero series of the right length") {
        auto s = m.timeseries({}, {0, 600'000}, 60'000);
        CHECK(s.size() == 10);
        for (const auto& p : s) CHECK(p.byte_count == 0);
    }
    SUBCASE("single bucket") {
        m.add_flow(flow(1, 120'000, 600), company("A", "US"));
        auto s = m.timeseries({}, {0, 300'000}, 60'000);
        REQUIRE(s.size() == 5);
        CHECK(s[2] == SeriesPoint{120'000, 600});
        CHECK(s[0].byte_count + s[1].byte_count + s[3].byte_count + s[4].byte_count == 0);
    }
    SUBCASE("re-bucketing sums adjacent storage buckets") {
        m.add_flow(flow(1, 120'000, 600), company("A", "US"));
        m.add_flow(flow(2, 180'000, 400), company("A", "US"));
        auto s = m.timeseries({}, {120'000, 240'000}, 120'000);
        REQUIRE(s.size() == 1);
        CHECK(s[0].byte_count == 600 + 400);
    }
    CHECK_THROWS_AS(m.timeseries({}, {0, 600'000}, 90'000), QueryError);
    CHECK_THROWS_AS(m.timeseries({}, {10, 10}, 60'000), QueryError);
}

TEST_CASE("profile ordering and shares on fixture-A") {
    ExposureModel m;
    load_fixture_a(m);
    auto p = m.profile(fixture_a::full_window());
    REQUIRE(p.rows.size() == 6);
    // Oracle: the constructed volumes divided by their 100 000-byte total.
    const char* order[] = {"A", "B", "C", "D", "E", "F"};
    const double shares[] = {0.40, 0.20, 0.14, 0.10, 0.09, 0.07};
    double sum = 0;
    for (int i = 0; i < 6; ++i) {
        CHECK(p.rows[i].company == order[i]);
        CHECK(p.rows[i].share == doctest::Approx(shares[i]).epsilon(1e-12));
        sum += p.rows[i].share;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(p.rows[0].device_id == fixture_a::device_id(1));
    CHECK(p.rows[1].device_id == fixture_a::device_id(2));
}

TEST_CASE("profile edge cases") {
    ExposureModel m;
    CHECK(m.profile({0, 1}).rows.empty());
    m.add_flow(flow(1, 0, 600), company("Solo", "US"));
    auto one = m.profile({0, 60'000});
    REQUIRE(one.rows.size() == 1);
    CHECK(one.rows[0].share == 1.0);
    m.add_flow(flow(2, 0, 600), company("Alpha", "US"));
    auto tie = m.profile({0, 60'000});
    REQUIRE(tie.rows.size() == 2);
    CHECK(tie.rows[0].company == "Alpha");
    CHECK(tie.rows[1].company == "Solo");
}

TEST_CASE("stats_report on fixture-A hits the format targets exactly") {
    ExposureModel m;
    load_fixture_a(m);
    auto r = m.stats_report(fixture_a::full_window(), 3, parse_home_region("EU"));
    CHECK(r.total_bytes == 100'000);
    CHECK(r.total_packets == 240);
    CHECK(r.distinct_devices == 2);
    CHECK(r.distinct_companies == 6);
    CHECK(r.distinct_jurisdictions == 5);
    // (40+20+14)/100 and (40+14)/100, compared exactly.
    CHECK(r.top_n_share == 0.74);
    CHECK(r.out_of_region_share == 0.54);
    CHECK(m.stats_report(fixture_a::full_window(), 100, parse_home_region("EU")).top_n_share == 1.0);
    CHECK(m.stats_report({0, 1}, 3, parse_home_region("EU")) == StatsReport{});
    CHECK_THROWS_AS(m.stats_report(fixture_a::full_window(), 0, {}), QueryError);
}

TEST_CASE("stats_report single company") {
    ExposureModel m;
    m.add_flow(flow(1, 0, 500), company("Solo", "US"));
    CHECK(m.stats_report({0, 60'000}, 3, parse_home_region("EU")).top_n_share == 1.0);
}

TEST_CASE("home region parsing") {
    auto eu = parse_home_region("EU");
    CHECK(eu.size() == 27);
    CHECK(eu.count("DE"));
    CHECK_FALSE(eu.count("GB"));
    auto mixed = parse_home_region("eu, gb");
    CHECK(mixed.size() == 28);
    CHECK(parse_home_region("US").size() == 1);
    CHECK_THROWS_AS(parse_home_region("USA"), std::invalid_argument);
}

TEST_CASE("compare_periods") {
    ExposureModel m;
    const std::int64_t day = kDay;
    m.add_flow(flow(1, 0, 100), company("ISP", "GB"));
    m.add_flow(flow(2, 10 * day, 375), company("ISP", "GB"));
    // Arithmetic oracle: (375 - 100) / 100.
    auto c = m.compare_periods({0, day}, {10 * day, 11 * day}, {});
    CHECK_FALSE(c.is_new);
    CHECK(c.change == 2.75);
    CHECK(c.avg_daily_a == 100.0);
    CHECK(c.avg_daily_b == 375.0);
    CHECK(m.compare_periods({0, day}, {0, day}, {}).change == 0.0);

    m.add_flow(flow(3, 20 * day, 500), company("New Co", "GB"));
    auto fresh = m.compare_periods({0, day}, {20 * day, 21 * day}, BucketFilter{std::nullopt, "New Co"});
    CHECK(fresh.is_new);
    auto none = m.compare_periods({30 * day, 31 * day}, {40 * day, 41 * day}, {});
    CHECK_FALSE(none.is_new);
    CHECK(none.change == 0.0);
    // Unequal durations: 100 B over 1 day vs 750 B over 2 days is the same +275%.
    m.add_flow(flow(4, 50 * day, 750), company("ISP", "GB"));
    CHECK(m.compare_periods({0, day}, {50 * day, 52 * day}, {}).change == 2.75);
}

TEST_CASE("remove_if and restore") {
    ExposureModel m;
    load_fixture_a(m);
    auto removed = m.remove_if([](const ExposureBucket& b) { return b.device_id == fixture_a::device_id(1); });
    CHECK(removed == 12);
    for (const auto& b : m.all_buckets()) CHECK(b.device_id == fixture_a::device_id(2));
    auto snapshot = m.all_buckets();
    ExposureModel other;
    other.restore(snapshot);
    CHECK(other.all_buckets() == snapshot);
}

TEST_CASE("property: model agrees with a naive full scan") {
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 12; ++trial) {
        ExposureModel m;
        std::vector<std::pair<FlowRecord, CompanyRecord>> flows;
        const int n = 1 + static_cast<int>(rng() % 10'000);
        const char* js[] = {"US", "DE", "FR", "IE", "GB", "CN", "??"};
        for (int i = 0; i < n; ++i) {
            auto f = flow(static_cast<std::uint64_t>(i + 1), static_cast<std::int64_t>(rng() % (3 * kDay)),
                          1 + rng() % 5000, "dev" + std::to_string(rng() % 5));
            f.packet_count = 1 + rng() % 10;
            if (rng() % 10 == 0) f.locality = Locality::Local;
            if (rng() % 10 == 0) f.direction = Direction::Inbound;
            int ci = static_cast<int>(rng() % 40);
            auto c = company("Co" + std::to_string(ci), js[ci % 7]);
            m.add_flow(f, c);
            flows.emplace_back(f, c);
        }
        TimeWindow w{static_cast<std::int64_t>(rng() % kDay), kDay + static_cast<std::int64_t>(rng() % (2 * kDay))};
        w.start_ms -= w.start_ms % 60'000;

        // Oracle straight from the flow list.
        std::map<std::pair<std::string, std::string>, std::uint64_t> rows;
        std::map<std::string, std::uint64_t> per_company;
        std::uint64_t total = 0, out_eu = 0, packets = 0;
        std::set<std::string> devs, jur;
        for (const auto& [f, c] : flows) {
            if (f.locality != Locality::External || f.direction != Direction::Outbound) continue;
            const std::int64_t bucket = f.window_start_ms - f.window_start_ms % 60'000;
            if (!w.contains(bucket)) continue;
            rows[{f.device_id, c.name}] += f.byte_count;
            per_company[c.name] += f.byte_count;
            total += f.byte_count;
            packets += f.packet_count;
            devs.insert(f.device_id);
            jur.insert(c.jurisdiction);
            if (!eu_member_states().count(c.jurisdiction)) out_eu += f.byte_count;
        }

        auto p = m.profile(w);
        REQUIRE(p.rows.size() == rows.size());
        std::uint64_t prof_total = 0;
        double share_sum = 0;
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            const auto& r = p.rows[i];
            REQUIRE(r.byte_count == rows.at({r.device_id, r.company}));
            REQUIRE(r.share == static_cast<double>(r.byte_count) / static_cast<double>(total));
            if (i) {
                const auto& prev = p.rows[i - 1];
                REQUIRE((prev.byte_count > r.byte_count ||
                         (prev.byte_count == r.byte_count && prev.company <= r.company)));
            }
            prof_total += r.byte_count;
            share_sum += r.share;
        }
        REQUIRE(prof_total == total);
        if (total) REQUIRE(std::abs(share_sum - 1.0) <= 1e-9);

        std::vector<std::uint64_t> vols;
        for (const auto& [_, v] : per_company) vols.push_back(v);
        std::sort(vols.rbegin(), vols.rend());
        double prev_share = 0;
        for (std::size_t topn : {1u, 2u, 3u, 5u, 10u, 50u}) {
            auto rep = m.stats_report(w, topn, eu_member_states());
            std::uint64_t top = std::accumulate(vols.begin(), vols.begin() + static_cast<std::ptrdiff_t>(std::min(topn, vols.size())), std::uint64_t{0});
            REQUIRE(rep.total_bytes == total);
            REQUIRE(rep.total_packets == packets);
            REQUIRE(rep.distinct_devices == devs.size());
            REQUIRE(rep.distinct_companies == per_company.size());
            REQUIRE(rep.distinct_jurisdictions == jur.size());
            REQUIRE(rep.top_n_share == (total ? static_cast<double>(top) / static_cast<double>(total) : 0.0));
            REQUIRE(rep.out_of_region_share == (total ? static_cast<double>(out_eu) / static_cast<double>(total) : 0.0));
            REQUIRE(rep.top_n_share >= prev_share);
            if (topn >= per_company.size() && total) REQUIRE(rep.top_n_share == 1.0);
            prev_share = rep.top_n_share;
        }

        // Re-bucketing invariance and conservation against the series.
        for (std::int64_t k : {1, 2, 5, 60}) {
            auto s = m.timeseries({}, w, 60'000 * k);
            std::uint64_t st = 0;
            for (const auto& pt : s) st += pt.byte_count;
            REQUIRE(st == total);
        }
    }
}
