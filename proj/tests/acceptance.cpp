// Acceptance run: one PASS/FAIL line per headline criterion, each checked
// against an oracle that does not share code with the path under test.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "gate_surface.hpp"
#include "guard_world.hpp"
#include "hearth/codec.hpp"
#include "hearth/errors.hpp"

using namespace hearth;

namespace {

struct Verdict_ {
    bool ok = true;
    std::string detail;
};

using Check = std::function<Verdict_()>;

#define EXPECT(cond, msg)                        \
    do {                                         \
        if (!(cond)) return Verdict_{false, msg}; \
    } while (0)

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// EU member states, listed here rather than taken from the library.
const std::set<std::string> kEu = {"AT", "BE", "BG", "HR", "CY", "CZ", "DK", "EE", "FI", "FR", "DE", "GR", "HU", "IE",
                                   "IT", "LV", "LT", "LU", "MT", "NL", "PL", "PT", "RO", "SK", "SI", "ES", "SE"};

harness::Options quiet(int stage, bool fixture_a) {
    harness::Options o;
    o.stage = stage;
    o.serve = false;
    o.load_fixture_a = fixture_a;
    return o;
}

// 1M packets from 8 devices over one day, mostly outbound to 12 companies,
// with inbound replies and LAN chatter mixed in.
Verdict_ conservation() {
    constexpr int kPackets = 1'000'000;
    constexpr int kDevices = 8;
    constexpr int kCompanies = 12;
    harness::Gateway h(quiet(1, false));
    auto& gw = *h.gw;

    std::string fixtures;
    const char* jur[] = {"US", "DE", "IE", "FR", "NL", "GB"};
    for (int c = 0; c < kCompanies; ++c)
        fixtures += "41." + std::to_string(c) + ".0.0/16\tCo" + std::to_string(c) + "\t-\t" + jur[c % 6] + "\tnone\n";
    gw.load_fixtures_text(fixtures);

    std::string device_map;
    for (int d = 1; d <= kDevices; ++d) device_map += synth::mac(static_cast<std::uint8_t>(d)).to_string() + "\tdev-" + std::to_string(d) + "\n";
    synth::write_text(h.dir.file("devices.tsv"), device_map);

    std::mt19937 rng(1'000'000);
    std::vector<synth::Packet> packets;
    packets.reserve(kPackets);
    std::uint64_t wire_bytes = 0, outbound_external = 0;
    const std::int64_t t0_us = fixture_a::kT0 * 1000;
    for (int i = 0; i < kPackets; ++i) {
        synth::Packet p;
        p.ts_us = t0_us + static_cast<std::int64_t>(i) * 86'400;  // one day end to end
        const auto dev = static_cast<std::uint8_t>(1 + rng() % kDevices);
        const auto lan = IpAddress::v4(192, 168, 1, static_cast<std::uint8_t>(100 + dev));
        const auto remote = IpAddress::v4(41, static_cast<std::uint8_t>(rng() % kCompanies),
                                          static_cast<std::uint8_t>(rng() % 4), static_cast<std::uint8_t>(1 + rng() % 8));
        p.wire_len = 60 + rng() % 1400;
        const auto kind = rng() % 20;
        if (kind == 0) {  // inbound reply
            p.src_mac = synth::kRouterMac;
            p.dst_mac = synth::mac(dev);
            p.src = remote;
            p.dst = lan;
            p.sport = 443;
            p.dport = 40000;
        } else if (kind == 1) {  // LAN
            p.src_mac = synth::mac(dev);
            p.dst_mac = synth::kRouterMac;
            p.src = lan;
            p.dst = IpAddress::v4(192, 168, 1, 1);
            p.dport = 53;
            p.proto = 17;
        } else {
            p.src_mac = synth::mac(dev);
            p.dst_mac = synth::kRouterMac;
            p.src = lan;
            p.dst = remote;
            p.dport = rng() % 4 ? 443 : 80;
            outbound_external += p.wire_len;
        }
        wire_bytes += p.wire_len;
        packets.push_back(p);
    }
    synth::write_pcap(h.dir.file("big.pcap"), packets);
    packets.clear();
    packets.shrink_to_fit();

    const auto start = std::chrono::steady_clock::now();
    auto r = gw.replay(h.dir.file("big.pcap"), parse_device_map(device_map));
    const TimeWindow all{fixture_a::kT0, fixture_a::kT0 + 2 * fixture_a::kDayMs};
    const auto profile = gw.exposure().profile(all);
    const auto series = gw.exposure().timeseries({}, all, 3'600'000);
    const auto report = gw.exposure().stats_report(all, 3, parse_home_region("EU"));
    const auto flows = gw.store().query_flows();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::uint64_t flow_bytes = 0, flow_packets = 0, bucketed = 0;
    for (const auto& af : flows) {
        flow_bytes += af.flow.byte_count;
        flow_packets += af.flow.packet_count;
        if (af.flow.direction == Direction::Outbound && af.flow.locality == Locality::External)
            bucketed += af.flow.byte_count;
    }
    std::uint64_t profile_bytes = 0, series_bytes = 0;
    for (const auto& row : profile.rows) profile_bytes += row.byte_count;
    for (const auto& pt : series) series_bytes += pt.byte_count;

    EXPECT(r.stats.frames == kPackets, "frames read " + std::to_string(r.stats.frames));
    EXPECT(flow_packets == kPackets, "flow packets " + std::to_string(flow_packets));
    EXPECT(flow_bytes == wire_bytes,
           "flow bytes " + std::to_string(flow_bytes) + " != packet bytes " + std::to_string(wire_bytes));
    EXPECT(bucketed == outbound_external, "outbound external bytes differ");
    EXPECT(profile_bytes == outbound_external && series_bytes == outbound_external &&
               report.total_bytes == outbound_external,
           "profile " + std::to_string(profile_bytes) + " timeseries " + std::to_string(series_bytes) + " report " +
               std::to_string(report.total_bytes) + " expected " + std::to_string(outbound_external));
    EXPECT(secs < 60.0, "took " + num(secs) + " s");
    return {true, std::to_string(kPackets) + " packets, " + std::to_string(flows.size()) + " flows, " +
                      std::to_string(wire_bytes) + " bytes conserved, profile = timeseries = report = " +
                      std::to_string(outbound_external) + ", " + num(secs) + " s"};
}

Verdict_ report_targets() {
    harness::Gateway h(quiet(1, true));
    auto r = h.gw->exposure().stats_report(fixture_a::full_window(), 3, parse_home_region("EU"));
    // Oracle: integer byte totals straight from the fixture table.
    std::vector<std::uint64_t> per_company;
    std::uint64_t total = 0, outside = 0;
    for (const auto& c : fixture_a::companies()) {
        per_company.push_back(c.bytes);
        total += c.bytes;
        if (!kEu.count(c.jurisdiction)) outside += c.bytes;
    }
    std::sort(per_company.rbegin(), per_company.rend());
    const auto top3 = per_company[0] + per_company[1] + per_company[2];
    EXPECT(top3 * 100 == 74 * total, "fixture top-3 is not 74%");
    EXPECT(outside * 100 == 54 * total, "fixture out-of-region is not 54%");
    EXPECT(r.total_bytes == total, "total " + std::to_string(r.total_bytes));
    EXPECT(r.top_n_share == 0.74, "top_3_share " + num(r.top_n_share));
    EXPECT(r.out_of_region_share == 0.54, "out_of_region_share " + num(r.out_of_region_share));
    return {true, "top_3_share=" + num(r.top_n_share) + " out_of_region_share=" + num(r.out_of_region_share)};
}

Verdict_ firewall_equivalence() {
    std::mt19937 rng(200);
    std::uint64_t verdicts = 0, group_probes = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto w = guard_world::make_world(rng);
        auto ds = guard_world::random_directives(rng, w, 50);
        auto flows = guard_world::random_flows(rng, w, 1000);
        auto rs = w.guard->compile(ds, 0);
        for (const auto& f : flows) {
            ++verdicts;
            EXPECT(decide(f, *rs) == guard_world::direct_verdict(w, ds, f),
                   "trial " + std::to_string(trial) + " flow " + std::to_string(f.id) + " disagrees");
        }

        // A group directive alone blocks an address exactly when it lies in
        // a member's address space: every fixture prefix's edges plus random probes.
        const auto root = w.resolver->corporate_group(w.companies[rng() % w.companies.size()]).root;
        FirewallDirective g;
        g.id = 1;
        g.scope = {ScopeKind::Group, root};
        g.state = DirectiveState::Enabled;
        auto grs = w.guard->compile({g}, 0);
        std::vector<IpAddress> probes;
        for (const auto& name : w.companies)
            for (const auto& p : w.resolver->prefixes_of(name)) {
                auto last = p.network().bytes();
                const unsigned host_bits = p.network().bit_width() - p.length();
                const auto v4 = (std::uint32_t(last[12]) << 24) | (std::uint32_t(last[13]) << 16) |
                                (std::uint32_t(last[14]) << 8) | last[15];
                probes.push_back(p.network());
                probes.push_back(IpAddress::v4(host_bits >= 32 ? 0xffffffffu : v4 | ((1u << host_bits) - 1)));
            }
        for (int i = 0; i < 500; ++i) probes.push_back(IpAddress::v4(w.base | (rng() & 0x00ffffffu)));
        for (const auto& ip : probes) {
            FlowRecord f;
            f.id = 1;
            f.device_id = w.device_ids[rng() % w.device_ids.size()];
            f.dst_ip = ip;
            const auto company = w.resolver->resolve(ip, 0).name;
            // Member space: resolved by longest match to a company whose chain ends at the root.
            const bool member = w.resolver->is_known_company(company) && w.resolver->corporate_group(company).root == root;
            ++group_probes;
            EXPECT((decide(f, *grs) == Verdict::Block) == member,
                   "trial " + std::to_string(trial) + " group " + root + " probe " + ip.to_string());
        }
    }
    return {true, "200 trials, " + std::to_string(verdicts) + " verdicts agree; " + std::to_string(group_probes) +
                      " group-union probes exact"};
}

Verdict_ preview_consistency() {
    harness::Gateway h(quiet(3, true));
    auto& gw = *h.gw;
    Blocklist mine{"mine", "Mine", {"C", "E"}, {Prefix::from_string("23.4.4.0/24")}, BlocklistSource::User, true};
    gw.guard().put_blocklist(mine);

    // Extra stored traffic: random devices, companies, unknown hosts and windows.
    std::mt19937 rng(50);
    std::vector<FlowRecord> extra;
    for (int i = 0; i < 600; ++i) {
        FlowRecord f;
        f.device_id = fixture_a::device_id(1 + static_cast<int>(rng() % 2));
        const auto c = rng() % 7;
        f.dst_ip = c < 6 ? IpAddress::v4(23, static_cast<std::uint8_t>(c + 1), static_cast<std::uint8_t>(rng() % 8),
                                         static_cast<std::uint8_t>(1 + rng() % 200))
                         : IpAddress::v4(77, 1, 1, static_cast<std::uint8_t>(1 + rng() % 200));
        f.dst_port = 443;
        f.transport = Transport::Tcp;
        f.window_start_ms = fixture_a::kT0 + static_cast<std::int64_t>(rng() % 2880) * 60'000;
        f.byte_count = 1 + rng() % 9000;
        f.packet_count = 1 + rng() % 20;
        f.direction = Direction::Outbound;
        f.locality = Locality::External;
        f.encryption = classify_encryption(443, Transport::Tcp);
        extra.push_back(f);
    }
    gw.ingest(extra);
    const auto stored = gw.store().query_flows();
    auto root_of = [&](const std::string& company) {
        return gw.resolver().is_known_company(company) ? gw.resolver().corporate_group(company).root : std::string();
    };

    const std::vector<std::string> scopes_company = {"A", "B", "C", "D", "E", "F"};
    for (int trial = 0; trial < 50; ++trial) {
        DirectiveSpec spec;
        if (rng() % 3) spec.device_id = fixture_a::device_id(1 + static_cast<int>(rng() % 2));
        switch (rng() % 3) {
            case 0: spec.scope = {ScopeKind::Company, scopes_company[rng() % 6]}; break;
            case 1: spec.scope = {ScopeKind::Group, scopes_company[rng() % 6]}; break;
            default: spec.scope = {ScopeKind::Blocklist, rng() % 2 ? "mine" : "ads-basic"};
        }
        const auto a = fixture_a::kT0 + static_cast<std::int64_t>(rng() % 2880) * 60'000;
        const TimeWindow window{a, a + 60'000 * static_cast<std::int64_t>(1 + rng() % 2880)};
        const auto p = gw.preview(spec, window);

        // Oracle 1: each directive predicate read directly off the stored attribution.
        // Oracle 2: decide() over the stored flows with the directive compiled alone.
        FirewallDirective d;
        d.id = 1;
        d.device_id = spec.device_id;
        d.scope = spec.scope;
        d.state = DirectiveState::Enabled;
        const auto rs = gw.guard().compile({d}, 0);
        std::uint64_t bytes = 0, flows = 0, window_bytes = 0, decide_bytes = 0, decide_flows = 0;
        std::map<std::string, DeviceImpact> per_device;
        for (const auto& af : stored) {
            if (!window.contains(af.flow.window_start_ms)) continue;
            window_bytes += af.flow.byte_count;
            if (decide(af.flow, *rs) == Verdict::Block) {
                decide_bytes += af.flow.byte_count;
                ++decide_flows;
            }
            if (spec.device_id && *spec.device_id != af.flow.device_id) continue;
            bool hit = false;
            switch (spec.scope.kind) {
                case ScopeKind::Company: hit = af.company == spec.scope.name; break;
                case ScopeKind::Group: hit = root_of(af.company) == spec.scope.name; break;
                case ScopeKind::Blocklist: {
                    const auto list = gw.guard().find_blocklist(spec.scope.name);
                    hit = std::find(list->companies.begin(), list->companies.end(), af.company) != list->companies.end();
                    for (const auto& pre : list->prefixes) hit = hit || pre.contains(af.flow.dst_ip);
                    break;
                }
            }
            if (!hit) continue;
            bytes += af.flow.byte_count;
            ++flows;
            per_device[af.flow.device_id].matched_bytes += af.flow.byte_count;
            ++per_device[af.flow.device_id].matched_flows;
        }
        const auto where = "trial " + std::to_string(trial) + " " + to_json(d).dump();
        EXPECT(p.matched_bytes == bytes && p.matched_flows == flows, where + ": predicate oracle differs");
        EXPECT(p.matched_bytes == decide_bytes && p.matched_flows == decide_flows, where + ": decide count differs");
        EXPECT(p.window_bytes == window_bytes, where + ": window bytes differ");
        EXPECT(p.per_device == per_device, where + ": per-device split differs");
    }
    return {true, "50 randomized directives over " + std::to_string(stored.size()) + " stored flows, exact"};
}

Verdict_ stage_gating() {
    for (std::uint32_t seed = 100; seed < 110; ++seed) {
        auto out = gate::run_trial(seed);
        EXPECT(out.ok, "seed " + std::to_string(seed) + ": " + out.why);
    }
    return {true, "10 randomized replays of the mutate surface: stages 1-2 refused with no effect, stage 3 all succeed"};
}

Verdict_ redaction_completeness() {
    harness::Options o;
    o.stage = 3;
    harness::Gateway h(o);
    auto& gw = *h.gw;
    const auto tv = fixture_a::device_id(2);
    const auto tv_name = fixture_a::device_name(2);
    const auto window = fixture_a::full_window();
    gw.redact({RedactionKind::Device, tv, {}});

    // Brute-force oracle over the fixture table with the device filtered out.
    std::uint64_t bytes = 0, packets = 0, flows = 0;
    std::map<std::string, std::uint64_t> per_company;
    const auto all_flows = fixture_a::flows();
    for (std::size_t i = 0; i < all_flows.size(); ++i) {
        const auto& f = all_flows[i];
        if (f.device_id == tv) continue;
        bytes += f.byte_count;
        packets += f.packet_count;
        ++flows;
        per_company[fixture_a::companies()[i % 6].name] += f.byte_count;
    }

    auto c = h.client();
    const auto q = "start_ms=" + std::to_string(window.start_ms) + "&end_ms=" + std::to_string(window.end_ms);
    std::vector<std::string> reads = {"/v1/flows?" + q, "/v1/buckets?" + q, "/v1/profile?" + q,
                                      "/v1/timeseries?" + q + "&width_ms=3600000", "/v1/report?" + q,
                                      "/v1/devices", "/v1/companies", "/v1/export/flows", "/v1/rules"};
    for (const auto& m : gw.tutor().modules()) reads.push_back("/v1/curriculum/" + m.id + "?" + q);
    for (const auto& name : {"A", "B", "C", "D", "E", "F"}) {
        auto spec = Json{{"window", to_json(window)}, {"device_id", nullptr}, {"scope", {{"kind", "COMPANY"}, {"name", name}}}};
        auto res = c.Post("/v1/directives/preview", spec.dump(), "application/json");
        EXPECT(res && res->status == 200, "preview failed");
        EXPECT(res->body.find(tv) == std::string::npos, "preview mentions the device");
        const auto p = Json::parse(res->body);
        EXPECT(p["matched_bytes"].get<std::uint64_t>() == (per_company.count(name) ? per_company.at(name) : 0),
               std::string("preview bytes for ") + name);
    }
    for (const auto& path : reads) {
        auto res = c.Get(path);
        EXPECT(res && res->status == 200, path + " failed");
        EXPECT(res->body.find(tv) == std::string::npos && res->body.find(tv_name) == std::string::npos,
               path + " still mentions the device");
    }
    std::string events;
    for (std::uint64_t after = 0;;) {
        auto b = gw.events().next(after, std::chrono::milliseconds(0), 100000);
        if (b.events.empty()) break;
        for (const auto& e : b.events)
            if (e.type != "redaction") events += e.data.dump();
        after = b.events.back().seq;
    }
    EXPECT(events.find(tv) == std::string::npos, "event history still mentions the device");

    const auto report = gw.exposure().stats_report(window, 3, parse_home_region("EU"));
    EXPECT(report.total_bytes == bytes && report.total_packets == packets && report.distinct_devices == 1,
           "report totals differ from oracle");
    EXPECT(gw.store().flow_count() == flows, "stored flow count differs");
    const auto profile = gw.exposure().profile(window);
    std::map<std::string, std::uint64_t> seen;
    for (const auto& row : profile.rows) seen[row.company] += row.byte_count;
    EXPECT(seen == per_company, "profile per-company bytes differ");
    std::uint64_t series = 0;
    for (const auto& pt : gw.exposure().timeseries({}, window, 3'600'000)) series += pt.byte_count;
    EXPECT(series == bytes, "timeseries total differs");
    return {true, std::to_string(reads.size() + 6) + " read routes and the event log clean; " + std::to_string(flows) +
                      " flows / " + std::to_string(bytes) + " bytes remain as the oracle predicts"};
}

Verdict_ resolver_determinism() {
    std::mt19937 rng(1000);
    int checked = 0;
    while (checked < 1000) {
        const std::uint32_t base = (static_cast<std::uint32_t>(30 + rng() % 60)) << 24;
        std::string text;
        std::vector<std::pair<Prefix, std::string>> table;
        std::set<Prefix> used;
        // Nested: each new prefix is drawn inside a random earlier one half of the time.
        for (int i = 0; i < 40; ++i) {
            Prefix p;
            if (!table.empty() && rng() % 2) {
                const auto& outer = table[rng() % table.size()].first;
                if (outer.length() >= 30) continue;
                const unsigned len = outer.length() + 1 + rng() % (31 - outer.length());
                const std::uint32_t host = rng() & (0xffffffffu >> outer.length());
                const auto& b = outer.network().bytes();
                const std::uint32_t net = (std::uint32_t(b[12]) << 24) | (std::uint32_t(b[13]) << 16) |
                                          (std::uint32_t(b[14]) << 8) | b[15];
                p = Prefix(IpAddress::v4(net | host), len);
            } else {
                const unsigned len = 8 + rng() % 16;
                p = Prefix(IpAddress::v4(base | (rng() & 0x00ffffffu)), len);
            }
            if (!used.insert(p).second) continue;
            const auto name = "Co" + std::to_string(i);
            table.emplace_back(p, name);
            text += p.to_string() + "\t" + name + "\t-\tUS\tnone\n";
        }
        Resolver r;  // no provider
        r.load_fixtures_text(text);
        for (int i = 0; i < 100 && checked < 1000; ++i, ++checked) {
            IpAddress ip;
            if (rng() % 4) {
                const auto& p = table[rng() % table.size()].first;
                const auto& b = p.network().bytes();
                const std::uint32_t net = (std::uint32_t(b[12]) << 24) | (std::uint32_t(b[13]) << 16) |
                                          (std::uint32_t(b[14]) << 8) | b[15];
                ip = IpAddress::v4(net | (rng() & (p.length() == 0 ? 0xffffffffu : 0xffffffffu >> p.length())));
            } else {
                ip = IpAddress::v4(base | (rng() & 0x00ffffffu));
            }
            // Linear scan longest-prefix oracle.
            std::string expect = "Unknown";
            int best = -1;
            for (const auto& [p, n] : table)
                if (p.contains(ip) && static_cast<int>(p.length()) > best) {
                    best = static_cast<int>(p.length());
                    expect = n;
                }
            const auto got = r.resolve(ip, 1).name;
            EXPECT(got == expect, ip.to_string() + " resolved to " + got + ", oracle " + expect);
        }
    }

    auto stub = std::make_shared<RecordedProvider>();
    CompanyRecord cdn;
    cdn.name = "StubCDN";
    cdn.jurisdiction = "NL";
    stub->record(IpAddress::from_string("203.0.113.9"), cdn);
    Resolver cached({}, stub);
    for (int i = 0; i < 1000; ++i) cached.resolve(IpAddress::from_string("203.0.113.9"), 5'000 + i * 60'000);
    EXPECT(stub->calls() <= 1, "provider called " + std::to_string(stub->calls()) + " times within TTL");
    return {true, "1000 resolves match the linear-scan oracle; 1000 repeats within TTL made " +
                      std::to_string(stub->calls()) + " provider call"};
}

Verdict_ compare_periods() {
    harness::Options o;
    o.stage = 1;
    harness::Gateway h(o);
    auto& gw = *h.gw;
    const std::int64_t a0 = fixture_a::kT0 + 10 * fixture_a::kDayMs;
    const std::int64_t b0 = fixture_a::kT0 + 20 * fixture_a::kDayMs;
    std::vector<FlowRecord> flows;
    auto add = [&](std::int64_t day_start, int minute, std::uint64_t bytes) {
        FlowRecord f;
        f.device_id = fixture_a::device_id(1);
        f.dst_ip = IpAddress::from_string("23.1.4.4");
        f.dst_port = 443;
        f.transport = Transport::Tcp;
        f.window_start_ms = day_start + minute * 60'000;
        f.byte_count = bytes;
        f.packet_count = 1;
        f.direction = Direction::Outbound;
        f.locality = Locality::External;
        flows.push_back(f);
    };
    // A: two days at 400 B/day. B: one day at 1500 B, i.e. 3.75x the daily average.
    add(a0, 5, 300);
    add(a0, 600, 100);
    add(a0 + fixture_a::kDayMs, 7, 400);
    add(b0, 3, 1000);
    add(b0, 900, 500);
    gw.ingest(flows);
    const TimeWindow a{a0, a0 + 2 * fixture_a::kDayMs};
    const TimeWindow b{b0, b0 + fixture_a::kDayMs};
    auto res = h.client().Get("/v1/compare?a_start_ms=" + std::to_string(a.start_ms) + "&a_end_ms=" +
                              std::to_string(a.end_ms) + "&b_start_ms=" + std::to_string(b.start_ms) +
                              "&b_end_ms=" + std::to_string(b.end_ms));
    EXPECT(res && res->status == 200, "compare route failed");
    const auto j = Json::parse(res->body);
    const double change = j["change"].get<double>();
    // Arithmetic oracle in integers: (1500/1 - 800/2) / (800/2) = 1100/400.
    EXPECT(1100 * 100 == 275 * 400, "oracle arithmetic");
    EXPECT(!j["is_new"].get<bool>(), "reported as new");
    EXPECT(change == 2.75, "change " + num(change));
    EXPECT(j["avg_daily_a"].get<double>() == 400.0 && j["avg_daily_b"].get<double>() == 1500.0, "averages differ");
    char pct[16];
    std::snprintf(pct, sizeof pct, "%+.0f%%", change * 100);
    return {true, std::string("3.75x average daily bytes reports ") + pct + " (change=" + num(change) + ")"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, Check>> criteria = {
        {"conservation: 1M-packet replay, totals agree, under 60 s", conservation},
        {"report format: fixture-A top-3 share 0.74, out-of-region 0.54", report_targets},
        {"firewall equivalence: 200 trials plus corporate-group union", firewall_equivalence},
        {"preview consistency: 50 randomized directives", preview_consistency},
        {"stage gating: mutate surface at stages 1, 2 and 3", stage_gating},
        {"redaction completeness: device sweep over every read", redaction_completeness},
        {"resolver determinism: 1000 resolves, cached repeats", resolver_determinism},
        {"compare_periods: 3.75x reports +275%", compare_periods},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict_ v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.ok;
        std::printf("%s  %s -- %s\n", v.ok ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed;
}
