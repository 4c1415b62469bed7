#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "hearth/flowcap.hpp"
#include "synth.hpp"

using namespace hearth;

namespace {

const std::string kSalt = "test-salt";

synth::Packet outbound(std::int64_t ts_ms, std::uint32_t len, const char* dst = "93.184.216.34",
                       std::uint16_t dport = 443, std::uint8_t dev = 1) {
    synth::Packet p;
    p.ts_us = ts_ms * 1000;
    p.src_mac = synth::mac(dev);
    p.dst_mac = synth::kRouterMac;
    p.src = IpAddress::from_string("192.168.1." + std::to_string(100 + dev));
    p.dst = IpAddress::from_string(dst);
    p.dport = dport;
    p.wire_len = len;
    return p;
}

}  // namespace

TEST_CASE("classify_encryption port rules") {
    CHECK(classify_encryption(443, Transport::Tcp) == Encryption::Encrypted);
    CHECK(classify_encryption(853, Transport::Tcp) == Encryption::Encrypted);
    CHECK(classify_encryption(8443, Transport::Tcp) == Encryption::Encrypted);
    CHECK(classify_encryption(443, Transport::Udp) == Encryption::Unknown);
    CHECK(classify_encryption(80, Transport::Tcp) == Encryption::Plaintext);
    CHECK(classify_encryption(53, Transport::Udp) == Encryption::Plaintext);
    CHECK(classify_encryption(1234, Transport::Udp) == Encryption::Unknown);
}

TEST_CASE("register_device hashes with the salt") {
    auto mac = *MacAddress::parse("aa:bb:cc:dd:ee:ff");
    auto a = register_device(mac, "tv", kSalt);
    auto b = register_device(mac, "tv", kSalt);
    auto c = register_device(mac, "tv", "other-salt");
    CHECK(a.device_id == b.device_id);
    CHECK(a.device_id != c.device_id);
    CHECK(a.device_id.size() == 32);
    // Neither the textual nor the raw MAC survives in the record.
    CHECK(a.device_id.find("aabbccddeeff") == std::string::npos);
    const std::string raw(reinterpret_cast<const char*>(mac.bytes.data()), 6);
    CHECK(a.device_id.find(raw) == std::string::npos);
    CHECK(a.friendly_name.find(raw) == std::string::npos);
    CHECK_THROWS_AS(register_device(mac, "tv", ""), DeviceError);
}

TEST_CASE("registry rejects conflicting names") {
    DeviceRegistry reg(kSalt);
    auto mac = synth::mac(1);
    reg.register_device(mac, "sams-iphone");
    CHECK_NOTHROW(reg.register_device(mac, "sams-iphone"));
    try {
        reg.register_device(mac, "kitchen-speaker");
        FAIL("expected DeviceError");
    } catch (const DeviceError& e) {
        CHECK(std::string(e.what()).find("sams-iphone") != std::string::npos);
    }
}

TEST_CASE("device map parsing") {
    auto entries = parse_device_map("# household\n02:00:00:00:00:01\tSam's iPhone\n\n02:00:00:00:00:02\tTV\r\n");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].name == "Sam's iPhone");
    CHECK(entries[1].name == "TV");
    CHECK_THROWS_WITH_AS(parse_device_map("02:00:00:00:00:01 missing-tab\n"), doctest::Contains("line 1"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_device_map("\nzz:00:00:00:00:01\tx\n"), doctest::Contains("line 2"),
                         std::invalid_argument);
}

TEST_CASE("empty capture yields no records") {
    synth::TempDir dir;
    DeviceRegistry reg(kSalt);
    synth::write_text(dir.file("zero.pcap"), "");
    CHECK(ingest_pcap(dir.file("zero.pcap"), reg, {}).empty());
    synth::write_pcap(dir.file("hdr.pcap"), {});
    CHECK(ingest_pcap(dir.file("hdr.pcap"), reg, {}).empty());
}

TEST_CASE("three packets in one window merge") {
    synth::TempDir dir;
    std::vector<synth::Packet> pkts = {outbound(1'200'000, 100), outbound(1'210'000, 200), outbound(1'259'999, 300)};
    // Oracle: per-packet sum over the synthetic capture.
    std::uint64_t bytes = 0;
    for (const auto& p : pkts) bytes += p.wire_len;
    REQUIRE(bytes == 600);

    synth::write_pcap(dir.file("three.pcap"), pkts);
    DeviceRegistry reg(kSalt);
    std::vector<DeviceMapEntry> map{{synth::mac(1), "phone"}};
    auto recs = ingest_pcap(dir.file("three.pcap"), reg, map);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].byte_count == bytes);
    CHECK(recs[0].packet_count == 3);
    CHECK(recs[0].window_start_ms == 1'200'000);
    CHECK(recs[0].encryption == Encryption::Encrypted);
    CHECK(recs[0].locality == Locality::External);
    CHECK(recs[0].direction == Direction::Outbound);
    CHECK(recs[0].device_id == hash_device_id(synth::mac(1), kSalt));
}

TEST_CASE("local destinations are marked LOCAL") {
    synth::TempDir dir;
    synth::write_pcap(dir.file("local.pcap"), {outbound(5'000, 80, "192.168.1.10", 8009)});
    DeviceRegistry reg(kSalt);
    auto recs = ingest_pcap(dir.file("local.pcap"), reg, {});
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].locality == Locality::Local);
}

TEST_CASE("unknown MACs are auto-registered, inbound attributed to the receiving device") {
    synth::TempDir dir;
    auto in = outbound(7'000, 1500);
    std::swap(in.src, in.dst);
    std::swap(in.src_mac, in.dst_mac);
    std::swap(in.sport, in.dport);
    synth::write_pcap(dir.file("in.pcap"), {outbound(7'000, 90, "8.8.8.8", 53, 9), in});
    DeviceRegistry reg(kSalt);
    IngestStats stats;
    auto recs = ingest_pcap(dir.file("in.pcap"), reg, {{{synth::mac(1), "phone"}}}, kDefaultCoalesceWindowMs, &stats);
    REQUIRE(recs.size() == 2);
    auto dev9 = reg.find(hash_device_id(synth::mac(9), kSalt));
    REQUIRE(dev9);
    CHECK(dev9->friendly_name == "unrecognised-" + dev9->device_id.substr(0, 8));
    CHECK(stats.auto_registered == std::vector<std::string>{dev9->device_id});
    auto inbound = std::find_if(recs.begin(), recs.end(), [](const FlowRecord& r) { return r.direction == Direction::Inbound; });
    REQUIRE(inbound != recs.end());
    CHECK(inbound->device_id == hash_device_id(synth::mac(1), kSalt));
    CHECK(inbound->dst_ip.to_string() == "93.184.216.34");
    CHECK(inbound->dst_port == 443);
    CHECK(inbound->encryption == Encryption::Encrypted);
}

TEST_CASE("corrupt captures report a byte offset") {
    synth::TempDir dir;
    synth::write_pcap(dir.file("ok.pcap"), {outbound(1'000, 100), outbound(2'000, 100)});
    std::ifstream in(dir.file("ok.pcap"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    synth::write_text(dir.file("cut.pcap"), bytes.substr(0, bytes.size() - 10));
    DeviceRegistry reg(kSalt);
    try {
        ingest_pcap(dir.file("cut.pcap"), reg, {});
        FAIL("expected CaptureError");
    } catch (const CaptureError& e) {
        // Second record header starts after the 24-byte file header and the first record.
        const std::uint64_t second = 24 + 16 + synth::frame_bytes(outbound(1'000, 100)).size();
        CHECK(e.offset() == second);
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    synth::write_text(dir.file("junk.pcap"), "this is not a capture file");
    CHECK_THROWS_AS(ingest_pcap(dir.file("junk.pcap"), reg, {}), CaptureError);
    CHECK_THROWS_AS(ingest_pcap(dir.file("missing.pcap"), reg, {}), CaptureError);
}

TEST_CASE("pcapng in both byte orders decodes like pcap") {
    synth::TempDir dir;
    std::vector<synth::Packet> pkts = {outbound(1'000, 100), outbound(61'500, 250, "1.1.1.1", 80),
                                       outbound(61'700, 64, "1.1.1.1", 80)};
    synth::write_pcap(dir.file("a.pcap"), pkts);
    synth::write_pcapng(dir.file("b.pcapng"), pkts, false);
    synth::write_pcapng(dir.file("c.pcapng"), pkts, true);
    DeviceRegistry reg(kSalt);
    auto a = ingest_pcap(dir.file("a.pcap"), reg, {});
    auto b = ingest_pcap(dir.file("b.pcapng"), reg, {});
    auto c = ingest_pcap(dir.file("c.pcapng"), reg, {});
    REQUIRE(a.size() == 2);
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("IPv6 frames are decoded") {
    synth::Packet p = outbound(3'000, 200);
    p.src = IpAddress::from_string("fd00::5");
    p.dst = IpAddress::from_string("2a03:2880::1");
    p.proto = 17;
    p.dport = 53;
    auto h = decode_ethernet(synth::frame_bytes(p), 200, 3);
    REQUIRE(h);
    CHECK(h->dst_ip.to_string() == "2a03:2880::1");
    CHECK(h->transport == Transport::Udp);
    CHECK(h->dst_port == 53);
    CHECK(h->byte_len == 200);
}

TEST_CASE("property: conservation, partition and order over random captures") {
    std::mt19937 rng(1234);
    synth::TempDir dir;
    const char* dests[] = {"93.184.216.34", "157.240.1.35", "192.168.1.1", "8.8.8.8", "2a03:2880::1", "10.0.0.7"};
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 1000);
        std::vector<synth::Packet> pkts;
        std::int64_t t = 1'700'000'000'000;
        for (int i = 0; i < n; ++i) {
            t += rng() % 5000;
            // Jitter a few stamps backwards to exercise late-packet folding.
            std::int64_t ts = (rng() % 20 == 0) ? t - static_cast<std::int64_t>(rng() % 150'000) : t;
            auto p = outbound(ts, 60 + rng() % 1400, "93.184.216.34", rng() % 2 ? 443 : 80,
                              static_cast<std::uint8_t>(1 + rng() % 4));
            const char* d = dests[rng() % 6];
            p.dst = IpAddress::from_string(d);
            if (!p.dst.is_v4()) p.src = IpAddress::from_string("fd00::1");
            if (rng() % 3 == 0) p.proto = 17;
            pkts.push_back(p);
        }
        auto path = dir.file("rand" + std::to_string(trial) + ".pcap");
        synth::write_pcap(path, pkts);

        std::uint64_t oracle_bytes = 0;
        for (const auto& p : pkts)
            oracle_bytes += std::max<std::uint64_t>(p.wire_len, synth::frame_bytes(p).size());

        DeviceRegistry reg(kSalt);
        const std::int64_t window = 1000 * (1 + rng() % 120);
        IngestStats stats;
        auto recs = ingest_pcap(path, reg, {}, window, &stats);
        std::uint64_t bytes = 0, packets = 0;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            bytes += recs[i].byte_count;
            packets += recs[i].packet_count;
            REQUIRE(recs[i].packet_count >= 1);
            REQUIRE(recs[i].byte_count >= recs[i].packet_count);
            REQUIRE(recs[i].window_start_ms % window == 0);
            if (i) REQUIRE(recs[i - 1].window_start_ms <= recs[i].window_start_ms);
        }
        REQUIRE(bytes == oracle_bytes);
        REQUIRE(packets == static_cast<std::uint64_t>(n));
        REQUIRE(stats.ip_packets == static_cast<std::uint64_t>(n));
    }
}

TEST_CASE("aggregator folds late packets forward") {
    FlowAggregator agg(60'000);
    RawPacketHeader h;
    h.src_ip = IpAddress::from_string("192.168.1.2");
    h.dst_ip = IpAddress::from_string("1.2.3.4");
    h.transport = Transport::Tcp;
    h.dst_port = 443;
    h.byte_len = 10;
    h.timestamp_ms = 600'000;
    CHECK(agg.add(h, "d").empty());
    h.timestamp_ms = 780'000;  // two windows later: closes the 600 000 window
    auto closed = agg.add(h, "d");
    REQUIRE(closed.size() == 1);
    CHECK(closed[0].window_start_ms == 600'000);
    h.timestamp_ms = 610'000;  // late
    CHECK(agg.add(h, "d").empty());
    CHECK(agg.late_packets() == 1);
    auto rest = agg.flush();
    REQUIRE(rest.size() == 1);
    CHECK(rest[0].window_start_ms == 780'000);
    CHECK(rest[0].packet_count == 2);
    CHECK_THROWS_AS(FlowAggregator(0), std::invalid_argument);
}
