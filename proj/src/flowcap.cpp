#include "hearth/flowcap.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hearth/errors.hpp"

namespace hearth {

std::string_view to_string(Transport t) noexcept {
    switch (t) {
        case Transport::Tcp: return "TCP";
        case Transport::Udp: return "UDP";
        case Transport::Other: return "OTHER";
    }
    return "OTHER";
}

std::string_view to_string(Direction d) noexcept {
    return d == Direction::Outbound ? "OUTBOUND" : "INBOUND";
}

std::string_view to_string(Locality l) noexcept {
    return l == Locality::External ? "EXTERNAL" : "LOCAL";
}

std::string_view to_string(Encryption e) noexcept {
    switch (e) {
        case Encryption::Encrypted: return "ENCRYPTED";
        case Encryption::Plaintext: return "PLAINTEXT";
        case Encryption::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

std::optional<Transport> parse_transport(std::string_view s) noexcept {
    if (s == "TCP") return Transport::Tcp;
    if (s == "UDP") return Transport::Udp;
    if (s == "OTHER") return Transport::Other;
    return std::nullopt;
}

std::optional<Direction> parse_direction(std::string_view s) noexcept {
    if (s == "OUTBOUND") return Direction::Outbound;
    if (s == "INBOUND") return Direction::Inbound;
    return std::nullopt;
}

std::optional<Locality> parse_locality(std::string_view s) noexcept {
    if (s == "EXTERNAL") return Locality::External;
    if (s == "LOCAL") return Locality::Local;
    return std::nullopt;
}

std::optional<Encryption> parse_encryption(std::string_view s) noexcept {
    if (s == "ENCRYPTED") return Encryption::Encrypted;
    if (s == "PLAINTEXT") return Encryption::Plaintext;
    if (s == "UNKNOWN") return Encryption::Unknown;
    return std::nullopt;
}

Encryption classify_encryption(std::uint16_t dst_port, Transport transport) noexcept {
    if (transport == Transport::Tcp && (dst_port == 443 || dst_port == 853 || dst_port == 8443))
        return Encryption::Encrypted;
    if (dst_port == 80 || dst_port == 53) return Encryption::Plaintext;
    return Encryption::Unknown;
}

// ---------------------------------------------------------------------------
// Frame decoding

namespace {

constexpr std::uint16_t kEtherIPv4 = 0x0800;
constexpr std::uint16_t kEtherIPv6 = 0x86dd;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88a8;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

void read_ports(std::span<const std::uint8_t> l4, std::uint8_t proto, RawPacketHeader& h) {
    if (proto == 6) {
        h.transport = Transport::Tcp;
    } else if (proto == 17) {
        h.transport = Transport::Udp;
    } else {
        h.transport = Transport::Other;
        return;
    }
    if (l4.size() >= 4) {
        h.src_port = be16(l4.data());
        h.dst_port = be16(l4.data() + 2);
    }
}

}  // namespace

std::optional<RawPacketHeader> decode_ethernet(std::span<const std::uint8_t> frame,
                                               std::uint32_t original_length, std::int64_t timestamp_ms) {
    if (frame.size() < 14) return std::nullopt;
    RawPacketHeader h;
    h.timestamp_ms = timestamp_ms;
    std::memcpy(h.dst_mac.bytes.data(), frame.data(), 6);
    std::memcpy(h.src_mac.bytes.data(), frame.data() + 6, 6);
    std::size_t pos = 12;
    std::uint16_t ethertype = be16(frame.data() + pos);
    pos += 2;
    while ((ethertype == kEtherVlan || ethertype == kEtherQinQ) && frame.size() >= pos + 4) {
        ethertype = be16(frame.data() + pos + 2);
        pos += 4;
    }
    auto l3 = frame.subspan(pos);

    if (ethertype == kEtherIPv4) {
        if (l3.size() < 20 || (l3[0] >> 4) != 4) return std::nullopt;
        const std::size_t ihl = std::size_t{l3[0] & 0x0fu} * 4;
        if (ihl < 20 || l3.size() < ihl) return std::nullopt;
        h.src_ip = IpAddress::v4(l3[12], l3[13], l3[14], l3[15]);
        h.dst_ip = IpAddress::v4(l3[16], l3[17], l3[18], l3[19]);
        const std::uint16_t frag_offset = be16(l3.data() + 6) & 0x1fff;
        const std::uint8_t proto = l3[9];
        if (frag_offset == 0) {
            read_ports(l3.subspan(ihl), proto, h);
        } else {
            h.transport = proto == 6 ? Transport::Tcp : proto == 17 ? Transport::Udp : Transport::Other;
        }
    } else if (ethertype == kEtherIPv6) {
        if (l3.size() < 40 || (l3[0] >> 4) != 6) return std::nullopt;
        std::array<std::uint8_t, 16> a{}, b{};
        std::memcpy(a.data(), l3.data() + 8, 16);
        std::memcpy(b.data(), l3.data() + 24, 16);
        h.src_ip = IpAddress::v6(a);
        h.dst_ip = IpAddress::v6(b);
        std::uint8_t next = l3[6];
        std::size_t off = 40;
        bool fragmented_tail = false;
        // Hop-by-hop, routing, destination options, fragment.
        while ((next == 0 || next == 43 || next == 60 || next == 44) && l3.size() >= off + 8) {
            const std::uint8_t following = l3[off];
            if (next == 44) {
                fragmented_tail = (be16(l3.data() + off + 2) & 0xfff8) != 0;
                off += 8;
            } else {
                off += (std::size_t{l3[off + 1]} + 1) * 8;
            }
            next = following;
        }
        if (!fragmented_tail && off <= l3.size()) {
            read_ports(l3.subspan(off), next, h);
        } else {
            h.transport = next == 6 ? Transport::Tcp : next == 17 ? Transport::Udp : Transport::Other;
        }
    } else {
        return std::nullopt;
    }
    h.byte_len = std::max<std::uint32_t>(original_length, static_cast<std::uint32_t>(frame.size()));
    return h;
}

// ---------------------------------------------------------------------------
// Devices

std::string hash_device_id(const MacAddress& mac, std::string_view salt) {
    if (salt.empty()) throw DeviceError("device salt must be nonempty");
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, salt.data(), salt.size()) == 1 &&
                    EVP_DigestUpdate(ctx, mac.bytes.data(), mac.bytes.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (unsigned i = 0; i < 16; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

Device register_device(const MacAddress& mac, std::string_view name, std::string_view salt) {
    Device d;
    d.device_id = hash_device_id(mac, salt);
    d.friendly_name = std::string(name);
    return d;
}

DeviceRegistry::DeviceRegistry(std::string salt) : salt_(std::move(salt)) {
    if (salt_.empty()) throw DeviceError("device salt must be nonempty");
}

Device DeviceRegistry::register_device(const MacAddress& mac, std::string_view name) {
    std::lock_guard lock(mu_);
    auto d = hearth::register_device(mac, name, salt_);
    if (auto it = by_id_.find(d.device_id); it != by_id_.end()) {
        auto& existing = it->second;
        bool auto_named = existing.friendly_name.rfind("unrecognised-", 0) == 0;
        if (existing.friendly_name != name && !auto_named)
            throw DeviceError("device already registered as '" + existing.friendly_name + "'");
        existing.friendly_name = std::string(name);
        by_mac_[mac] = d.device_id;
        return existing;
    }
    by_mac_[mac] = d.device_id;
    by_id_.emplace(d.device_id, d);
    return d;
}

Device DeviceRegistry::attribute(const MacAddress& mac, std::int64_t seen_ms, bool* is_new) {
    std::lock_guard lock(mu_);
    if (is_new) *is_new = false;
    auto it = by_mac_.find(mac);
    std::string id;
    if (it == by_mac_.end()) {
        id = hash_device_id(mac, salt_);
        by_mac_.emplace(mac, id);
    } else {
        id = it->second;
    }
    auto dit = by_id_.find(id);
    if (dit == by_id_.end()) {
        Device d;
        d.device_id = id;
        d.friendly_name = "unrecognised-" + id.substr(0, 8);
        d.first_seen_ms = d.last_seen_ms = seen_ms;
        dit = by_id_.emplace(id, std::move(d)).first;
        if (is_new) *is_new = true;
    }
    auto& d = dit->second;
    if (d.first_seen_ms == 0 || seen_ms < d.first_seen_ms) d.first_seen_ms = seen_ms;
    d.last_seen_ms = std::max(d.last_seen_ms, seen_ms);
    return d;
}

std::optional<Device> DeviceRegistry::find(std::string_view device_id) const {
    std::lock_guard lock(mu_);
    auto it = by_id_.find(device_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::optional<MacAddress> DeviceRegistry::mac_of(std::string_view device_id) const {
    std::lock_guard lock(mu_);
    for (const auto& [mac, id] : by_mac_)
        if (id == device_id) return mac;
    return std::nullopt;
}

std::vector<Device> DeviceRegistry::devices() const {
    std::lock_guard lock(mu_);
    std::vector<Device> out;
    out.reserve(by_id_.size());
    for (const auto& [_, d] : by_id_) out.push_back(d);
    return out;
}

void DeviceRegistry::restore(const Device& d) {
    std::lock_guard lock(mu_);
    by_id_[d.device_id] = d;
}

Device DeviceRegistry::rename(std::string_view device_id, std::string_view name) {
    if (name.empty()) throw DeviceError("device name is empty");
    std::lock_guard lock(mu_);
    auto it = by_id_.find(device_id);
    if (it == by_id_.end()) throw NotFoundError("unknown device " + std::string(device_id));
    it->second.friendly_name = std::string(name);
    return it->second;
}

bool DeviceRegistry::forget(std::string_view device_id) {
    std::lock_guard lock(mu_);
    auto it = by_id_.find(device_id);
    if (it == by_id_.end()) return false;
    std::erase_if(by_mac_, [&](const auto& kv) { return kv.second == device_id; });
    by_id_.erase(it);
    return true;
}

std::vector<DeviceMapEntry> parse_device_map(std::string_view text) {
    std::vector<DeviceMapEntry> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto tab = line.find('\t', first);
        if (tab == std::string::npos)
            throw std::invalid_argument("device map line " + std::to_string(lineno) + ": expected MAC<TAB>name");
        auto mac = MacAddress::parse(std::string_view(line).substr(first, tab - first));
        std::string name = line.substr(tab + 1);
        while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
        if (!mac) throw std::invalid_argument("device map line " + std::to_string(lineno) + ": invalid MAC");
        if (name.empty()) throw std::invalid_argument("device map line " + std::to_string(lineno) + ": empty name");
        out.push_back({*mac, std::move(name)});
    }
    return out;
}

std::vector<DeviceMapEntry> load_device_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read device map '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_device_map(ss.str());
}

// ---------------------------------------------------------------------------
// Aggregation

FlowAggregator::FlowAggregator(std::int64_t coalesce_window_ms) : window_ms_(coalesce_window_ms) {
    if (coalesce_window_ms <= 0) throw std::invalid_argument("coalesce window must be positive");
}

std::vector<FlowRecord> FlowAggregator::close_before(std::int64_t window_start) {
    std::vector<FlowRecord> out;
    while (!open_.empty() && open_.begin()->first < window_start) {
        for (auto& [_, rec] : open_.begin()->second) out.push_back(std::move(rec));
        open_.erase(open_.begin());
    }
    return out;
}

namespace {

std::int64_t floor_to(std::int64_t t, std::int64_t w) {
    auto q = t / w;
    if (t % w != 0 && t < 0) --q;
    return q * w;
}

}  // namespace

std::vector<FlowRecord> FlowAggregator::add(const RawPacketHeader& p, const std::string& device_id) {
    const bool src_local = is_local_address(p.src_ip);
    const bool dst_local = is_local_address(p.dst_ip);
    const bool inbound = !src_local && dst_local;
    const IpAddress& remote = inbound ? p.src_ip : p.dst_ip;
    const std::uint16_t remote_port = inbound ? p.src_port : p.dst_port;
    const Direction dir = inbound ? Direction::Inbound : Direction::Outbound;

    std::int64_t window = floor_to(p.timestamp_ms, window_ms_);
    std::vector<FlowRecord> closed;
    if (!open_.empty()) {
        const std::int64_t newest = open_.rbegin()->first;
        if (window > newest) {
            closed = close_before(window - window_ms_);
        } else if (window < open_.begin()->first) {
            window = open_.begin()->first;
            ++late_packets_;
        }
    } else if (last_closed_ && window <= *last_closed_) {
        window = *last_closed_ + window_ms_;
        ++late_packets_;
    }
    if (!closed.empty()) last_closed_ = closed.back().window_start_ms;

    auto& bucket = open_[window];
    Key key{device_id, remote, remote_port, p.transport, dir};
    auto [it, inserted] = bucket.try_emplace(key);
    FlowRecord& rec = it->second;
    if (inserted) {
        rec.device_id = device_id;
        rec.dst_ip = remote;
        rec.dst_port = remote_port;
        rec.transport = p.transport;
        rec.window_start_ms = window;
        rec.direction = dir;
        rec.locality = is_local_address(remote) ? Locality::Local : Locality::External;
        rec.encryption = classify_encryption(remote_port, p.transport);
    }
    rec.byte_count += p.byte_len;
    rec.packet_count += 1;
    return closed;
}

std::vector<FlowRecord> FlowAggregator::flush() {
    auto out = close_before(std::numeric_limits<std::int64_t>::max());
    if (!out.empty()) last_closed_ = out.back().window_start_ms;
    return out;
}

// ---------------------------------------------------------------------------
// Capture ingest

IngestStats ingest_pcap(const std::string& path, DeviceRegistry& registry,
                        std::span<const DeviceMapEntry> device_map, const IngestOptions& options,
                        const std::function<void(FlowRecord&&)>& sink) {
    if (options.coalesce_window_ms <= 0) throw std::invalid_argument("coalesce window must be positive");
    for (const auto& e : device_map) registry.register_device(e.mac, e.name);

    CaptureReader reader(path);
    FlowAggregator agg(options.coalesce_window_ms);
    IngestStats stats;
    auto emit = [&](std::vector<FlowRecord>&& recs) {
        for (auto& r : recs) {
            ++stats.records;
            sink(std::move(r));
        }
    };

    while (auto frame = reader.next()) {
        ++stats.frames;
        if (options.pacer) options.pacer(frame->timestamp_us);
        const std::int64_t ts_ms = frame->timestamp_us / 1000;
        std::optional<RawPacketHeader> hdr;
        if (frame->link_type == kLinkTypeEthernet && ts_ms > 0)
            hdr = decode_ethernet(frame->data, frame->original_length, ts_ms);
        if (!hdr) {
            ++stats.skipped_frames;
            continue;
        }
        ++stats.ip_packets;
        stats.ip_bytes += hdr->byte_len;

        const bool inbound = !is_local_address(hdr->src_ip) && is_local_address(hdr->dst_ip);
        bool is_new = false;
        const Device dev = registry.attribute(inbound ? hdr->dst_mac : hdr->src_mac, ts_ms, &is_new);
        if (is_new) stats.auto_registered.push_back(dev.device_id);
        emit(agg.add(*hdr, dev.device_id));
    }
    emit(agg.flush());
    stats.late_packets = agg.late_packets();
    return stats;
}

std::vector<FlowRecord> ingest_pcap(const std::string& path, DeviceRegistry& registry,
                                    std::span<const DeviceMapEntry> device_map,
                                    std::int64_t coalesce_window_ms, IngestStats* stats) {
    std::vector<FlowRecord> out;
    IngestOptions opts;
    opts.coalesce_window_ms = coalesce_window_ms;
    auto s = ingest_pcap(path, registry, device_map, opts, [&](FlowRecord&& r) { out.push_back(std::move(r)); });
    if (stats) *stats = std::move(s);
    return out;
}

}  // namespace hearth
