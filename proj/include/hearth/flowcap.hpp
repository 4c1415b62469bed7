#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "hearth/net.hpp"
#include "hearth/pcap.hpp"

namespace hearth {

enum class Transport : std::uint8_t { Tcp, Udp, Other };
enum class Direction : std::uint8_t { Outbound, Inbound };
enum class Locality : std::uint8_t { External, Local };
enum class Encryption : std::uint8_t { Encrypted, Plaintext, Unknown };

std::string_view to_string(Transport t) noexcept;
std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Locality l) noexcept;
std::string_view to_string(Encryption e) noexcept;
std::optional<Transport> parse_transport(std::string_view s) noexcept;
std::optional<Direction> parse_direction(std::string_view s) noexcept;
std::optional<Locality> parse_locality(std::string_view s) noexcept;
std::optional<Encryption> parse_encryption(std::string_view s) noexcept;

inline constexpr std::int64_t kDefaultCoalesceWindowMs = 60'000;

/// Header fields of one captured frame. `byte_len` is the on-wire frame length.
struct RawPacketHeader {
    std::int64_t timestamp_ms = 0;
    MacAddress src_mac;
    MacAddress dst_mac;
    IpAddress src_ip;
    IpAddress dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Transport transport = Transport::Other;
    std::uint32_t byte_len = 0;
};

/// Decodes an Ethernet frame (optionally VLAN tagged) carrying IPv4 or IPv6.
/// Returns nullopt when no IP header can be parsed.
std::optional<RawPacketHeader> decode_ethernet(std::span<const std::uint8_t> frame,
                                               std::uint32_t original_length, std::int64_t timestamp_ms);

/// One aggregated unidirectional flow. `dst_ip`/`dst_port` always name the
/// remote endpoint as seen from the household device, whatever the direction.
struct FlowRecord {
    std::uint64_t id = 0;  // 0 until assigned by the store
    std::string device_id;
    IpAddress dst_ip;
    std::uint16_t dst_port = 0;
    Transport transport = Transport::Other;
    std::int64_t window_start_ms = 0;
    std::uint64_t byte_count = 0;
    std::uint64_t packet_count = 0;
    Direction direction = Direction::Outbound;
    Locality locality = Locality::External;
    Encryption encryption = Encryption::Unknown;

    bool operator==(const FlowRecord&) const = default;
};

Encryption classify_encryption(std::uint16_t dst_port, Transport transport) noexcept;

struct Device {
    std::string device_id;
    std::string friendly_name;
    std::int64_t first_seen_ms = 0;
    std::int64_t last_seen_ms = 0;

    bool operator==(const Device&) const = default;
};

/// hex(SHA-256(salt || mac)) truncated to 32 hex digits. Throws on empty salt.
std::string hash_device_id(const MacAddress& mac, std::string_view salt);

class DeviceError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stateless registration: builds the Device for (mac, name, salt).
Device register_device(const MacAddress& mac, std::string_view name, std::string_view salt);

/// MAC-to-device attribution for one ingest session. MACs live only in the
/// in-memory lookup; `devices()` exposes nothing but salted ids.
class DeviceRegistry {
public:
    explicit DeviceRegistry(std::string salt);

    /// Throws DeviceError naming the existing name if the MAC is already
    /// registered under a different one. Re-registering the same name is a no-op.
    Device register_device(const MacAddress& mac, std::string_view name);

    /// Returns the device id for `mac`, auto-registering unknown MACs as
    /// "unrecognised-<first 8 hex of id>". `is_new` reports auto-registration.
    Device attribute(const MacAddress& mac, std::int64_t seen_ms, bool* is_new = nullptr);

    std::optional<Device> find(std::string_view device_id) const;
    /// Hardware address, known only for devices seen since start-up.
    std::optional<MacAddress> mac_of(std::string_view device_id) const;
    std::vector<Device> devices() const;
    void restore(const Device& d);
    /// Throws NotFoundError for unknown ids and DeviceError for an empty name.
    Device rename(std::string_view device_id, std::string_view name);
    /// Drops the device and its hardware address; false if unknown.
    bool forget(std::string_view device_id);

private:
    std::string salt_;
    mutable std::mutex mu_;
    std::map<MacAddress, std::string> by_mac_;
    std::map<std::string, Device, std::less<>> by_id_;
};

struct DeviceMapEntry {
    MacAddress mac;
    std::string name;
};

/// Parses `MAC<TAB>name` lines; `#` starts a comment, blank lines ignored.
/// Throws std::invalid_argument naming the line number on malformed input.
std::vector<DeviceMapEntry> parse_device_map(std::string_view text);
std::vector<DeviceMapEntry> load_device_map(const std::string& path);

/// Merges packets sharing (device, remote ip, remote port, transport,
/// direction) within one coalesce window. Windows are closed once a packet
/// two or more windows newer arrives; a packet older than every open window
/// is folded into the oldest open window and counted in `late_packets()`.
class FlowAggregator {
public:
    explicit FlowAggregator(std::int64_t coalesce_window_ms = kDefaultCoalesceWindowMs);

    /// Adds one packet; returns records whose windows closed as a result,
    /// in nondecreasing window order.
    std::vector<FlowRecord> add(const RawPacketHeader& packet, const std::string& device_id);
    std::vector<FlowRecord> flush();

    std::int64_t window_ms() const noexcept { return window_ms_; }
    std::uint64_t late_packets() const noexcept { return late_packets_; }

private:
    using Key = std::tuple<std::string, IpAddress, std::uint16_t, Transport, Direction>;
    std::vector<FlowRecord> close_before(std::int64_t window_start);

    std::int64_t window_ms_;
    std::map<std::int64_t, std::map<Key, FlowRecord>> open_;
    std::uint64_t late_packets_ = 0;
    std::optional<std::int64_t> last_closed_;
};

struct IngestStats {
    std::uint64_t frames = 0;
    std::uint64_t ip_packets = 0;
    std::uint64_t ip_bytes = 0;
    std::uint64_t skipped_frames = 0;
    std::uint64_t late_packets = 0;
    std::uint64_t records = 0;
    std::vector<std::string> auto_registered;
};

struct IngestOptions {
    std::int64_t coalesce_window_ms = kDefaultCoalesceWindowMs;
    /// Called per frame before decoding; used for paced replay.
    std::function<void(std::int64_t timestamp_us)> pacer;
};

/// Streams flow records from a capture file into `sink`. Device-map entries
/// are registered up front. Throws CaptureError (with byte offset) for
/// corrupt input.
IngestStats ingest_pcap(const std::string& path, DeviceRegistry& registry,
                        std::span<const DeviceMapEntry> device_map, const IngestOptions& options,
                        const std::function<void(FlowRecord&&)>& sink);

/// Convenience overload collecting all records.
std::vector<FlowRecord> ingest_pcap(const std::string& path, DeviceRegistry& registry,
                                    std::span<const DeviceMapEntry> device_map,
                                    std::int64_t coalesce_window_ms = kDefaultCoalesceWindowMs,
                                    IngestStats* stats = nullptr);

}  // namespace hearth
