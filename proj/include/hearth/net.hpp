#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hearth {

/// Hardware address. Only ever held in memory; never persisted.
struct MacAddress {
    std::array<std::uint8_t, 6> bytes{};

    static std::optional<MacAddress> parse(std::string_view text);
    std::string to_string() const;

    auto operator<=>(const MacAddress&) const = default;
};

enum class IpFamily : std::uint8_t { V4, V6 };

/// IPv4 or IPv6 address. IPv4 occupies the first four bytes.
class IpAddress {
public:
    IpAddress() = default;

    static IpAddress v4(std::uint32_t host_order);
    static IpAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d);
    static IpAddress v6(const std::array<std::uint8_t, 16>& bytes);
    static std::optional<IpAddress> parse(std::string_view text);
    /// Throws std::invalid_argument on malformed input.
    static IpAddress from_string(std::string_view text);

    IpFamily family() const noexcept { return family_; }
    bool is_v4() const noexcept { return family_ == IpFamily::V4; }
    unsigned bit_width() const noexcept { return is_v4() ? 32u : 128u; }
    /// Bit `i` counted from the most significant bit.
    bool bit(unsigned i) const noexcept { return (bytes_[i / 8] >> (7 - i % 8)) & 1u; }
    std::uint32_t v4_value() const noexcept;
    const std::array<std::uint8_t, 16>& bytes() const noexcept { return bytes_; }

    std::string to_string() const;

    auto operator<=>(const IpAddress&) const = default;

private:
    IpFamily family_ = IpFamily::V4;
    std::array<std::uint8_t, 16> bytes_{};
};

class Prefix {
public:
    Prefix() = default;
    /// Host bits beyond `length` are cleared.
    Prefix(IpAddress network, unsigned length);

    static std::optional<Prefix> parse(std::string_view text);
    static Prefix from_string(std::string_view text);
    static Prefix host(const IpAddress& ip) { return Prefix(ip, ip.bit_width()); }

    const IpAddress& network() const noexcept { return network_; }
    unsigned length() const noexcept { return length_; }
    bool contains(const IpAddress& ip) const noexcept;
    /// True when `other` lies entirely inside this prefix.
    bool covers(const Prefix& other) const noexcept;

    std::string to_string() const;

    auto operator<=>(const Prefix&) const = default;

private:
    IpAddress network_;
    unsigned length_ = 0;
};

/// RFC1918, link-local, loopback (and their IPv6 counterparts: ULA, fe80::/10, ::1).
bool is_local_address(const IpAddress& ip) noexcept;

}  // namespace hearth
