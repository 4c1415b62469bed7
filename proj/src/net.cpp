#include "hearth/net.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cstring>
#include <cstdio>

namespace hearth {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::optional<MacAddress> MacAddress::parse(std::string_view text) {
    // aa:bb:cc:dd:ee:ff or aa-bb-cc-dd-ee-ff
    if (text.size() != 17) return std::nullopt;
    MacAddress mac;
    for (std::size_t i = 0; i < 6; ++i) {
        int hi = hex_value(text[i * 3]);
        int lo = hex_value(text[i * 3 + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        if (i < 5 && text[i * 3 + 2] != ':' && text[i * 3 + 2] != '-') return std::nullopt;
        mac.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return mac;
}

std::string MacAddress::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1], bytes[2],
                  bytes[3], bytes[4], bytes[5]);
    return buf;
}

IpAddress IpAddress::v4(std::uint32_t host_order) {
    IpAddress ip;
    ip.family_ = IpFamily::V4;
    ip.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
    ip.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
    ip.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
    ip.bytes_[3] = static_cast<std::uint8_t>(host_order);
    return ip;
}

IpAddress IpAddress::v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return v4(std::uint32_t{a} << 24 | std::uint32_t{b} << 16 | std::uint32_t{c} << 8 | d);
}

IpAddress IpAddress::v6(const std::array<std::uint8_t, 16>& bytes) {
    IpAddress ip;
    ip.family_ = IpFamily::V6;
    ip.bytes_ = bytes;
    return ip;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
    std::string s(text);
    IpAddress ip;
    if (s.find(':') == std::string::npos) {
        in_addr a{};
        if (inet_pton(AF_INET, s.c_str(), &a) != 1) return std::nullopt;
        ip.family_ = IpFamily::V4;
        std::memcpy(ip.bytes_.data(), &a, 4);
    } else {
        in6_addr a{};
        if (inet_pton(AF_INET6, s.c_str(), &a) != 1) return std::nullopt;
        ip.family_ = IpFamily::V6;
        std::memcpy(ip.bytes_.data(), &a, 16);
    }
    return ip;
}

IpAddress IpAddress::from_string(std::string_view text) {
    auto ip = parse(text);
    if (!ip) throw std::invalid_argument("invalid IP address: " + std::string(text));
    return *ip;
}

std::uint32_t IpAddress::v4_value() const noexcept {
    return std::uint32_t{bytes_[0]} << 24 | std::uint32_t{bytes_[1]} << 16 |
           std::uint32_t{bytes_[2]} << 8 | bytes_[3];
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    if (is_v4()) {
        inet_ntop(AF_INET, bytes_.data(), buf, sizeof buf);
    } else {
        inet_ntop(AF_INET6, bytes_.data(), buf, sizeof buf);
    }
    return buf;
}

Prefix::Prefix(IpAddress network, unsigned length) {
    if (length > network.bit_width()) throw std::invalid_argument("prefix length out of range");
    auto bytes = network.bytes();
    for (unsigned i = length; i < 128; ++i) bytes[i / 8] &= static_cast<std::uint8_t>(~(0x80u >> (i % 8)));
    network_ = network.is_v4() ? IpAddress::v4(bytes[0], bytes[1], bytes[2], bytes[3]) : IpAddress::v6(bytes);
    length_ = length;
}

std::optional<Prefix> Prefix::parse(std::string_view text) {
    auto slash = text.find('/');
    auto ip = IpAddress::parse(text.substr(0, slash));
    if (!ip) return std::nullopt;
    unsigned len = ip->bit_width();
    if (slash != std::string_view::npos) {
        auto digits = text.substr(slash + 1);
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
        if (ec != std::errc{} || p != digits.data() + digits.size() || digits.empty()) return std::nullopt;
        if (len > ip->bit_width()) return std::nullopt;
    }
    return Prefix(*ip, len);
}

Prefix Prefix::from_string(std::string_view text) {
    auto p = parse(text);
    if (!p) throw std::invalid_argument("invalid prefix: " + std::string(text));
    return *p;
}

bool Prefix::contains(const IpAddress& ip) const noexcept {
    if (ip.family() != network_.family()) return false;
    const auto& a = ip.bytes();
    const auto& n = network_.bytes();
    unsigned full = length_ / 8;
    for (unsigned i = 0; i < full; ++i)
        if (a[i] != n[i]) return false;
    unsigned rem = length_ % 8;
    if (rem == 0) return true;
    auto mask = static_cast<std::uint8_t>(0xffu << (8 - rem));
    return (a[full] & mask) == n[full];
}

bool Prefix::covers(const Prefix& other) const noexcept {
    return other.network_.family() == network_.family() && other.length_ >= length_ &&
           contains(other.network_);
}

std::string Prefix::to_string() const {
    return network_.to_string() + "/" + std::to_string(length_);
}

bool is_local_address(const IpAddress& ip) noexcept {
    if (ip.is_v4()) {
        const std::uint32_t v = ip.v4_value();
        return (v >> 24) == 10                 // 10.0.0.0/8
               || (v >> 20) == 0xAC1           // 172.16.0.0/12
               || (v >> 16) == 0xC0A8          // 192.168.0.0/16
               || (v >> 16) == 0xA9FE          // 169.254.0.0/16
               || (v >> 24) == 127;            // 127.0.0.0/8
    }
    const auto& b = ip.bytes();
    static constexpr std::array<std::uint8_t, 16> loopback{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
    if (b == loopback) return true;
    if (b[0] == 0xfe && (b[1] & 0xc0) == 0x80) return true;  // fe80::/10
    if ((b[0] & 0xfe) == 0xfc) return true;                  // fc00::/7
    return false;
}

}  // namespace hearth
