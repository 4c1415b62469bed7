#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hearth {

inline constexpr std::uint32_t kLinkTypeEthernet = 1;

/// Raised for unreadable or corrupt capture files. `offset` is the byte
/// position in the file where decoding failed.
class CaptureError : public std::runtime_error {
public:
    CaptureError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

struct CapturedFrame {
    std::int64_t timestamp_us = 0;
    std::uint32_t original_length = 0;
    std::uint32_t link_type = kLinkTypeEthernet;
    std::uint64_t file_offset = 0;
    std::vector<std::uint8_t> data;
};

/// Sequential reader for classic pcap (either byte order, micro- or
/// nanosecond stamps) and pcapng (SHB/IDB/EPB/SPB/OPB; other blocks skipped).
/// A zero-length file reads as an empty capture.
class CaptureReader {
public:
    explicit CaptureReader(const std::string& path);

    std::optional<CapturedFrame> next();

    bool is_pcapng() const noexcept { return format_ == Format::PcapNg; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    enum class Format { Empty, Pcap, PcapNg };

    struct Interface {
        std::uint32_t link_type = kLinkTypeEthernet;
        std::uint32_t snaplen = 0;
        // Ticks per second of the timestamp unit.
        std::uint64_t ticks_per_second = 1'000'000;
    };

    bool read_exact(void* dst, std::size_t n);
    std::uint16_t to16(std::uint16_t v) const noexcept;
    std::uint32_t to32(std::uint32_t v) const noexcept;
    std::optional<CapturedFrame> next_pcap();
    std::optional<CapturedFrame> next_pcapng();
    void parse_section_header(std::span<const std::uint8_t> body, std::uint64_t at);
    void parse_interface(std::span<const std::uint8_t> body, std::uint64_t at);

    std::ifstream in_;
    Format format_ = Format::Empty;
    bool swapped_ = false;
    bool nanosecond_ = false;
    std::uint32_t link_type_ = kLinkTypeEthernet;
    std::uint64_t offset_ = 0;
    std::vector<Interface> interfaces_;
};

/// Classic pcap writer (microsecond stamps, host byte order).
class PcapWriter {
public:
    explicit PcapWriter(const std::string& path, std::uint32_t link_type = kLinkTypeEthernet,
                        std::uint32_t snaplen = 65535);

    void write(std::int64_t timestamp_us, std::span<const std::uint8_t> frame,
               std::uint32_t original_length = 0);
    void close();

private:
    std::ofstream out_;
};

}  // namespace hearth
