#include "hearth/pcap.hpp"

#include <cstring>

namespace hearth {

namespace {

constexpr std::uint16_t bswap(std::uint16_t v) { return __builtin_bswap16(v); }
constexpr std::uint32_t bswap(std::uint32_t v) { return __builtin_bswap32(v); }

constexpr std::uint32_t kPcapMagicUsec = 0xa1b2c3d4;
constexpr std::uint32_t kPcapMagicNsec = 0xa1b23c4d;
constexpr std::uint32_t kNgSectionHeader = 0x0a0d0d0a;
constexpr std::uint32_t kNgByteOrderMagic = 0x1a2b3c4d;
constexpr std::uint32_t kNgInterfaceDescription = 0x00000001;
constexpr std::uint32_t kNgObsoletePacket = 0x00000002;
constexpr std::uint32_t kNgSimplePacket = 0x00000003;
constexpr std::uint32_t kNgEnhancedPacket = 0x00000006;
constexpr std::size_t kMaxBlock = 64u << 20;

std::uint64_t pow10(unsigned e) {
    std::uint64_t v = 1;
    while (e--) v *= 10;
    return v;
}

std::int64_t ticks_to_us(std::uint64_t ticks, std::uint64_t per_second) {
    if (per_second == 1'000'000) return static_cast<std::int64_t>(ticks);
    auto whole = ticks / per_second;
    auto frac = ticks % per_second;
    return static_cast<std::int64_t>(whole * 1'000'000 +
                                     static_cast<std::uint64_t>(static_cast<unsigned __int128>(frac) * 1'000'000 / per_second));
}

}  // namespace

CaptureReader::CaptureReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw CaptureError("cannot open capture file '" + path + "'", 0);
    std::uint32_t magic = 0;
    in_.read(reinterpret_cast<char*>(&magic), 4);
    auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) {
        format_ = Format::Empty;
        return;
    }
    if (got < 4) throw CaptureError("truncated capture header", 0);
    offset_ = 4;

    if (magic == kNgSectionHeader) {
        format_ = Format::PcapNg;
        in_.seekg(0);
        offset_ = 0;
        return;
    }
    if (magic == kPcapMagicUsec || magic == kPcapMagicNsec) {
        swapped_ = false;
    } else if (magic == bswap(kPcapMagicUsec) || magic == bswap(kPcapMagicNsec)) {
        swapped_ = true;
    } else {
        throw CaptureError("not a pcap or pcapng file (bad magic)", 0);
    }
    nanosecond_ = to32(magic) == kPcapMagicNsec;
    format_ = Format::Pcap;

    unsigned char rest[20];
    if (!read_exact(rest, sizeof rest)) throw CaptureError("truncated pcap global header", offset_);
    std::uint32_t network = 0;
    std::memcpy(&network, rest + 16, 4);
    link_type_ = to32(network) & 0x0fffffff;
}

bool CaptureReader::read_exact(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    return got == n;
}

std::uint16_t CaptureReader::to16(std::uint16_t v) const noexcept {
    return swapped_ ? bswap(v) : v;
}

std::uint32_t CaptureReader::to32(std::uint32_t v) const noexcept {
    return swapped_ ? bswap(v) : v;
}

std::optional<CapturedFrame> CaptureReader::next() {
    switch (format_) {
        case Format::Empty: return std::nullopt;
        case Format::Pcap: return next_pcap();
        case Format::PcapNg: return next_pcapng();
    }
    return std::nullopt;
}

std::optional<CapturedFrame> CaptureReader::next_pcap() {
    const std::uint64_t at = offset_;
    std::uint32_t hdr[4];
    in_.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    if (got == 0) return std::nullopt;
    if (got < sizeof hdr) throw CaptureError("truncated pcap record header", at);

    const std::uint32_t sec = to32(hdr[0]);
    const std::uint32_t frac = to32(hdr[1]);
    const std::uint32_t caplen = to32(hdr[2]);
    const std::uint32_t len = to32(hdr[3]);
    if (caplen > kMaxBlock) throw CaptureError("implausible captured length " + std::to_string(caplen), at);

    CapturedFrame frame;
    frame.file_offset = at;
    frame.link_type = link_type_;
    frame.original_length = len;
    frame.timestamp_us = static_cast<std::int64_t>(sec) * 1'000'000 + (nanosecond_ ? frac / 1000 : frac);
    frame.data.resize(caplen);
    if (!read_exact(frame.data.data(), caplen)) throw CaptureError("truncated pcap record body", at);
    return frame;
}

void CaptureReader::parse_section_header(std::span<const std::uint8_t> body, std::uint64_t at) {
    if (body.size() < 16) throw CaptureError("short pcapng section header", at);
    std::uint32_t bom = 0;
    std::memcpy(&bom, body.data(), 4);
    if (bom == kNgByteOrderMagic) {
        swapped_ = false;
    } else if (bom == bswap(kNgByteOrderMagic)) {
        swapped_ = true;
    } else {
        throw CaptureError("bad pcapng byte-order magic", at);
    }
    interfaces_.clear();
}

void CaptureReader::parse_interface(std::span<const std::uint8_t> body, std::uint64_t at) {
    if (body.size() < 8) throw CaptureError("short pcapng interface block", at);
    Interface iface;
    std::uint16_t lt = 0;
    std::uint32_t snap = 0;
    std::memcpy(&lt, body.data(), 2);
    std::memcpy(&snap, body.data() + 4, 4);
    iface.link_type = to16(lt);
    iface.snaplen = to32(snap);

    std::size_t pos = 8;
    while (pos + 4 <= body.size()) {
        std::uint16_t code = 0, olen = 0;
        std::memcpy(&code, body.data() + pos, 2);
        std::memcpy(&olen, body.data() + pos + 2, 2);
        code = to16(code);
        olen = to16(olen);
        pos += 4;
        if (code == 0) break;
        if (pos + olen > body.size()) throw CaptureError("pcapng option overruns block", at);
        if (code == 9 && olen >= 1) {  // if_tsresol
            const std::uint8_t r = body[pos];
            const unsigned e = r & 0x7f;
            if (r & 0x80) {
                if (e > 63) throw CaptureError("unsupported if_tsresol", at);
                iface.ticks_per_second = std::uint64_t{1} << e;
            } else {
                if (e > 19) throw CaptureError("unsupported if_tsresol", at);
                iface.ticks_per_second = pow10(e);
            }
        }
        pos += (olen + 3u) & ~3u;
    }
    interfaces_.push_back(iface);
}

std::optional<CapturedFrame> CaptureReader::next_pcapng() {
    for (;;) {
        const std::uint64_t at = offset_;
        std::uint32_t head[2];
        in_.read(reinterpret_cast<char*>(head), sizeof head);
        auto got = static_cast<std::size_t>(in_.gcount());
        offset_ += got;
        if (got == 0) return std::nullopt;
        if (got < sizeof head) throw CaptureError("truncated pcapng block header", at);

        const std::uint32_t type = head[0];
        std::uint32_t total = head[1];
        if (type == kNgSectionHeader) {
            // Byte order is only known after reading the byte-order magic.
            std::uint32_t bom = 0;
            if (!read_exact(&bom, 4)) throw CaptureError("truncated pcapng section header", at);
            swapped_ = bom == bswap(kNgByteOrderMagic);
            in_.seekg(-4, std::ios::cur);
            offset_ -= 4;
        }
        total = to32(total);
        if (total < 12 || total % 4 != 0 || total > kMaxBlock)
            throw CaptureError("invalid pcapng block length " + std::to_string(total), at);

        std::vector<std::uint8_t> body(total - 12);
        if (!read_exact(body.data(), body.size())) throw CaptureError("truncated pcapng block body", at);
        std::uint32_t trailer = 0;
        if (!read_exact(&trailer, 4)) throw CaptureError("truncated pcapng block trailer", at);
        if (to32(trailer) != total) throw CaptureError("pcapng block length mismatch", at);

        const std::uint32_t btype = to32(type);
        std::span<const std::uint8_t> b(body);
        auto u32 = [&](std::size_t pos) {
            std::uint32_t v = 0;
            std::memcpy(&v, b.data() + pos, 4);
            return to32(v);
        };
        auto iface_at = [&](std::uint32_t id) -> const Interface& {
            if (id >= interfaces_.size()) throw CaptureError("packet references unknown interface", at);
            return interfaces_[id];
        };

        switch (btype) {
            case kNgSectionHeader: parse_section_header(b, at); break;
            case kNgInterfaceDescription: parse_interface(b, at); break;
            case kNgEnhancedPacket: {
                if (b.size() < 20) throw CaptureError("short enhanced packet block", at);
                const auto& iface = iface_at(u32(0));
                const std::uint64_t ticks = std::uint64_t{u32(4)} << 32 | u32(8);
                const std::uint32_t caplen = u32(12);
                if (20 + std::size_t{caplen} > b.size()) throw CaptureError("enhanced packet overruns block", at);
                CapturedFrame f;
                f.file_offset = at;
                f.link_type = iface.link_type;
                f.timestamp_us = ticks_to_us(ticks, iface.ticks_per_second);
                f.original_length = u32(16);
                f.data.assign(b.begin() + 20, b.begin() + 20 + caplen);
                return f;
            }
            case kNgObsoletePacket: {
                if (b.size() < 20) throw CaptureError("short packet block", at);
                std::uint16_t id = 0;
                std::memcpy(&id, b.data(), 2);
                const auto& iface = iface_at(to16(id));
                const std::uint64_t ticks = std::uint64_t{u32(4)} << 32 | u32(8);
                const std::uint32_t caplen = u32(12);
                if (20 + std::size_t{caplen} > b.size()) throw CaptureError("packet overruns block", at);
                CapturedFrame f;
                f.file_offset = at;
                f.link_type = iface.link_type;
                f.timestamp_us = ticks_to_us(ticks, iface.ticks_per_second);
                f.original_length = u32(16);
                f.data.assign(b.begin() + 20, b.begin() + 20 + caplen);
                return f;
            }
            case kNgSimplePacket: {
                if (b.size() < 4) throw CaptureError("short simple packet block", at);
                const auto& iface = iface_at(0);
                const std::uint32_t len = u32(0);
                std::size_t caplen = std::min<std::size_t>(len, b.size() - 4);
                if (iface.snaplen != 0) caplen = std::min<std::size_t>(caplen, iface.snaplen);
                CapturedFrame f;
                f.file_offset = at;
                f.link_type = iface.link_type;
                f.timestamp_us = 0;  // simple packet blocks carry no timestamp
                f.original_length = len;
                f.data.assign(b.begin() + 4, b.begin() + 4 + static_cast<std::ptrdiff_t>(caplen));
                return f;
            }
            default: break;
        }
    }
}

PcapWriter::PcapWriter(const std::string& path, std::uint32_t link_type, std::uint32_t snaplen)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot create capture file '" + path + "'");
    const std::uint32_t magic = kPcapMagicUsec;
    const std::uint16_t major = 2, minor = 4;
    const std::int32_t zone = 0;
    const std::uint32_t sigfigs = 0;
    out_.write(reinterpret_cast<const char*>(&magic), 4);
    out_.write(reinterpret_cast<const char*>(&major), 2);
    out_.write(reinterpret_cast<const char*>(&minor), 2);
    out_.write(reinterpret_cast<const char*>(&zone), 4);
    out_.write(reinterpret_cast<const char*>(&sigfigs), 4);
    out_.write(reinterpret_cast<const char*>(&snaplen), 4);
    out_.write(reinterpret_cast<const char*>(&link_type), 4);
}

void PcapWriter::write(std::int64_t timestamp_us, std::span<const std::uint8_t> frame,
                       std::uint32_t original_length) {
    const std::uint32_t rec[4] = {
        static_cast<std::uint32_t>(timestamp_us / 1'000'000),
        static_cast<std::uint32_t>(timestamp_us % 1'000'000),
        static_cast<std::uint32_t>(frame.size()),
        original_length ? original_length : static_cast<std::uint32_t>(frame.size()),
    };
    out_.write(reinterpret_cast<const char*>(rec), sizeof rec);
    out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
}

void PcapWriter::close() { out_.close(); }

}  // namespace hearth
