#include "vrfaudit/zip.hpp"

#include <zlib.h>

#include <cstring>

#include "vrfaudit/compress.hpp"
#include "vrfaudit/error.hpp"

namespace vrfaudit {

namespace {

constexpr std::uint32_t kEocdSig = 0x06054b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::size_t kEocdSize = 22;

void put16(Bytes& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(Bytes& b, std::uint32_t v) {
    put16(b, static_cast<std::uint16_t>(v));
    put16(b, static_cast<std::uint16_t>(v >> 16));
}

Bytes deflate_raw(ByteView src) {
    z_stream zs;
    std::memset(&zs, 0, sizeof zs);
    if (deflateInit2(&zs, 9, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorCode::IoError, "deflateInit failed");
    }
    Bytes out(deflateBound(&zs, static_cast<uLong>(src.size())) + 16);
    zs.next_in = const_cast<Bytef*>(src.data());
    zs.avail_in = static_cast<uInt>(src.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error(ErrorCode::IoError, "deflate failed");
    return out;
}

}  // namespace

ZipArchive::ZipArchive(Bytes data) : data_(std::move(data)) {
    if (data_.size() < kEocdSize) throw Error(ErrorCode::NotAZip, "file too small");
    // The EOCD record sits within the last 64 KiB + 22 bytes (comment field).
    const std::size_t lowest = data_.size() > 0xFFFF + kEocdSize ? data_.size() - 0xFFFF - kEocdSize : 0;
    std::optional<std::size_t> eocd;
    for (std::size_t p = data_.size() - kEocdSize + 1; p-- > lowest;) {
        if (load_le32(&data_[p]) == kEocdSig) {
            eocd = p;
            break;
        }
    }
    if (!eocd) throw Error(ErrorCode::NotAZip, "no end of central directory record");
    const auto* e = &data_[*eocd];
    const std::size_t count = load_le16(e + 10);
    const std::size_t dir_size = load_le32(e + 12);
    const std::size_t dir_offset = load_le32(e + 16);
    if (dir_offset > data_.size() || dir_size > data_.size() - dir_offset) {
        throw Error(ErrorCode::NotAZip, "central directory out of bounds");
    }
    std::size_t p = dir_offset;
    entries_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (data_.size() - p < 46 || load_le32(&data_[p]) != kCentralSig) {
            throw Error(ErrorCode::NotAZip, "bad central directory entry");
        }
        const auto* c = &data_[p];
        ZipEntry entry;
        entry.method = load_le16(c + 10);
        entry.compressed_size = load_le32(c + 20);
        entry.uncompressed_size = load_le32(c + 24);
        const std::size_t name_len = load_le16(c + 28);
        const std::size_t extra_len = load_le16(c + 30);
        const std::size_t comment_len = load_le16(c + 32);
        entry.local_header_offset = load_le32(c + 42);
        if (data_.size() - p - 46 < name_len + extra_len + comment_len) {
            throw Error(ErrorCode::NotAZip, "central directory entry truncated");
        }
        entry.name.assign(reinterpret_cast<const char*>(c + 46), name_len);
        entries_.push_back(std::move(entry));
        p += 46 + name_len + extra_len + comment_len;
    }
}

ZipArchive ZipArchive::open(const std::filesystem::path& path) { return ZipArchive(read_file(path)); }

const ZipEntry* ZipArchive::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

Bytes ZipArchive::read(const ZipEntry& entry) const {
    const std::size_t p = entry.local_header_offset;
    if (p > data_.size() || data_.size() - p < 30 || load_le32(&data_[p]) != kLocalSig) {
        throw Error(ErrorCode::IoError, "bad local header for " + entry.name);
    }
    const std::size_t start = p + 30 + load_le16(&data_[p + 26]) + load_le16(&data_[p + 28]);
    if (start > data_.size() || entry.compressed_size > data_.size() - start) {
        throw Error(ErrorCode::IoError, "entry data out of bounds: " + entry.name);
    }
    const ByteView raw(data_.data() + start, entry.compressed_size);
    Bytes out;
    if (entry.method == 0) {
        out.assign(raw.begin(), raw.end());
    } else if (entry.method == 8) {
        out = compress::inflate_raw(raw, entry.uncompressed_size);
    } else {
        throw Error(ErrorCode::IoError, "unsupported compression method " + std::to_string(entry.method));
    }
    const auto crc = static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    const auto expected = load_le32(&data_[p + 14]);
    // Entries written with a data descriptor (bit 3) carry zero in the local header.
    const bool descriptor = load_le16(&data_[p + 6]) & 0x8;
    if (!descriptor && crc != expected) throw Error(ErrorCode::IoError, "crc mismatch: " + entry.name);
    return out;
}

void ZipWriter::add(std::string name, ByteView contents, bool deflate) {
    Pending p;
    p.name = std::move(name);
    p.size = static_cast<std::uint32_t>(contents.size());
    p.crc = static_cast<std::uint32_t>(crc32(0L, contents.data(), static_cast<uInt>(contents.size())));
    p.method = deflate ? 8 : 0;
    p.stored = deflate ? deflate_raw(contents) : Bytes(contents.begin(), contents.end());
    pending_.push_back(std::move(p));
}

Bytes ZipWriter::finish() const {
    Bytes out;
    std::vector<std::uint32_t> offsets;
    for (const auto& p : pending_) {
        offsets.push_back(static_cast<std::uint32_t>(out.size()));
        put32(out, kLocalSig);
        put16(out, 20);
        put16(out, 0);
        put16(out, p.method);
        put16(out, 0);
        put16(out, 0x21);  // 1980-01-01, fixed for reproducible output
        put32(out, p.crc);
        put32(out, static_cast<std::uint32_t>(p.stored.size()));
        put32(out, p.size);
        put16(out, static_cast<std::uint16_t>(p.name.size()));
        put16(out, 0);
        out.insert(out.end(), p.name.begin(), p.name.end());
        out.insert(out.end(), p.stored.begin(), p.stored.end());
    }
    const auto dir_offset = static_cast<std::uint32_t>(out.size());
    for (std::size_t i = 0; i < pending_.size(); ++i) {
        const auto& p = pending_[i];
        put32(out, kCentralSig);
        put16(out, 20);
        put16(out, 20);
        put16(out, 0);
        put16(out, p.method);
        put16(out, 0);
        put16(out, 0x21);
        put32(out, p.crc);
        put32(out, static_cast<std::uint32_t>(p.stored.size()));
        put32(out, p.size);
        put16(out, static_cast<std::uint16_t>(p.name.size()));
        put16(out, 0);
        put16(out, 0);
        put16(out, 0);
        put16(out, 0);
        put32(out, 0);
        put32(out, offsets[i]);
        out.insert(out.end(), p.name.begin(), p.name.end());
    }
    const auto dir_size = static_cast<std::uint32_t>(out.size() - dir_offset);
    put32(out, kEocdSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(pending_.size()));
    put16(out, static_cast<std::uint16_t>(pending_.size()));
    put32(out, dir_size);
    put32(out, dir_offset);
    put16(out, 0);
    return out;
}

}  // namespace vrfaudit
