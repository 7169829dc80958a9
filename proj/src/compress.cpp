#include "vrfaudit/compress.hpp"

#include <zlib.h>

#include <cstring>

#include "vrfaudit/error.hpp"

namespace vrfaudit::compress {

namespace {

constexpr std::size_t kChunk = 1 << 16;

class ZStream {
public:
    explicit ZStream(int window_bits) {
        std::memset(&zs_, 0, sizeof zs_);
        ok_ = inflateInit2(&zs_, window_bits) == Z_OK;
    }
    ~ZStream() {
        if (ok_) inflateEnd(&zs_);
    }
    ZStream(const ZStream&) = delete;
    ZStream& operator=(const ZStream&) = delete;

    bool ok() const { return ok_; }
    z_stream* get() { return &zs_; }

private:
    z_stream zs_;
    bool ok_ = false;
};

// Returns Z_STREAM_END on success; any other value is failure.
int run_inflate(ZStream& zs, ByteView src, Bytes& out, std::size_t max_output) {
    auto* s = zs.get();
    s->next_in = const_cast<Bytef*>(src.data());
    s->avail_in = static_cast<uInt>(std::min<std::size_t>(src.size(), UINT32_MAX));
    int rc = Z_OK;
    while (rc == Z_OK) {
        if (out.size() >= max_output) return Z_MEM_ERROR;
        const auto old = out.size();
        out.resize(old + kChunk);
        s->next_out = out.data() + old;
        s->avail_out = kChunk;
        rc = inflate(s, Z_NO_FLUSH);
        out.resize(old + (kChunk - s->avail_out));
        if (rc == Z_BUF_ERROR && s->avail_in == 0) return Z_DATA_ERROR;  // truncated
        if (rc == Z_BUF_ERROR) rc = Z_OK;
    }
    return rc;
}

}  // namespace

std::optional<GunzipResult> gunzip(ByteView src, std::size_t max_output) {
    if (src.size() < 18 || src[0] != 0x1F || src[1] != 0x8B || src[2] != 8) return std::nullopt;
    ZStream zs(16 + MAX_WBITS);
    if (!zs.ok()) return std::nullopt;
    GunzipResult result;
    if (run_inflate(zs, src, result.data, max_output) != Z_STREAM_END) return std::nullopt;
    result.consumed = zs.get()->total_in;
    return result;
}

Bytes inflate_raw(ByteView src, std::size_t expected_size) {
    ZStream zs(-MAX_WBITS);
    if (!zs.ok()) throw Error(ErrorCode::IoError, "inflateInit failed");
    Bytes out;
    out.reserve(expected_size);
    if (run_inflate(zs, src, out, expected_size + kChunk) != Z_STREAM_END || out.size() != expected_size) {
        throw Error(ErrorCode::IoError, "corrupt deflate stream");
    }
    return out;
}

Bytes gzip(ByteView src, int level) {
    z_stream zs;
    std::memset(&zs, 0, sizeof zs);
    if (deflateInit2(&zs, level, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorCode::IoError, "deflateInit failed");
    }
    Bytes out(deflateBound(&zs, static_cast<uLong>(src.size())) + 32);
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

bool lz4_block_decode(ByteView src, Bytes& out, std::size_t max_output) {
    std::size_t ip = 0;
    const std::size_t n = src.size();
    const auto read_length = [&](std::size_t base, std::size_t& len) {
        len = base;
        if (base != 15) return true;
        for (;;) {
            if (ip >= n) return false;
            const auto b = src[ip++];
            len += b;
            if (b != 255) return true;
        }
    };
    while (ip < n) {
        const auto token = src[ip++];
        std::size_t lit = 0;
        if (!read_length(token >> 4, lit)) return false;
        if (lit > n - ip || out.size() + lit > max_output) return false;
        out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(ip),
                   src.begin() + static_cast<std::ptrdiff_t>(ip + lit));
        ip += lit;
        if (ip == n) return true;  // last sequence carries literals only
        if (n - ip < 2) return false;
        const std::size_t offset = load_le16(src.data() + ip);
        ip += 2;
        if (offset == 0 || offset > out.size()) return false;
        std::size_t match = 0;
        if (!read_length(token & 0x0F, match)) return false;
        match += 4;
        if (out.size() + match > max_output) return false;
        auto from = out.size() - offset;
        for (std::size_t k = 0; k < match; ++k) out.push_back(out[from + k]);
    }
    return true;
}

std::optional<Bytes> lz4_frame_decode(ByteView src, std::size_t max_output) {
    if (src.size() < 7 || load_le32(src.data()) != 0x184D2204) return std::nullopt;
    const auto flg = src[4];
    if ((flg >> 6) != 1) return std::nullopt;
    const bool block_checksum = flg & 0x10;
    const bool content_size = flg & 0x08;
    const bool dict_id = flg & 0x01;
    std::size_t p = 6 + (content_size ? 8 : 0) + (dict_id ? 4 : 0) + 1;  // FLG BD [size] [dict] HC
    if (p > src.size()) return std::nullopt;
    Bytes out;
    for (;;) {
        if (src.size() - p < 4) return std::nullopt;
        const auto word = load_le32(src.data() + p);
        p += 4;
        if (word == 0) break;  // EndMark
        const bool raw = word & 0x80000000u;
        const std::size_t size = word & 0x7FFFFFFFu;
        if (size > src.size() - p) return std::nullopt;
        const auto block = src.subspan(p, size);
        if (raw) {
            if (out.size() + size > max_output) return std::nullopt;
            out.insert(out.end(), block.begin(), block.end());
        } else if (!lz4_block_decode(block, out, max_output)) {
            return std::nullopt;
        }
        p += size + (block_checksum ? 4 : 0);
        if (p > src.size()) return std::nullopt;
    }
    return out;
}

std::optional<Bytes> lz4_legacy_decode(ByteView src, std::size_t max_output) {
    constexpr std::uint32_t kMagic = 0x184C2102;
    if (src.size() < 8 || load_le32(src.data()) != kMagic) return std::nullopt;
    Bytes out;
    std::size_t p = 4;
    std::size_t blocks = 0;
    while (src.size() - p >= 4) {
        const auto size = load_le32(src.data() + p);
        if (size == kMagic) {  // concatenated stream
            p += 4;
            continue;
        }
        if (size == 0 || size > src.size() - p - 4) break;
        const auto before = out.size();
        if (!lz4_block_decode(src.subspan(p + 4, size), out, max_output)) {
            out.resize(before);
            break;
        }
        ++blocks;
        p += 4 + size;
    }
    if (blocks == 0) return std::nullopt;
    return out;
}

}  // namespace vrfaudit::compress
