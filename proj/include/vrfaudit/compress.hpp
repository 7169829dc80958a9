#pragma once

#include <cstddef>
#include <optional>

#include "vrfaudit/util.hpp"

// Decoders for the compression formats found in kernel images and APKs.
// Kernel-side decoders return nullopt on corrupt input so sliding scans can
// move on to the next candidate.
namespace vrfaudit::compress {

inline constexpr std::size_t kDefaultMaxOutput = std::size_t{512} << 20;

struct GunzipResult {
    Bytes data;
    std::size_t consumed = 0;  // bytes of input used by the gzip member
};

/// Decodes a single gzip member (RFC 1952) starting at src[0].
std::optional<GunzipResult> gunzip(ByteView src, std::size_t max_output = kDefaultMaxOutput);

/// Raw deflate (RFC 1951), as stored in zip entries. Throws IoError on
/// failure or when the output size differs from expected_size.
Bytes inflate_raw(ByteView src, std::size_t expected_size);

/// Compresses into a gzip member. Used by fixture builders and tests.
Bytes gzip(ByteView src, int level = 9);

/// Appends one LZ4 block's output to `out`. Back-references may reach into
/// bytes already in `out` (linked frame blocks).
bool lz4_block_decode(ByteView src, Bytes& out, std::size_t max_output = kDefaultMaxOutput);

/// LZ4 frame format (magic 04 22 4D 18).
std::optional<Bytes> lz4_frame_decode(ByteView src, std::size_t max_output = kDefaultMaxOutput);

/// LZ4 legacy format (magic 02 21 4C 18), as produced by `lz4 -l` for
/// kernel images. Trailing data after the last block is ignored.
std::optional<Bytes> lz4_legacy_decode(ByteView src, std::size_t max_output = kDefaultMaxOutput);

}  // namespace vrfaudit::compress
