#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrfaudit/util.hpp"

namespace vrfaudit {

struct ZipEntry {
    std::string name;
    std::uint16_t method = 0;  // 0 stored, 8 deflate
    std::uint32_t compressed_size = 0;
    std::uint32_t uncompressed_size = 0;
    std::uint32_t local_header_offset = 0;
};

/// Read-only zip archive over an in-memory copy of the file. Entries come
/// from the central directory; data is located through each local header.
class ZipArchive {
public:
    /// Throws NotAZip when no end-of-central-directory record is found or
    /// the directory is inconsistent.
    explicit ZipArchive(Bytes data);
    static ZipArchive open(const std::filesystem::path& path);

    const std::vector<ZipEntry>& entries() const { return entries_; }
    const ZipEntry* find(std::string_view name) const;

    /// Throws IoError on unsupported method or corrupt data.
    Bytes read(const ZipEntry& entry) const;

private:
    Bytes data_;
    std::vector<ZipEntry> entries_;
};

/// Minimal writer (stored or deflate entries, no zip64). Fixture builders
/// and tests use it to assemble APKs.
class ZipWriter {
public:
    void add(std::string name, ByteView contents, bool deflate = true);
    Bytes finish() const;

private:
    struct Pending {
        std::string name;
        Bytes stored;
        std::uint16_t method;
        std::uint32_t crc;
        std::uint32_t size;
    };
    std::vector<Pending> pending_;
};

}  // namespace vrfaudit
