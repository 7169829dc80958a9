#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vrfaudit/util.hpp"
#include "vrfaudit/zip.hpp"

namespace vrfaudit::apk {

// Binary XML chunk types.
inline constexpr std::uint16_t kResStringPool = 0x0001;
inline constexpr std::uint16_t kResXml = 0x0003;
inline constexpr std::uint16_t kResXmlStartNamespace = 0x0100;
inline constexpr std::uint16_t kResXmlEndNamespace = 0x0101;
inline constexpr std::uint16_t kResXmlStartElement = 0x0102;
inline constexpr std::uint16_t kResXmlEndElement = 0x0103;
inline constexpr std::uint16_t kResXmlCdata = 0x0104;
inline constexpr std::uint16_t kResXmlResourceMap = 0x0180;

// Res_value data types.
inline constexpr std::uint8_t kTypeReference = 0x01;
inline constexpr std::uint8_t kTypeString = 0x03;
inline constexpr std::uint8_t kTypeIntDec = 0x10;
inline constexpr std::uint8_t kTypeIntHex = 0x11;
inline constexpr std::uint8_t kTypeIntBoolean = 0x12;

// android.R.attr ids.
inline constexpr std::uint32_t kAttrName = 0x01010003;
inline constexpr std::uint32_t kAttrProtectionLevel = 0x01010009;
inline constexpr std::uint32_t kAttrDebuggable = 0x0101000F;
inline constexpr std::uint32_t kAttrAllowBackup = 0x01010280;
inline constexpr std::uint32_t kAttrUsesCleartextTraffic = 0x010104EC;

inline constexpr std::string_view kAndroidNs = "http://schemas.android.com/apk/res/android";

struct AxmlAttribute {
    std::string ns;
    std::string name;
    std::uint32_t resource_id = 0;  // 0 when the name has no resource-map entry
    std::uint8_t type = 0;
    std::uint32_t data = 0;
    std::optional<std::string> raw;  // rawValue string, when present
};

struct AxmlElement {
    std::string ns;
    std::string name;
    std::vector<AxmlAttribute> attributes;
    std::vector<AxmlElement> children;

    const AxmlAttribute* attribute(std::uint32_t resource_id, std::string_view fallback_name) const;
};

struct AxmlDocument {
    std::vector<std::string> string_pool;  // UTF-8
    std::vector<std::uint32_t> resource_map;
    std::optional<AxmlElement> root;
    std::size_t skipped_chunks = 0;
};

/// Throws MalformedAxml on a wrong leading chunk, truncation or unbalanced
/// element chunks. Unknown chunks are skipped by their declared size.
AxmlDocument parse_axml(ByteView bytes);

/// String form of a typed attribute value (string-pool text, decimal int,
/// "true"/"false").
std::optional<std::string> attribute_text(const AxmlDocument& doc, const AxmlAttribute& attr);

enum class TriState { Unset, False, True };
std::string_view to_string(TriState t);

enum class ProtectionBucket { Dangerous, Normal, Signature, SignatureOrSystem, Others };
std::string_view to_string(ProtectionBucket b);
std::optional<ProtectionBucket> parse_bucket(std::string_view text);

/// base = raw & 0xF: 0 normal, 1 dangerous, 2 signature, 3 signatureOrSystem,
/// anything else Others. Flag bits above the base keep the base bucket.
ProtectionBucket bucket_for_raw(std::uint32_t raw);

/// "signature|privileged" style text to the raw integer; nullopt on an
/// unknown token.
std::optional<std::uint32_t> parse_protection_level(std::string_view text);

enum class AppCategory { UserLaunchable, AndroidSystem, VendorSpecific };
std::string_view to_string(AppCategory c);

struct DeclaredPermission {
    std::string name;
    std::uint32_t protection_level_raw = 0;
    ProtectionBucket bucket = ProtectionBucket::Normal;
    bool operator==(const DeclaredPermission&) const = default;
};

struct SecurityFlags {
    TriState allow_backup = TriState::Unset;
    TriState debuggable = TriState::Unset;
    TriState uses_cleartext_traffic = TriState::Unset;
    bool operator==(const SecurityFlags&) const = default;
};

struct ManifestReport {
    std::string package_name;
    SecurityFlags flags;
    std::set<std::string> used_permissions;
    std::vector<DeclaredPermission> declared_permissions;  // sorted by name, first declaration kept
    bool has_launcher_activity = false;
    AppCategory category = AppCategory::VendorSpecific;
};

/// com.android.* first, then launcher presence, otherwise vendor.
AppCategory categorize(std::string_view package_name, bool has_launcher_activity);

ManifestReport extract_manifest_report(const AxmlDocument& doc);

inline constexpr std::string_view kManifestEntry = "AndroidManifest.xml";

class ApkArchive {
public:
    /// Throws NotAZip or NoManifest.
    static ApkArchive open(const std::filesystem::path& path);
    static ApkArchive from_bytes(Bytes data);

    Bytes manifest_bytes() const;
    /// lib/** entries (candidate embedded native libraries), sorted.
    std::vector<std::string> native_library_entries() const;
    const ZipArchive& zip() const { return zip_; }

private:
    explicit ApkArchive(ZipArchive zip);
    ZipArchive zip_;
    const ZipEntry* manifest_ = nullptr;
};

struct FlagCounts {
    std::size_t uses_cleartext_traffic = 0;
    std::size_t allow_backup = 0;
    std::size_t debuggable = 0;
    bool operator==(const FlagCounts&) const = default;
};

/// Counts apps whose flag is explicitly true.
FlagCounts summarize_flags(const std::vector<ManifestReport>& reports);

}  // namespace vrfaudit::apk
