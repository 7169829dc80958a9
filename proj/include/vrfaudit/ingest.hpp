#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrfaudit/util.hpp"

namespace vrfaudit::ingest {

namespace fs = std::filesystem;

enum class DeviceModel { Quest, Quest2, Quest3, QuestPro, PicoNeo3, Pico4, Other };

struct Device {
    DeviceModel model = DeviceModel::Other;
    std::string label;  // canonical id for known models, free text otherwise

    /// Known ids: quest, quest2, quest3, quest_pro, pico_neo3, pico4. Anything
    /// else becomes Other with the given label.
    static Device parse(std::string_view text);
    bool is_pico() const { return model == DeviceModel::PicoNeo3 || model == DeviceModel::Pico4; }
    const std::string& id() const { return label; }
};

struct AndroidVersion {
    int sdk = 0;
    std::string release;
    bool operator==(const AndroidVersion&) const = default;
};

class BuildProperties {
public:
    static BuildProperties parse(std::string_view text, fs::path source = {});
    static BuildProperties load(const fs::path& path);

    /// Last occurrence wins.
    std::optional<std::string> get(std::string_view key) const;
    std::string serialize() const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    const fs::path& source_path() const { return source_; }
    std::size_t malformed_lines() const { return malformed_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    fs::path source_;
    std::size_t malformed_ = 0;
};

/// ro.build.id -> Android version table. Keys ending in '*' match by
/// prefix; the longest matching key wins, exact keys beat prefixes.
class BuildIdMap {
public:
    /// Lines `build_id | sdk | release`, '#' comments. Throws BadCatalog.
    static BuildIdMap parse(std::string_view text);
    static BuildIdMap load(const fs::path& path);
    static const BuildIdMap& builtin();

    std::optional<AndroidVersion> lookup(std::string_view build_id) const;
    std::size_t size() const { return exact_.size() + prefix_.size(); }

private:
    std::map<std::string, AndroidVersion, std::less<>> exact_;
    std::vector<std::pair<std::string, AndroidVersion>> prefix_;
};

std::string_view builtin_buildid_map_text();

/// Throws VersionUnresolved when no usable property exists.
AndroidVersion resolve_android_version(const BuildProperties& props, const Device& device,
                                       const BuildIdMap& map = BuildIdMap::builtin());

struct FirmwareRecord {
    Device device;
    std::string version_label;
    std::optional<Date> release_date;
    std::optional<AndroidVersion> android_version;
    std::map<std::string, fs::path> partition_roots;  // system / vendor / odm, canonical
    std::optional<fs::path> boot_image;
    fs::path root;
    std::vector<std::string> diagnostics;

    /// Path relative to the firmware root, with '/' separators.
    std::string display_path(const fs::path& p) const;
};

struct LoadOptions {
    std::optional<Date> release_date;
    const BuildIdMap* buildid_map = nullptr;  // null -> builtin
};

inline constexpr std::string_view kManifestFileName = "vrfaudit.manifest";

/// Throws NoPartitions or UnreadableRoot. A missing boot image or an
/// unresolvable Android version is recorded in diagnostics only.
FirmwareRecord load_firmware(const fs::path& root, const Device& device, std::string version_label,
                             const LoadOptions& options = {});

/// A file stored inside a zip container (packed .apex or APK lib/).
struct ArchiveMember {
    fs::path archive;
    std::string entry;
    auto operator<=>(const ArchiveMember&) const = default;
};

struct TargetSet {
    std::vector<fs::path> elf_candidates;
    std::vector<ArchiveMember> archived_elf_candidates;  // inner lib*/ of packed .apex
    std::vector<fs::path> apk_candidates;
    std::vector<fs::path> framework_apk_candidates;
    std::vector<fs::path> cil_candidates;
    std::vector<fs::path> binary_policy_candidates;
    std::optional<fs::path> kernel_blob;
};

std::vector<std::string> default_framework_apk_names();

struct EnumerateOptions {
    std::vector<std::string> framework_apk_names = default_framework_apk_names();
    std::vector<fs::path> extra_framework_apks;  // explicit paths, used as given
};

/// Deterministic, sorted enumeration of audit targets. Symlinks are followed
/// only when they resolve inside a partition root; each real file appears
/// once (under its lexicographically smallest path).
TargetSet enumerate_targets(const FirmwareRecord& record, const EnumerateOptions& options = {});

bool has_elf_magic(ByteView head);

}  // namespace vrfaudit::ingest
