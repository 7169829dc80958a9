#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrfaudit/util.hpp"

namespace vrfaudit::kernel {

struct BootImage {
    std::uint32_t header_version = 0;
    std::uint32_t page_size = 0;
    Bytes kernel;
    Bytes ramdisk;  // carried for completeness, not audited
    std::size_t raw_size = 0;
};

/// Android boot image, header versions 0-4. v0-v2 read page_size from
/// offset 36; v3+ use a fixed 4096-byte page. Kernel starts at one page.
/// Throws BadMagic or TruncatedImage.
BootImage parse_boot_image(ByteView blob);

enum class OptionState { Yes, Module, Value, NotSet };

struct OptionValue {
    OptionState state = OptionState::NotSet;
    std::string text;  // right-hand side as written ("y", "m", "\"foo\"", "0x10")
};

class KernelConfig {
public:
    static KernelConfig parse(std::string text);

    /// y or m.
    bool enabled(std::string_view option) const;
    /// Mentioned at all, including "# CONFIG_X is not set".
    bool mentioned(std::string_view option) const;
    std::optional<OptionValue> state(std::string_view option) const;

    const std::map<std::string, OptionValue, std::less<>>& options() const { return options_; }
    const std::string& raw_text() const { return raw_; }

private:
    std::map<std::string, OptionValue, std::less<>> options_;
    std::string raw_;
};

bool is_valid_option_name(std::string_view name);

/// Text between IKCFG_ST and IKCFG_ED, gunzipped. When the blob carries no
/// usable marker, compressed payloads (gzip, LZ4 frame, LZ4 legacy) found
/// anywhere in it are decompressed and rescanned. Throws NoEmbeddedConfig or
/// CorruptConfigStream.
std::string extract_ikconfig_text(ByteView kernel_blob);
KernelConfig extract_ikconfig(ByteView kernel_blob);

struct KernelSeries {
    int major = 0;
    int minor = 0;
    auto operator<=>(const KernelSeries&) const = default;
    std::string to_string() const;
    static std::optional<KernelSeries> parse(std::string_view text);
};

struct KernelVersion {
    int major = 0;
    int minor = 0;
    int patch = 0;
    std::string banner;

    KernelSeries series() const { return {major, minor}; }
    std::string to_string() const;
};

/// First "Linux version " banner in the blob or any decompressed layer.
/// Throws BannerNotFound.
KernelVersion extract_kernel_version(ByteView kernel_blob);

enum class Requirement { Must, StronglyRecommended10, StronglyRecommended12, Suggested };
enum class ResolvedRequirement { Must, StronglyRecommended, Suggested };

std::string_view to_string(Requirement r);
std::string_view to_string(ResolvedRequirement r);
std::optional<Requirement> parse_requirement(std::string_view text);

/// "STRONGLY RECOMMENDED in Android N" entries only carry that weight once
/// the firmware runs that release; before it they report as suggested. An
/// unknown SDK (0) keeps the nominal class.
ResolvedRequirement resolve_requirement(Requirement r, int android_sdk);

struct MitigationCatalogEntry {
    std::string id;
    std::string attack_vector;
    std::string mitigation_name;
    Requirement requirement = Requirement::Suggested;
    std::vector<std::vector<std::string>> clauses;  // OR of ANDs
};

using MitigationCatalog = std::vector<MitigationCatalogEntry>;

/// Line-oriented `id | requirement | clause;clause [| attack vector | mitigation]`
/// records, clause = `OPT+OPT`. Throws BadCatalog with the line number.
MitigationCatalog parse_catalog(std::string_view text);
std::string serialize_catalog(const MitigationCatalog& catalog);
const MitigationCatalog& default_catalog();
std::string_view builtin_catalog_text();

enum class MitigationStatus { Enabled, Absent };
std::string_view to_string(MitigationStatus s);

struct MitigationVerdict {
    std::string entry_id;
    MitigationStatus status = MitigationStatus::Absent;
    std::vector<std::string> satisfied_clause;
    ResolvedRequirement requirement = ResolvedRequirement::Suggested;
    bool via_module = false;       // some satisfying option is =m
    bool predates_option = false;  // no clause option is known to this config
};

std::vector<MitigationVerdict> evaluate_mitigations(const KernelConfig& config, int android_sdk,
                                                    const MitigationCatalog& catalog = default_catalog());

struct LtsRelease {
    KernelSeries series;
    Date released;
};

using LtsTable = std::vector<LtsRelease>;

/// Lines `series | YYYY-MM-DD`. Dates and series must both increase.
LtsTable parse_lts_table(std::string_view text);
const LtsTable& default_lts_table();
std::string_view builtin_lts_table_text();

struct LtsLag {
    bool determinate = false;
    std::optional<KernelSeries> latest_lts;
    bool lagging = false;
    int series_behind = 0;  // LTS releases newer than the firmware's series
};

/// Newest LTS dated on or before release_date. Without a date the result is
/// indeterminate.
LtsLag lts_lag(const KernelVersion& version, const std::optional<Date>& release_date,
               const LtsTable& table = default_lts_table());

}  // namespace vrfaudit::kernel
