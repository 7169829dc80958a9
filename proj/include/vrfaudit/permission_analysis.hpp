#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrfaudit/apk_audit.hpp"

namespace vrfaudit::permissions {

using apk::ManifestReport;
using apk::ProtectionBucket;

struct Declaration {
    std::uint32_t protection_level_raw = 0;
    ProtectionBucket bucket = ProtectionBucket::Normal;
    std::string source;  // "framework:<name>" or the app's report path
    bool operator==(const Declaration&) const = default;
};

struct DeclarationConflict {
    std::string permission;
    std::string kept_source;
    std::uint32_t kept_raw = 0;
    std::string dropped_source;
    std::uint32_t dropped_raw = 0;
};

/// A manifest plus a label naming where it came from.
struct SourcedReport {
    std::string source;
    const ManifestReport* report = nullptr;
};

struct PermissionLedger {
    std::map<std::string, Declaration> declared;
    std::map<std::string, std::set<std::string>> used_by;  // permission -> package names
    std::vector<DeclarationConflict> conflicts;
};

/// Framework declarations take precedence over app declarations; within a
/// tier the first source (in the given order) wins. Differing duplicates are
/// logged in `conflicts`.
PermissionLedger build_ledger(const std::vector<SourcedReport>& framework_reports,
                              const std::vector<SourcedReport>& app_reports);

struct InconsistencyReport {
    std::set<std::string> residual;  // declared but unused
    std::set<std::string> phantom;   // used but undeclared
    bool operator==(const InconsistencyReport&) const = default;
};

/// `allowlist` names are dropped from the phantom set (empty by default).
InconsistencyReport detect_inconsistencies(const PermissionLedger& ledger,
                                           const std::set<std::string>& phantom_allowlist = {});

/// Set-level form used by the algebra checks.
InconsistencyReport set_inconsistencies(const std::set<std::string>& declared, const std::set<std::string>& used);

inline constexpr std::array<ProtectionBucket, 5> kBucketOrder = {
    ProtectionBucket::Dangerous, ProtectionBucket::Normal, ProtectionBucket::Signature,
    ProtectionBucket::SignatureOrSystem, ProtectionBucket::Others};

struct BucketMeans {
    std::size_t app_count = 0;
    std::array<std::size_t, 5> totals{};  // indexed as kBucketOrder
    std::array<double, 5> means{};         // rounded to two decimals
    std::size_t others_unresolved = 0;     // used names with no declaration
    std::size_t others_unmapped_level = 0; // declared with base level outside 0-3
};

/// Throws EmptyAppSet when `app_reports` is empty.
BucketMeans per_app_bucket_means(const std::vector<const ManifestReport*>& app_reports,
                                 const PermissionLedger& ledger);

double round2(double v);

enum class Direction { Tightened, Loosened, Removed, Added, FlagOnly };
std::string_view to_string(Direction d);

struct ProtectionChangeEvent {
    std::string permission;
    std::string from_version;
    std::string to_version;
    std::optional<ProtectionBucket> old_bucket;
    std::optional<ProtectionBucket> new_bucket;
    std::optional<std::uint32_t> old_raw;
    std::optional<std::uint32_t> new_raw;
    Direction direction = Direction::FlagOnly;
    bool operator==(const ProtectionChangeEvent&) const = default;
};

/// Declared-permission table reduced to what change tracking needs.
using DeclarationTable = std::map<std::string, std::uint32_t>;  // name -> raw level

DeclarationTable declaration_table(const PermissionLedger& ledger);

Direction classify_change(std::uint32_t old_raw, std::uint32_t new_raw);

/// Compares each consecutive pair; `versions` is already ordered.
std::vector<ProtectionChangeEvent> protection_changes(
    const std::vector<std::pair<std::string, DeclarationTable>>& versions);

}  // namespace vrfaudit::permissions
