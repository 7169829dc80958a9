#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vrfaudit/ingest.hpp"
#include "vrfaudit/kernel_audit.hpp"
#include "vrfaudit/longitudinal.hpp"
#include "vrfaudit/sepolicy_audit.hpp"

namespace vrfaudit {

struct AuditConfig {
    std::filesystem::path root;
    std::string device;
    std::string version;
    std::optional<Date> release_date;
    std::optional<kernel::MitigationCatalog> mitigation_catalog;  // builtin when unset
    std::optional<kernel::LtsTable> lts_table;
    std::optional<ingest::BuildIdMap> buildid_map;
    std::vector<std::string> framework_apk_names = ingest::default_framework_apk_names();
    std::vector<std::filesystem::path> extra_framework_apks;
    std::vector<std::filesystem::path> baseline_cil;
    sepolicy::ExposureOptions exposure;
    std::set<std::string> phantom_allowlist;
    unsigned jobs = 1;
};

struct AuditOutcome {
    longitudinal::AuditReport report;
    std::vector<std::string> component_failures;  // empty on a clean audit
};

/// ingest -> kernel -> binaries -> apps -> permissions -> sepolicy.
/// Throws on fatal input errors (UnreadableRoot, NoPartitions, bad
/// baseline); section-level failures are recorded in the report.
AuditOutcome run_audit_pipeline(const AuditConfig& config);

/// Human-readable counts per section.
std::string summary_text(const longitudinal::AuditReport& report);

}  // namespace vrfaudit
