#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vrfaudit/util.hpp"

namespace vrfaudit::longitudinal {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// No whitespace, sorted keys, invalid UTF-8 replaced.
std::string canonical_dump(const Json& j);

/// UTC ISO-8601 timestamp; SOURCE_DATE_EPOCH wins over the clock.
std::string produced_at_now();

/// Report body plus the two fields kept outside the digest: `digest` and
/// `produced_at`.
class AuditReport {
public:
    /// Throws BadReport unless the body carries schema_version, firmware.device
    /// and firmware.version.
    explicit AuditReport(Json body, std::optional<std::string> produced_at = std::nullopt);

    /// Parses a stored report; a present digest must match the body.
    static AuditReport parse(std::string_view text);
    static AuditReport load(const fs::path& path);

    const Json& body() const { return body_; }
    std::string canonical_body() const { return canonical_dump(body_); }
    std::string digest() const;
    const std::optional<std::string>& produced_at() const { return produced_at_; }

    /// Full on-disk form; uses produced_at_now() when no timestamp is set.
    std::string serialize() const;

    std::string device() const;
    std::string version() const;
    std::optional<Date> release_date() const;

private:
    Json body_;
    std::optional<std::string> produced_at_;
};

fs::path report_path(const fs::path& catalog_dir, std::string_view device, std::string_view version);

/// Writes `<catalog>/<device>/<version>.json` and refreshes the index.
/// Re-storing a report with the same digest leaves the file untouched.
/// Throws VersionCollision or IoError.
fs::path store_report(const AuditReport& report, const fs::path& catalog_dir);

struct CatalogEntry {
    std::string device;
    std::string version;
    std::optional<Date> date;
    std::string digest;
    fs::path path;
};

/// Every report for `device`, in trend order. `ordering_fallback` is set
/// when some report lacks a date and version natural order was used.
struct DeviceHistory {
    std::vector<AuditReport> reports;
    bool ordering_fallback = false;
};

DeviceHistory load_history(const fs::path& catalog_dir, std::string_view device);
/// Orders in place (date then version; natural version order when any date
/// is missing). Returns true on fallback.
bool order_reports(std::vector<AuditReport>& reports);

std::vector<CatalogEntry> read_index(const fs::path& catalog_dir);

struct MetricDef {
    std::string id;
    std::string pointer;  // JSON pointer into the report body
    bool count_like = false;  // eligible for FLAG_COUNT_JUMP
};

const std::vector<MetricDef>& metric_registry();
const MetricDef* find_metric(std::string_view id);
std::vector<std::string> metric_ids();

std::optional<double> metric_value(const AuditReport& report, const MetricDef& metric);

struct TrendPoint {
    std::string version;
    std::optional<Date> date;
    std::optional<double> value;  // nullopt = gap
    bool operator==(const TrendPoint&) const = default;
};

struct TrendSeries {
    std::string metric;
    std::string device;
    bool ordering_fallback = false;
    std::vector<TrendPoint> points;
    bool operator==(const TrendSeries&) const = default;
};

/// Throws InvalidArgument on an unknown metric id.
std::vector<TrendSeries> compute_trends(const DeviceHistory& history, std::string_view device,
                                        const std::vector<std::string>& metrics);
std::vector<TrendSeries> compute_trends(const fs::path& catalog_dir, std::string_view device,
                                        const std::vector<std::string>& metrics);

enum class EventKind {
    MitigationAdded,
    MitigationRemoved,
    FlagCountJump,
    ProtectionChange,
    NeverallowRemoved,
    AndroidVersionBump,
    KernelSeriesChange,
};
std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct ChangeEvent {
    EventKind kind = EventKind::MitigationAdded;
    std::string from_version;
    std::string to_version;
    Json payload;
    bool operator==(const ChangeEvent&) const = default;
};

struct EventOptions {
    double jump_threshold = 0.25;  // relative change between consecutive versions
};

/// Events of one consecutive pair.
std::vector<ChangeEvent> compare_reports(const AuditReport& older, const AuditReport& newer,
                                         const EventOptions& options = {});
/// Concatenation of compare_reports over consecutive pairs.
std::vector<ChangeEvent> detect_change_events(const std::vector<AuditReport>& ordered,
                                              const EventOptions& options = {});
std::vector<ChangeEvent> detect_change_events(const fs::path& catalog_dir, std::string_view device,
                                              const EventOptions& options = {});

/// LOOSENED protection changes, removed neverallows, removed mitigations.
bool is_regression(const ChangeEvent& e);

enum class ExportFormat { Json, Csv };

std::string csv_field(std::string_view s);
std::string export_series(const std::vector<TrendSeries>& series, ExportFormat format);
std::string export_events(const std::vector<ChangeEvent>& events, ExportFormat format);
std::vector<TrendSeries> import_series_json(std::string_view text);
std::vector<ChangeEvent> import_events_json(std::string_view text);

}  // namespace vrfaudit::longitudinal
