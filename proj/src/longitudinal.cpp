#include "vrfaudit/longitudinal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <map>

#include "vrfaudit/error.hpp"
#include "vrfaudit/permission_analysis.hpp"
#include "vrfaudit/sepolicy_audit.hpp"

namespace vrfaudit::longitudinal {

namespace {

constexpr std::string_view kIndexFile = "index.json";

[[noreturn]] void bad_report(const std::string& why) { throw Error(ErrorCode::BadReport, why); }

const Json* at_pointer(const Json& j, const std::string& pointer) {
    try {
        const Json::json_pointer p(pointer);
        if (!j.contains(p)) return nullptr;
        return &j.at(p);
    } catch (const Json::exception&) {
        return nullptr;
    }
}

std::optional<double> as_number(const Json* v) {
    if (!v) return std::nullopt;
    if (v->is_number()) return v->get<double>();
    if (v->is_boolean()) return v->get<bool>() ? 1.0 : 0.0;
    return std::nullopt;
}

std::optional<std::string> as_string(const Json* v) {
    if (!v || !v->is_string()) return std::nullopt;
    return v->get<std::string>();
}

void check_label(std::string_view what, std::string_view label) {
    if (label.empty() || label == "." || label == ".." || label.find('/') != std::string_view::npos ||
        label.find('\\') != std::string_view::npos || label.find('\0') != std::string_view::npos) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " label is not usable as a file name: '" +
                                                    std::string(label) + "'");
    }
}

std::string format_value(double v) {
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    return Json(v).dump();
}

Json date_json(const std::optional<Date>& d) { return d ? Json(d->to_string()) : Json(nullptr); }

std::optional<Date> date_from_json(const Json& j) {
    if (!j.is_string()) return std::nullopt;
    return Date::parse(j.get<std::string>());
}

void write_index(const fs::path& catalog_dir, const CatalogEntry& updated) {
    auto entries = read_index(catalog_dir);
    auto it = std::find_if(entries.begin(), entries.end(), [&](const CatalogEntry& e) {
        return e.device == updated.device && e.version == updated.version;
    });
    if (it != entries.end()) *it = updated;
    else entries.push_back(updated);
    std::sort(entries.begin(), entries.end(), [](const CatalogEntry& a, const CatalogEntry& b) {
        if (a.device != b.device) return a.device < b.device;
        return natural_less(a.version, b.version);
    });
    Json arr = Json::array();
    for (const auto& e : entries) {
        arr.push_back({{"device", e.device}, {"version", e.version}, {"date", date_json(e.date)}, {"digest", e.digest}});
    }
    write_file_atomic(catalog_dir / kIndexFile, canonical_dump({{"schema_version", kSchemaVersion}, {"reports", arr}}) + "\n");
}

std::map<std::string, std::string> mitigation_states(const Json& body) {
    std::map<std::string, std::string> out;
    const auto* kernel = at_pointer(body, "/kernel");
    if (!kernel || !kernel->is_object() || kernel->value("status", "") != "OK") return out;
    const auto* list = at_pointer(body, "/kernel/mitigations");
    if (!list || !list->is_array()) return out;
    for (const auto& m : *list) {
        if (m.contains("id") && m.contains("status")) out[m["id"].get<std::string>()] = m["status"].get<std::string>();
    }
    return out;
}

std::optional<permissions::DeclarationTable> declaration_table(const Json& body) {
    const auto* d = at_pointer(body, "/permissions/declared");
    if (!d || !d->is_object()) return std::nullopt;
    permissions::DeclarationTable t;
    for (const auto& [name, raw] : d->items()) {
        if (raw.is_number_unsigned() || raw.is_number_integer()) t.emplace(name, raw.get<std::uint32_t>());
    }
    return t;
}

std::optional<sepolicy::KeyMultiset> neverallow_multiset(const Json& body) {
    if (as_string(at_pointer(body, "/sepolicy/status")) != "PARSED") return std::nullopt;
    const auto* rules = at_pointer(body, "/sepolicy/neverallow_rules");
    if (!rules || !rules->is_array()) return std::nullopt;
    sepolicy::KeyMultiset m;
    for (const auto& r : *rules) {
        if (r.is_string()) ++m[r.get<std::string>()];
    }
    return m;
}

Json opt_json(const std::optional<std::uint32_t>& v) { return v ? Json(*v) : Json(nullptr); }

Json opt_bucket(const std::optional<apk::ProtectionBucket>& b) {
    return b ? Json(std::string(apk::to_string(*b))) : Json(nullptr);
}

}  // namespace

std::string canonical_dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

std::string produced_at_now() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0' && v >= 0) t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

AuditReport::AuditReport(Json body, std::optional<std::string> produced_at)
    : body_(std::move(body)), produced_at_(std::move(produced_at)) {
    if (!body_.is_object() || !body_.contains("schema_version")) bad_report("report has no schema_version");
    if (!as_string(at_pointer(body_, "/firmware/device")) || !as_string(at_pointer(body_, "/firmware/version"))) {
        bad_report("report lacks firmware.device/firmware.version");
    }
    body_.erase("digest");
    body_.erase("produced_at");
}

AuditReport AuditReport::parse(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        bad_report(std::string("report is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) bad_report("report is not a JSON object");
    std::optional<std::string> stored_digest = as_string(j.contains("digest") ? &j["digest"] : nullptr);
    std::optional<std::string> produced = as_string(j.contains("produced_at") ? &j["produced_at"] : nullptr);
    AuditReport r(std::move(j), std::move(produced));
    if (stored_digest && *stored_digest != r.digest()) bad_report("report digest does not match its content");
    return r;
}

AuditReport AuditReport::load(const fs::path& path) {
    try {
        return parse(read_text_file(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BadReport) throw Error(ErrorCode::BadReport, path.string() + ": " + e.message());
        throw;
    }
}

std::string AuditReport::digest() const { return sha256_hex(std::string_view(canonical_body())); }

std::string AuditReport::serialize() const {
    Json full = body_;
    full["digest"] = digest();
    full["produced_at"] = produced_at_.value_or(produced_at_now());
    return canonical_dump(full) + "\n";
}

std::string AuditReport::device() const { return body_["firmware"]["device"].get<std::string>(); }
std::string AuditReport::version() const { return body_["firmware"]["version"].get<std::string>(); }

std::optional<Date> AuditReport::release_date() const {
    const auto* d = at_pointer(body_, "/firmware/release_date");
    return d ? date_from_json(*d) : std::nullopt;
}

fs::path report_path(const fs::path& catalog_dir, std::string_view device, std::string_view version) {
    check_label("device", device);
    check_label("version", version);
    return catalog_dir / std::string(device) / (std::string(version) + ".json");
}

fs::path store_report(const AuditReport& report, const fs::path& catalog_dir) {
    const auto path = report_path(catalog_dir, report.device(), report.version());
    const auto digest = report.digest();
    std::error_code ec;
    if (fs::exists(path, ec)) {
        const auto existing = AuditReport::load(path);
        if (existing.digest() != digest) {
            throw Error(ErrorCode::VersionCollision, "version '" + report.version() + "' of '" + report.device() +
                                                         "' is already stored with different content");
        }
    } else {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
        write_file_atomic(path, report.serialize());
    }
    write_index(catalog_dir, {report.device(), report.version(), report.release_date(), digest, path});
    return path;
}

std::vector<CatalogEntry> read_index(const fs::path& catalog_dir) {
    std::vector<CatalogEntry> out;
    const auto path = catalog_dir / kIndexFile;
    std::error_code ec;
    if (!fs::exists(path, ec)) return out;
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::BadReport, path.string() + ": " + e.what());
    }
    for (const auto& e : j.value("reports", Json::array())) {
        CatalogEntry c;
        c.device = e.value("device", "");
        c.version = e.value("version", "");
        c.date = e.contains("date") ? date_from_json(e["date"]) : std::nullopt;
        c.digest = e.value("digest", "");
        c.path = catalog_dir / c.device / (c.version + ".json");
        out.push_back(std::move(c));
    }
    return out;
}

bool order_reports(std::vector<AuditReport>& reports) {
    const bool all_dated =
        std::all_of(reports.begin(), reports.end(), [](const AuditReport& r) { return r.release_date().has_value(); });
    std::sort(reports.begin(), reports.end(), [all_dated](const AuditReport& a, const AuditReport& b) {
        if (all_dated) {
            const auto da = *a.release_date();
            const auto db = *b.release_date();
            if (da != db) return da < db;
        }
        const auto va = a.version();
        const auto vb = b.version();
        if (natural_less(va, vb)) return true;
        if (natural_less(vb, va)) return false;
        return va < vb;
    });
    return !all_dated && !reports.empty();
}

DeviceHistory load_history(const fs::path& catalog_dir, std::string_view device) {
    check_label("device", device);
    DeviceHistory h;
    const auto dir = catalog_dir / std::string(device);
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return h;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (e.path().extension() == ".json" && e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) h.reports.push_back(AuditReport::load(f));
    h.ordering_fallback = order_reports(h.reports);
    return h;
}

const std::vector<MetricDef>& metric_registry() {
    static const std::vector<MetricDef> registry = [] {
        std::vector<MetricDef> r = {
            {"android.sdk", "/firmware/android/sdk", false},
            {"kernel.mitigations_enabled", "/kernel/mitigations_enabled", false},
            {"kernel.mitigations_absent", "/kernel/mitigations_absent", false},
            {"kernel.lts_series_behind", "/kernel/lts/series_behind", false},
        };
        for (const auto& [prefix, section] : {std::pair{"binaries", "summary"}, {"apk_binaries", "apk_embedded_summary"}}) {
            for (const auto* field : {"audited", "failed", "unique_contents"}) {
                r.push_back({std::string(prefix) + "." + field, std::string("/binaries/") + section + "/" + field, false});
            }
            for (const auto* field : {"no_canary", "no_cfi", "no_fortify", "no_nx", "no_relro", "partial_relro"}) {
                r.push_back({std::string(prefix) + "." + field, std::string("/binaries/") + section + "/" + field, true});
            }
        }
        r.push_back({"apps.count", "/apps/audited", false});
        r.push_back({"apps.failed", "/apps/failed_count", false});
        r.push_back({"apps.cleartext", "/apps/flag_counts/uses_cleartext_traffic", true});
        r.push_back({"apps.allow_backup", "/apps/flag_counts/allow_backup", true});
        r.push_back({"apps.debuggable", "/apps/flag_counts/debuggable", true});
        r.push_back({"apps.user_launchable", "/apps/categories/USER_LAUNCHABLE", false});
        r.push_back({"apps.android_system", "/apps/categories/ANDROID_SYSTEM", false});
        r.push_back({"apps.vendor_specific", "/apps/categories/VENDOR_SPECIFIC", false});
        for (const auto& [id, bucket] : {std::pair{"dangerous", "DANGEROUS"}, {"normal", "NORMAL"}, {"signature", "SIGNATURE"},
                                         {"signature_or_system", "SIGNATURE_OR_SYSTEM"}, {"others", "OTHERS"}}) {
            r.push_back({std::string("apps.mean_") + id, std::string("/apps/bucket_means/") + bucket, false});
        }
        r.push_back({"permissions.declared_count", "/permissions/declared_count", false});
        r.push_back({"permissions.residual_count", "/permissions/residual_count", false});
        r.push_back({"permissions.phantom_count", "/permissions/phantom_count", false});
        r.push_back({"permissions.conflict_count", "/permissions/conflict_count", false});
        r.push_back({"sepolicy.allow_count", "/sepolicy/allow_count", false});
        r.push_back({"sepolicy.neverallow_count", "/sepolicy/neverallow_count", false});
        r.push_back({"sepolicy.exposure_count", "/sepolicy/exposure_count", false});
        return r;
    }();
    return registry;
}

const MetricDef* find_metric(std::string_view id) {
    for (const auto& m : metric_registry()) {
        if (m.id == id) return &m;
    }
    return nullptr;
}

std::vector<std::string> metric_ids() {
    std::vector<std::string> ids;
    for (const auto& m : metric_registry()) ids.push_back(m.id);
    return ids;
}

std::optional<double> metric_value(const AuditReport& report, const MetricDef& metric) {
    return as_number(at_pointer(report.body(), metric.pointer));
}

std::vector<TrendSeries> compute_trends(const DeviceHistory& history, std::string_view device,
                                        const std::vector<std::string>& metrics) {
    std::vector<const MetricDef*> defs;
    for (const auto& id : metrics) {
        const auto* m = find_metric(id);
        if (!m) throw Error(ErrorCode::InvalidArgument, "unknown metric '" + id + "'");
        defs.push_back(m);
    }
    std::vector<TrendSeries> out;
    for (const auto* m : defs) {
        TrendSeries s;
        s.metric = m->id;
        s.device = std::string(device);
        s.ordering_fallback = history.ordering_fallback;
        for (const auto& r : history.reports) s.points.push_back({r.version(), r.release_date(), metric_value(r, *m)});
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TrendSeries> compute_trends(const fs::path& catalog_dir, std::string_view device,
                                        const std::vector<std::string>& metrics) {
    for (const auto& id : metrics) {
        if (!find_metric(id)) throw Error(ErrorCode::InvalidArgument, "unknown metric '" + id + "'");
    }
    return compute_trends(load_history(catalog_dir, device), device, metrics);
}

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::MitigationAdded: return "MITIGATION_ADDED";
        case EventKind::MitigationRemoved: return "MITIGATION_REMOVED";
        case EventKind::FlagCountJump: return "FLAG_COUNT_JUMP";
        case EventKind::ProtectionChange: return "PROTECTION_CHANGE";
        case EventKind::NeverallowRemoved: return "NEVERALLOW_REMOVED";
        case EventKind::AndroidVersionBump: return "ANDROID_VERSION_BUMP";
        case EventKind::KernelSeriesChange: return "KERNEL_SERIES_CHANGE";
    }
    return "";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
    for (auto k : {EventKind::MitigationAdded, EventKind::MitigationRemoved, EventKind::FlagCountJump,
                   EventKind::ProtectionChange, EventKind::NeverallowRemoved, EventKind::AndroidVersionBump,
                   EventKind::KernelSeriesChange}) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

std::vector<ChangeEvent> compare_reports(const AuditReport& older, const AuditReport& newer,
                                         const EventOptions& options) {
    std::vector<ChangeEvent> events;
    const auto from = older.version();
    const auto to = newer.version();
    const auto emit = [&](EventKind k, Json payload) { events.push_back({k, from, to, std::move(payload)}); };
    const auto& a = older.body();
    const auto& b = newer.body();

    const auto ma = mitigation_states(a);
    const auto mb = mitigation_states(b);
    if (!ma.empty() && !mb.empty()) {
        for (const auto& [id, status] : mb) {
            auto it = ma.find(id);
            const bool was = it != ma.end() && it->second == "ENABLED";
            const bool is = status == "ENABLED";
            if (is && !was) emit(EventKind::MitigationAdded, {{"mitigation", id}});
            if (!is && was) emit(EventKind::MitigationRemoved, {{"mitigation", id}});
        }
        for (const auto& [id, status] : ma) {
            if (!mb.count(id) && status == "ENABLED") emit(EventKind::MitigationRemoved, {{"mitigation", id}});
        }
    }

    for (const auto& m : metric_registry()) {
        if (!m.count_like) continue;
        const auto va = metric_value(older, m);
        const auto vb = metric_value(newer, m);
        if (!va || !vb || *va == *vb) continue;
        if (*va == 0) {
            emit(EventKind::FlagCountJump, {{"metric", m.id}, {"old", *va}, {"new", *vb}, {"relative_change", nullptr}});
            continue;
        }
        const double rel = (*vb - *va) / *va;
        if (std::fabs(rel) >= options.jump_threshold) {
            emit(EventKind::FlagCountJump,
                 {{"metric", m.id}, {"old", *va}, {"new", *vb}, {"relative_change", std::round(rel * 10000) / 10000}});
        }
    }

    const auto ta = declaration_table(a);
    const auto tb = declaration_table(b);
    if (ta && tb) {
        for (const auto& e : permissions::protection_changes({{from, *ta}, {to, *tb}})) {
            emit(EventKind::ProtectionChange, {{"permission", e.permission},
                                               {"direction", std::string(permissions::to_string(e.direction))},
                                               {"old_raw", opt_json(e.old_raw)},
                                               {"new_raw", opt_json(e.new_raw)},
                                               {"old_bucket", opt_bucket(e.old_bucket)},
                                               {"new_bucket", opt_bucket(e.new_bucket)}});
        }
    }

    const auto na = neverallow_multiset(a);
    const auto nb = neverallow_multiset(b);
    if (na && nb) {
        const auto diff = sepolicy::diff_multisets({}, *na, {}, *nb);
        for (const auto& [key, count] : diff.removed_neverallow) {
            emit(EventKind::NeverallowRemoved, {{"rule", key}, {"count", count}});
        }
    }

    const auto sa = as_number(at_pointer(a, "/firmware/android/sdk"));
    const auto sb = as_number(at_pointer(b, "/firmware/android/sdk"));
    if (sa && sb && *sa != *sb) {
        emit(EventKind::AndroidVersionBump,
             {{"old_sdk", *sa}, {"new_sdk", *sb},
              {"old_release", a["firmware"]["android"].value("release", "")},
              {"new_release", b["firmware"]["android"].value("release", "")}});
    }

    const auto ka = as_string(at_pointer(a, "/kernel/series"));
    const auto kb = as_string(at_pointer(b, "/kernel/series"));
    if (ka && kb && *ka != *kb) emit(EventKind::KernelSeriesChange, {{"old", *ka}, {"new", *kb}});
    return events;
}

std::vector<ChangeEvent> detect_change_events(const std::vector<AuditReport>& ordered, const EventOptions& options) {
    std::vector<ChangeEvent> out;
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        auto pair = compare_reports(ordered[i - 1], ordered[i], options);
        out.insert(out.end(), std::make_move_iterator(pair.begin()), std::make_move_iterator(pair.end()));
    }
    return out;
}

std::vector<ChangeEvent> detect_change_events(const fs::path& catalog_dir, std::string_view device,
                                              const EventOptions& options) {
    return detect_change_events(load_history(catalog_dir, device).reports, options);
}

bool is_regression(const ChangeEvent& e) {
    switch (e.kind) {
        case EventKind::MitigationRemoved:
        case EventKind::NeverallowRemoved: return true;
        case EventKind::ProtectionChange: return e.payload.value("direction", "") == "LOOSENED";
        default: return false;
    }
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string export_series(const std::vector<TrendSeries>& series, ExportFormat format) {
    if (format == ExportFormat::Json) {
        Json arr = Json::array();
        for (const auto& s : series) {
            Json points = Json::array();
            for (const auto& p : s.points) {
                points.push_back({{"version", p.version},
                                  {"date", date_json(p.date)},
                                  {"value", p.value ? Json(*p.value) : Json(nullptr)}});
            }
            arr.push_back({{"metric", s.metric}, {"device", s.device}, {"ordering_fallback", s.ordering_fallback},
                           {"points", points}});
        }
        return canonical_dump({{"series", arr}}) + "\n";
    }
    std::string out = "metric,device,version,date,value\r\n";
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            out += csv_field(s.metric) + ',' + csv_field(s.device) + ',' + csv_field(p.version) + ',' +
                   (p.date ? p.date->to_string() : "") + ',' + (p.value ? format_value(*p.value) : "") + "\r\n";
        }
    }
    return out;
}

std::string export_events(const std::vector<ChangeEvent>& events, ExportFormat format) {
    if (format == ExportFormat::Json) {
        Json arr = Json::array();
        for (const auto& e : events) {
            arr.push_back({{"kind", std::string(to_string(e.kind))}, {"from", e.from_version}, {"to", e.to_version},
                           {"payload", e.payload}});
        }
        return canonical_dump({{"events", arr}}) + "\n";
    }
    std::string out = "kind,from_version,to_version,payload\r\n";
    for (const auto& e : events) {
        out += std::string(to_string(e.kind)) + ',' + csv_field(e.from_version) + ',' + csv_field(e.to_version) + ',' +
               csv_field(canonical_dump(e.payload)) + "\r\n";
    }
    return out;
}

std::vector<TrendSeries> import_series_json(std::string_view text) {
    std::vector<TrendSeries> out;
    try {
        const auto j = Json::parse(text);
        for (const auto& s : j.at("series")) {
            TrendSeries t;
            t.metric = s.at("metric").get<std::string>();
            t.device = s.at("device").get<std::string>();
            t.ordering_fallback = s.value("ordering_fallback", false);
            for (const auto& p : s.at("points")) {
                TrendPoint tp;
                tp.version = p.at("version").get<std::string>();
                tp.date = date_from_json(p.value("date", Json(nullptr)));
                if (p.contains("value") && p["value"].is_number()) tp.value = p["value"].get<double>();
                t.points.push_back(std::move(tp));
            }
            out.push_back(std::move(t));
        }
    } catch (const Json::exception& e) {
        bad_report(std::string("series export is malformed: ") + e.what());
    }
    return out;
}

std::vector<ChangeEvent> import_events_json(std::string_view text) {
    std::vector<ChangeEvent> out;
    try {
        const auto j = Json::parse(text);
        for (const auto& e : j.at("events")) {
            const auto kind = parse_event_kind(e.at("kind").get<std::string>());
            if (!kind) bad_report("unknown event kind " + e.at("kind").get<std::string>());
            out.push_back({*kind, e.at("from").get<std::string>(), e.at("to").get<std::string>(), e.at("payload")});
        }
    } catch (const Json::exception& e) {
        bad_report(std::string("event export is malformed: ") + e.what());
    }
    return out;
}

}  // namespace vrfaudit::longitudinal
