#include "vrfaudit/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>

#include "CLI11.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/longitudinal.hpp"
#include "vrfaudit/pipeline.hpp"

namespace vrfaudit::cli {

namespace {

namespace fs = std::filesystem;
using longitudinal::Json;

void diagnostic(std::ostream& err, std::string_view level, std::string_view code, std::string_view message,
                Json extra = Json::object()) {
    Json j = {{"level", level}, {"code", code}, {"message", message}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    err << longitudinal::canonical_dump(j) << "\n";
}

std::vector<std::string> read_list_file(const fs::path& p) {
    std::vector<std::string> out;
    for (auto line : split(read_text_file(p), '\n')) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        out.emplace_back(line);
    }
    return out;
}

std::optional<fs::path> catalog_dir(const std::string& flag) {
    if (!flag.empty()) return fs::path(flag);
    if (const char* env = std::getenv("VRFAUDIT_CATALOG"); env && *env) return fs::path(env);
    return std::nullopt;
}

void emit(std::ostream& out, const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        out << text;
    } else {
        write_file_atomic(out_path, text);
    }
}

struct Options {
    std::string root;
    std::string device;
    std::string version;
    std::string date;
    std::string catalog;
    std::string mitigation_catalog;
    std::string lts_table;
    std::string buildid_map;
    std::string sensitive_types;
    std::string phantom_allowlist;
    std::vector<std::string> framework_apks;
    std::vector<std::string> baseline_cil;
    std::vector<std::string> metrics;
    std::vector<std::string> reports;
    std::string format;
    std::string out;
    unsigned jobs = 0;
    int verbosity = 0;
    double jump_threshold = 0.25;
};

int cmd_audit(const Options& o, std::ostream& out, std::ostream& err) {
    AuditConfig cfg;
    cfg.root = o.root;
    cfg.device = o.device;
    cfg.version = o.version;
    cfg.jobs = o.jobs ? o.jobs : default_jobs();
    if (!o.date.empty()) {
        cfg.release_date = Date::parse(o.date);
        if (!cfg.release_date) throw Error(ErrorCode::InvalidArgument, "--date must be YYYY-MM-DD or YYYY-MM");
    }
    if (!o.mitigation_catalog.empty()) cfg.mitigation_catalog = kernel::parse_catalog(read_text_file(o.mitigation_catalog));
    if (!o.lts_table.empty()) cfg.lts_table = kernel::parse_lts_table(read_text_file(o.lts_table));
    if (!o.buildid_map.empty()) cfg.buildid_map = ingest::BuildIdMap::load(o.buildid_map);
    for (const auto& f : o.framework_apks) {
        if (f.find('/') != std::string::npos) cfg.extra_framework_apks.emplace_back(f);
        else cfg.framework_apk_names.push_back(f);
    }
    for (const auto& f : o.baseline_cil) cfg.baseline_cil.emplace_back(f);
    if (!o.sensitive_types.empty()) cfg.exposure.sensitive_types = read_list_file(o.sensitive_types);
    if (!o.phantom_allowlist.empty()) {
        for (auto& name : read_list_file(o.phantom_allowlist)) cfg.phantom_allowlist.insert(std::move(name));
    }

    const auto outcome = run_audit_pipeline(cfg);
    if (const auto dir = catalog_dir(o.catalog)) {
        const auto path = longitudinal::store_report(outcome.report, *dir);
        if (o.verbosity > 0) diagnostic(err, "info", "Stored", path.string());
    }
    const std::string format = o.format.empty() ? "text-summary" : o.format;
    if (format == "json") {
        emit(out, outcome.report.serialize(), o.out);
    } else {
        if (!o.out.empty()) write_file_atomic(o.out, outcome.report.serialize());
        out << summary_text(outcome.report);
    }
    for (const auto& f : outcome.component_failures) diagnostic(err, "error", "ComponentFailure", f);
    return outcome.component_failures.empty() ? kExitOk : kExitComponentFailure;
}

std::string events_text(const std::vector<longitudinal::ChangeEvent>& events) {
    if (events.empty()) return "no changes\n";
    std::string s;
    for (const auto& e : events) {
        s += std::string(longitudinal::to_string(e.kind)) + " " + e.from_version + " -> " + e.to_version + " " +
             longitudinal::canonical_dump(e.payload) + (longitudinal::is_regression(e) ? "  [regression]" : "") + "\n";
    }
    return s;
}

int cmd_diff(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.reports.size() != 2) throw Error(ErrorCode::InvalidArgument, "diff takes exactly two report files");
    const auto a = longitudinal::AuditReport::load(o.reports[0]);
    const auto b = longitudinal::AuditReport::load(o.reports[1]);
    const auto events = longitudinal::compare_reports(a, b, {o.jump_threshold});
    const std::string format = o.format.empty() ? "text-summary" : o.format;
    if (format == "json") emit(out, longitudinal::export_events(events, longitudinal::ExportFormat::Json), o.out);
    else if (format == "csv") emit(out, longitudinal::export_events(events, longitudinal::ExportFormat::Csv), o.out);
    else emit(out, events_text(events), o.out);
    const auto regressions = std::count_if(events.begin(), events.end(), longitudinal::is_regression);
    if (regressions > 0) {
        diagnostic(err, "error", "Regression", std::to_string(regressions) + " regression event(s)",
                   {{"count", regressions}});
        return kExitComponentFailure;
    }
    return kExitOk;
}

fs::path require_catalog(const Options& o) {
    const auto dir = catalog_dir(o.catalog);
    if (!dir) throw Error(ErrorCode::InvalidArgument, "no catalog: pass --catalog or set VRFAUDIT_CATALOG");
    return *dir;
}

int cmd_trend(const Options& o, std::ostream& out, std::ostream& err) {
    std::vector<std::string> unknown;
    for (const auto& m : o.metrics) {
        if (!longitudinal::find_metric(m)) unknown.push_back(m);
    }
    if (!unknown.empty()) {
        diagnostic(err, "error", "UnknownMetric", "unknown metric id(s)",
                   {{"unknown", unknown}, {"valid", longitudinal::metric_ids()}});
        return kExitFatal;
    }
    const auto dir = require_catalog(o);
    const auto device = ingest::Device::parse(o.device).id();
    const auto history = longitudinal::load_history(dir, device);
    if (history.ordering_fallback) {
        diagnostic(err, "warning", "OrderingFallback", "some reports have no release date; ordered by version label");
    }
    const auto series = longitudinal::compute_trends(history, device, o.metrics);
    const auto format = o.format.empty() ? std::string("csv") : o.format;
    if (format == "text-summary") {
        std::string s;
        for (const auto& t : series) {
            s += t.metric + ":";
            for (const auto& p : t.points) s += " " + p.version + "=" + (p.value ? Json(*p.value).dump() : "-");
            s += "\n";
        }
        emit(out, s, o.out);
    } else {
        emit(out,
             longitudinal::export_series(
                 series, format == "json" ? longitudinal::ExportFormat::Json : longitudinal::ExportFormat::Csv),
             o.out);
    }
    return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out, std::ostream& err) {
    const auto dir = require_catalog(o);
    const auto device = ingest::Device::parse(o.device).id();
    const auto history = longitudinal::load_history(dir, device);
    if (history.ordering_fallback) {
        diagnostic(err, "warning", "OrderingFallback", "some reports have no release date; ordered by version label");
    }
    const auto events = longitudinal::detect_change_events(history.reports, {o.jump_threshold});
    const auto format = o.format.empty() ? std::string("json") : o.format;
    if (format == "text-summary") emit(out, events_text(events), o.out);
    else {
        emit(out,
             longitudinal::export_events(
                 events, format == "csv" ? longitudinal::ExportFormat::Csv : longitudinal::ExportFormat::Json),
             o.out);
    }
    return kExitOk;
}

int cmd_catalog_check(const Options& o, std::ostream& out, std::ostream& err) {
    int status = kExitOk;
    const auto check = [&](std::string_view what, const std::string& path, auto&& validate) {
        try {
            const auto detail = path.empty() ? validate(std::nullopt) : validate(std::optional<std::string>(path));
            out << what << " " << (path.empty() ? "(builtin)" : path) << ": ok, " << detail << "\n";
        } catch (const std::exception& e) {
            diagnostic(err, "error", "BadCatalog", e.what(), {{"file", path}, {"table", what}});
            status = kExitFatal;
        }
    };
    check("mitigation-catalog", o.mitigation_catalog, [](const std::optional<std::string>& p) {
        const auto c = p ? kernel::parse_catalog(read_text_file(*p)) : kernel::default_catalog();
        return std::to_string(c.size()) + " entries";
    });
    check("lts-table", o.lts_table, [](const std::optional<std::string>& p) {
        const auto t = p ? kernel::parse_lts_table(read_text_file(*p)) : kernel::default_lts_table();
        return std::to_string(t.size()) + " releases";
    });
    check("buildid-map", o.buildid_map, [](const std::optional<std::string>& p) {
        const auto m = p ? ingest::BuildIdMap::load(*p) : ingest::BuildIdMap::builtin();
        return std::to_string(m.size()) + " keys";
    });
    if (!o.sensitive_types.empty()) {
        check("sensitive-types", o.sensitive_types, [](const std::optional<std::string>& p) {
            const auto names = read_list_file(*p);
            for (const auto& n : names) {
                if (n.find_first_of(" \t()") != std::string::npos) {
                    throw Error(ErrorCode::BadCatalog, "not a type name: '" + n + "'");
                }
            }
            return std::to_string(names.size()) + " types";
        });
    }
    return status;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Security audit toolkit for Android-based VR headset firmware", "vrfaudit"};
    app.require_subcommand(1);
    Options o;
    const auto formats = CLI::IsMember({"json", "csv", "text-summary"});

    auto* audit = app.add_subcommand("audit", "Audit an extracted firmware tree");
    audit->add_option("root", o.root, "Firmware root (system/, vendor/, odm/, boot.img)")->required();
    audit->add_option("--device", o.device, "Device id (quest, quest2, quest3, quest_pro, pico_neo3, pico4, ...)")
        ->required();
    audit->add_option("--version", o.version, "Firmware version label")->required();
    audit->add_option("--date", o.date, "Release date, YYYY-MM-DD");
    audit->add_option("--mitigation-catalog", o.mitigation_catalog, "Override mitigation catalog file");
    audit->add_option("--lts-table", o.lts_table, "Override LTS release table file");
    audit->add_option("--buildid-map", o.buildid_map, "Override build-id to Android version map");
    audit->add_option("--framework-apks", o.framework_apks,
                      "Extra framework APK file names, or paths (containing '/') to framework APKs")
        ->delimiter(',');
    audit->add_option("--baseline-cil", o.baseline_cil, "Baseline CIL files for neverallow comparison")->delimiter(',');
    audit->add_option("--sensitive-types", o.sensitive_types, "File listing sensitive property types");
    audit->add_option("--phantom-allowlist", o.phantom_allowlist, "File listing permission names never reported phantom");

    auto* diff = app.add_subcommand("diff", "Compare two stored reports");
    diff->add_option("reports", o.reports, "Older and newer report")->required()->expected(2);
    diff->add_option("--jump-threshold", o.jump_threshold, "Relative change counted as a jump");

    auto* trend = app.add_subcommand("trend", "Trend series for a device from the catalog");
    trend->add_option("--device", o.device, "Device id")->required();
    trend->add_option("--metric", o.metrics, "Metric id (repeatable)")->required()->delimiter(',');

    auto* exp = app.add_subcommand("export", "Change events for a device from the catalog");
    exp->add_option("--device", o.device, "Device id")->required();
    exp->add_option("--jump-threshold", o.jump_threshold, "Relative change counted as a jump");

    auto* check = app.add_subcommand("catalog-check", "Validate override data files");
    check->add_option("--mitigation-catalog", o.mitigation_catalog, "Mitigation catalog file");
    check->add_option("--lts-table", o.lts_table, "LTS release table file");
    check->add_option("--buildid-map", o.buildid_map, "Build-id map file");
    check->add_option("--sensitive-types", o.sensitive_types, "Sensitive property type list");

    for (auto* sub : {audit, diff, trend, exp}) {
        sub->add_option("--format", o.format, "json, csv or text-summary")->check(formats);
        sub->add_option("--out", o.out, "Write output to this file");
    }
    for (auto* sub : {audit, trend, exp}) {
        sub->add_option("--catalog", o.catalog, "Report catalog directory (default $VRFAUDIT_CATALOG)");
    }
    audit->add_option("--jobs", o.jobs, "Worker threads (default: logical CPUs)");
    app.add_flag("-v,--verbose", o.verbosity, "More diagnostics");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        diagnostic(err, "error", "Usage", e.what());
        return kExitFatal;
    }

    try {
        if (audit->parsed()) return cmd_audit(o, out, err);
        if (diff->parsed()) return cmd_diff(o, out, err);
        if (trend->parsed()) return cmd_trend(o, out, err);
        if (exp->parsed()) return cmd_export(o, out, err);
        if (check->parsed()) return cmd_catalog_check(o, out, err);
    } catch (const Error& e) {
        diagnostic(err, "error", to_string(e.code()), e.message());
        return kExitFatal;
    } catch (const std::exception& e) {
        diagnostic(err, "error", "Internal", e.what());
        return kExitFatal;
    }
    return kExitFatal;
}

}  // namespace vrfaudit::cli
