#include "vrfaudit/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <cstdio>
#include <sstream>

#include "vrfaudit/apk_audit.hpp"
#include "vrfaudit/elf_audit.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/permission_analysis.hpp"
#include "vrfaudit/zip.hpp"

namespace vrfaudit {

namespace {

namespace fs = std::filesystem;
using longitudinal::Json;

std::string error_text(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& ex) {
        return ex.what();
    } catch (...) {
        return "unknown error";
    }
}

Json evidence_json(const elf::Evidence& e) { return {{"items", e.items}, {"note", e.note}}; }

Json check_json(const elf::CheckResult& c) { return {{"present", c.present}, {"evidence", evidence_json(c.evidence)}}; }

Json verdict_json(const elf::ElfHardeningVerdict& v) {
    Json j = {{"path", v.path}, {"sha256", v.sha256}, {"parse_status", std::string(elf::to_string(v.parse_status))}};
    if (v.parse_status == elf::ParseStatus::Failed) {
        j["error"] = v.error;
        return j;
    }
    j["canary"] = check_json(v.canary);
    j["cfi"] = check_json(v.cfi);
    j["fortify"] = check_json(v.fortify);
    j["nx"] = check_json(v.nx);
    j["relro"] = {{"status", std::string(elf::to_string(v.relro.status))}, {"evidence", evidence_json(v.relro.evidence)}};
    return j;
}

Json summary_json(const elf::HardeningSummary& s) {
    return {{"audited", s.audited},         {"failed", s.failed},     {"unique_contents", s.unique_contents},
            {"no_canary", s.no_canary},     {"no_cfi", s.no_cfi},     {"no_fortify", s.no_fortify},
            {"no_nx", s.no_nx},             {"no_relro", s.no_relro}, {"partial_relro", s.partial_relro}};
}

void sort_verdicts(std::vector<elf::ElfHardeningVerdict>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
}

struct ApkResult {
    std::string path;
    std::optional<apk::ManifestReport> report;
    std::string error;
    std::vector<elf::ElfHardeningVerdict> native_libs;
};

ApkResult audit_apk(const fs::path& file, const std::string& display, bool with_libs) {
    ApkResult r;
    r.path = display;
    try {
        const auto archive = apk::ApkArchive::open(file);
        r.report = apk::extract_manifest_report(apk::parse_axml(archive.manifest_bytes()));
        if (with_libs) {
            for (const auto& name : archive.native_library_entries()) {
                const auto* entry = archive.zip().find(name);
                Bytes bytes;
                try {
                    bytes = archive.zip().read(*entry);
                } catch (const std::exception& e) {
                    elf::ElfHardeningVerdict v;
                    v.path = display + "!" + name;
                    v.error = e.what();
                    r.native_libs.push_back(std::move(v));
                    continue;
                }
                if (!ingest::has_elf_magic(bytes)) continue;
                r.native_libs.push_back(elf::audit_elf_bytes(display + "!" + name, std::move(bytes)));
            }
        }
    } catch (const std::exception& e) {
        r.report.reset();
        r.error = e.what();
    }
    return r;
}

std::vector<ApkResult> audit_apks(const ingest::FirmwareRecord& rec, const std::vector<fs::path>& files, bool with_libs,
                                  unsigned jobs) {
    std::vector<ApkResult> out(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        // audit_apk catches everything it can; this guards allocation failures.
        try {
            out[i] = audit_apk(files[i], rec.display_path(files[i]), with_libs);
        } catch (const std::exception& e) {
            out[i].path = rec.display_path(files[i]);
            out[i].error = e.what();
        }
    });
    return out;
}

Json manifest_json(const std::string& path, const apk::ManifestReport& m) {
    Json declared = Json::array();
    for (const auto& d : m.declared_permissions) {
        declared.push_back({{"name", d.name}, {"raw", d.protection_level_raw}, {"bucket", std::string(apk::to_string(d.bucket))}});
    }
    Json j = {{"path", path},
              {"package", m.package_name},
              {"category", std::string(apk::to_string(m.category))},
              {"has_launcher_activity", m.has_launcher_activity},
              {"flags",
               {{"allow_backup", std::string(apk::to_string(m.flags.allow_backup))},
                {"debuggable", std::string(apk::to_string(m.flags.debuggable))},
                {"uses_cleartext_traffic", std::string(apk::to_string(m.flags.uses_cleartext_traffic))}}},
              {"used_permissions", m.used_permissions},
              {"declared_permissions", declared}};
    j["digest"] = sha256_hex(std::string_view(longitudinal::canonical_dump(j)));
    return j;
}

Json failures_json(const std::vector<ApkResult>& results) {
    Json arr = Json::array();
    for (const auto& r : results) {
        if (!r.report) arr.push_back({{"path", r.path}, {"error", r.error}});
    }
    return arr;
}

Json kernel_section(const ingest::FirmwareRecord& rec, const AuditConfig& cfg, std::vector<std::string>& failures) {
    Json k = {{"status", "ABSENT"}, {"version", nullptr}, {"series", nullptr}, {"mitigations", Json::array()},
              {"mitigations_enabled", nullptr}, {"mitigations_absent", nullptr}, {"lts", nullptr},
              {"errors", Json::array()}};
    if (!rec.boot_image) {
        failures.push_back("kernel: boot image absent");
        return k;
    }
    Bytes kernel_bytes;
    try {
        const auto boot = kernel::parse_boot_image(read_file(*rec.boot_image));
        k["boot_header_version"] = boot.header_version;
        kernel_bytes = boot.kernel;
    } catch (const std::exception& e) {
        k["status"] = "FAILED";
        k["errors"].push_back(e.what());
        failures.push_back(std::string("kernel: ") + e.what());
        return k;
    }

    std::optional<kernel::KernelVersion> version;
    try {
        version = kernel::extract_kernel_version(kernel_bytes);
        k["version"] = version->to_string();
        k["series"] = version->series().to_string();
    } catch (const std::exception& e) {
        k["errors"].push_back(e.what());
        failures.push_back(std::string("kernel.version: ") + e.what());
    }
    if (version) {
        const auto lag = kernel::lts_lag(*version, rec.release_date,
                                         cfg.lts_table ? *cfg.lts_table : kernel::default_lts_table());
        k["lts"] = {{"determinate", lag.determinate},
                    {"latest_lts", lag.latest_lts ? Json(lag.latest_lts->to_string()) : Json(nullptr)},
                    {"lagging", lag.lagging},
                    {"series_behind", lag.determinate ? Json(lag.series_behind) : Json(nullptr)}};
    }

    try {
        const auto config = kernel::extract_ikconfig(kernel_bytes);
        const int sdk = rec.android_version ? rec.android_version->sdk : 0;
        const auto verdicts = kernel::evaluate_mitigations(
            config, sdk, cfg.mitigation_catalog ? *cfg.mitigation_catalog : kernel::default_catalog());
        std::size_t enabled = 0;
        for (const auto& v : verdicts) {
            enabled += v.status == kernel::MitigationStatus::Enabled;
            k["mitigations"].push_back({{"id", v.entry_id},
                                        {"status", std::string(kernel::to_string(v.status))},
                                        {"requirement", std::string(kernel::to_string(v.requirement))},
                                        {"satisfied_clause", v.satisfied_clause},
                                        {"via_module", v.via_module},
                                        {"predates_option", v.predates_option}});
        }
        k["mitigations_enabled"] = enabled;
        k["mitigations_absent"] = verdicts.size() - enabled;
        k["config_sha256"] = sha256_hex(std::string_view(config.raw_text()));
        k["status"] = "OK";
    } catch (const std::exception& e) {
        k["status"] = "FAILED";
        k["errors"].push_back(e.what());
        failures.push_back(std::string("kernel.config: ") + e.what());
    }
    return k;
}

}  // namespace

AuditOutcome run_audit_pipeline(const AuditConfig& cfg) {
    const unsigned jobs = std::max(1u, cfg.jobs);
    ingest::LoadOptions load;
    load.release_date = cfg.release_date;
    if (cfg.buildid_map) load.buildid_map = &*cfg.buildid_map;
    const auto rec = ingest::load_firmware(cfg.root, ingest::Device::parse(cfg.device), cfg.version, load);

    // The baseline is operator input: a bad one aborts before any work.
    std::optional<sepolicy::CilRuleSet> baseline;
    if (!cfg.baseline_cil.empty()) {
        sepolicy::CilRuleSet b;
        for (const auto& f : cfg.baseline_cil) b.merge(sepolicy::parse_cil_text(read_text_file(f), f.filename().string()));
        baseline = std::move(b);
    }

    ingest::EnumerateOptions eopts;
    eopts.framework_apk_names = cfg.framework_apk_names;
    eopts.extra_framework_apks = cfg.extra_framework_apks;
    const auto targets = ingest::enumerate_targets(rec, eopts);

    std::vector<std::string> failures;
    Json body;
    body["schema_version"] = longitudinal::kSchemaVersion;
    body["toolkit_version"] = std::string(longitudinal::kToolkitVersion);

    Json partitions = Json::array();
    for (const auto& [name, path] : rec.partition_roots) partitions.push_back(name);
    body["firmware"] = {
        {"device", rec.device.id()},
        {"version", rec.version_label},
        {"release_date", rec.release_date ? Json(rec.release_date->to_string()) : Json(nullptr)},
        {"android", rec.android_version ? Json{{"sdk", rec.android_version->sdk}, {"release", rec.android_version->release}}
                                        : Json(nullptr)},
        {"partitions", partitions},
        {"boot_image", rec.boot_image ? Json(rec.display_path(*rec.boot_image)) : Json(nullptr)},
        {"diagnostics", rec.diagnostics},
    };
    if (!rec.android_version) failures.push_back("firmware: Android version unresolved");

    body["kernel"] = kernel_section(rec, cfg, failures);

    // Firmware-tree binaries, including lib*/ members of packed apexes.
    std::vector<elf::ElfTarget> elf_targets;
    for (const auto& f : targets.elf_candidates) elf_targets.push_back({rec.display_path(f), f});
    auto binaries = elf::audit_binaries(elf_targets, jobs);
    std::vector<elf::ElfHardeningVerdict> archived(targets.archived_elf_candidates.size());
    parallel_for(archived.size(), jobs, [&](std::size_t i) {
        const auto& m = targets.archived_elf_candidates[i];
        const auto name = rec.display_path(m.archive) + "!" + m.entry;
        try {
            const auto zip = ZipArchive::open(m.archive);
            const auto* entry = zip.find(m.entry);
            if (!entry) throw Error(ErrorCode::IoError, "entry vanished: " + m.entry);
            archived[i] = elf::audit_elf_bytes(name, zip.read(*entry));
        } catch (const std::exception& e) {
            archived[i].path = name;
            archived[i].error = e.what();
        }
    });
    binaries.verdicts.insert(binaries.verdicts.end(), archived.begin(), archived.end());
    sort_verdicts(binaries.verdicts);
    binaries.summary = elf::summarize(binaries.verdicts);

    const auto app_results = audit_apks(rec, targets.apk_candidates, true, jobs);
    const auto framework_results = audit_apks(rec, targets.framework_apk_candidates, false, jobs);

    std::vector<elf::ElfHardeningVerdict> apk_libs;
    for (const auto& r : app_results) apk_libs.insert(apk_libs.end(), r.native_libs.begin(), r.native_libs.end());
    sort_verdicts(apk_libs);

    Json verdicts = Json::array();
    for (const auto& v : binaries.verdicts) verdicts.push_back(verdict_json(v));
    Json apk_verdicts = Json::array();
    for (const auto& v : apk_libs) apk_verdicts.push_back(verdict_json(v));
    body["binaries"] = {{"summary", summary_json(binaries.summary)},
                        {"verdicts", verdicts},
                        {"apk_embedded_summary", summary_json(elf::summarize(apk_libs))},
                        {"apk_embedded_verdicts", apk_verdicts}};

    // Apps.
    std::vector<apk::ManifestReport> app_reports;
    std::vector<permissions::SourcedReport> app_sources, framework_sources;
    Json app_entries = Json::array();
    std::map<std::string, std::size_t> categories = {{"USER_LAUNCHABLE", 0}, {"ANDROID_SYSTEM", 0}, {"VENDOR_SPECIFIC", 0}};
    for (const auto& r : app_results) {
        if (!r.report) continue;
        app_reports.push_back(*r.report);
        app_entries.push_back(manifest_json(r.path, *r.report));
        ++categories[std::string(apk::to_string(r.report->category))];
    }
    for (std::size_t i = 0, k = 0; i < app_results.size(); ++i) {
        if (app_results[i].report) app_sources.push_back({app_results[i].path, &app_reports[k++]});
    }
    Json framework_entries = Json::array();
    for (const auto& r : framework_results) {
        if (!r.report) continue;
        framework_sources.push_back({"framework:" + r.path, &*r.report});
        framework_entries.push_back({{"path", r.path}, {"package", r.report->package_name},
                                     {"declared_count", r.report->declared_permissions.size()}});
    }
    const auto flags = apk::summarize_flags(app_reports);
    Json apps = {{"audited", app_reports.size()},
                 {"failed_count", app_results.size() - app_reports.size()},
                 {"failed", failures_json(app_results)},
                 {"flag_counts",
                  {{"uses_cleartext_traffic", flags.uses_cleartext_traffic},
                   {"allow_backup", flags.allow_backup},
                   {"debuggable", flags.debuggable}}},
                 {"categories", categories},
                 {"reports", app_entries},
                 {"framework", framework_entries},
                 {"framework_failed", failures_json(framework_results)},
                 {"bucket_means", nullptr}};

    const auto ledger = permissions::build_ledger(framework_sources, app_sources);
    if (!app_reports.empty()) {
        std::vector<const apk::ManifestReport*> ptrs;
        for (const auto& r : app_reports) ptrs.push_back(&r);
        const auto means = permissions::per_app_bucket_means(ptrs, ledger);
        Json m = {{"app_count", means.app_count},
                  {"others_unresolved", means.others_unresolved},
                  {"others_unmapped_level", means.others_unmapped_level}};
        for (std::size_t i = 0; i < permissions::kBucketOrder.size(); ++i) {
            m[std::string(apk::to_string(permissions::kBucketOrder[i]))] = means.means[i];
        }
        apps["bucket_means"] = m;
    }
    body["apps"] = apps;

    const auto inconsistencies = permissions::detect_inconsistencies(ledger, cfg.phantom_allowlist);
    Json declared = Json::object();
    for (const auto& [name, d] : ledger.declared) declared[name] = d.protection_level_raw;
    Json conflicts = Json::array();
    for (const auto& c : ledger.conflicts) {
        conflicts.push_back({{"permission", c.permission}, {"kept_source", c.kept_source}, {"kept_raw", c.kept_raw},
                             {"dropped_source", c.dropped_source}, {"dropped_raw", c.dropped_raw}});
    }
    Json ledger_json = Json::object();
    for (const auto& [name, d] : ledger.declared) ledger_json[name] = {{"raw", d.protection_level_raw}, {"source", d.source}};
    body["permissions"] = {{"declared", declared},
                           {"declared_count", ledger.declared.size()},
                           {"used_count", ledger.used_by.size()},
                           {"residual", inconsistencies.residual},
                           {"residual_count", inconsistencies.residual.size()},
                           {"phantom", inconsistencies.phantom},
                           {"phantom_count", inconsistencies.phantom.size()},
                           {"conflicts", conflicts},
                           {"conflict_count", ledger.conflicts.size()},
                           {"ledger_digest", sha256_hex(std::string_view(longitudinal::canonical_dump(ledger_json)))}};

    // SEPolicy.
    Json sp = {{"status", "ABSENT"}, {"allow_count", nullptr}, {"neverallow_count", nullptr}, {"exposure_count", nullptr}};
    if (!targets.cil_candidates.empty()) {
        std::vector<sepolicy::CilRuleSet> parts(targets.cil_candidates.size());
        std::vector<std::exception_ptr> errors(parts.size());
        parallel_for(parts.size(), jobs, [&](std::size_t i) {
            try {
                const auto& f = targets.cil_candidates[i];
                parts[i] = sepolicy::parse_cil_text(read_text_file(f), rec.display_path(f));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
        Json errs = Json::array();
        for (const auto& e : errors) {
            if (e) errs.push_back(error_text(e));
        }
        if (!errs.empty()) {
            sp["status"] = "FAILED";
            sp["errors"] = errs;
            failures.push_back("sepolicy: " + errs[0].get<std::string>());
        } else {
            sepolicy::CilRuleSet set;
            for (auto& p : parts) set.merge(std::move(p));
            const auto counts = sepolicy::rule_counts(set);
            Json nevers = Json::array();
            for (const auto& [key, n] : sepolicy::key_multiset(set, sepolicy::RuleKind::Neverallow)) {
                for (std::size_t i = 0; i < n; ++i) nevers.push_back(key);
            }
            Json exposure = Json::array();
            for (const auto& f : sepolicy::untrusted_domain_exposure(set, cfg.exposure)) {
                exposure.push_back({{"rule", f.rule_key}, {"source", f.source}, {"target", f.target},
                                    {"reason", f.reason}, {"origin", f.origin_file + ":" + std::to_string(f.origin_line)}});
            }
            Json files = Json::array();
            for (const auto& f : targets.cil_candidates) files.push_back(rec.display_path(f));
            sp = {{"status", "PARSED"},
                  {"files", files},
                  {"allow_count", counts.allow},
                  {"neverallow_count", counts.neverallow},
                  {"conditional_rules", std::count_if(set.rules.begin(), set.rules.end(),
                                                      [](const sepolicy::CilRule& r) { return r.conditional; })},
                  {"diagnostics",
                   {{"skipped_forms", set.diagnostics.skipped_forms},
                    {"skipped_total", set.diagnostics.skipped_total()},
                    {"malformed_rules", set.diagnostics.malformed_rules}}},
                  {"neverallow_rules", nevers},
                  {"exposure", exposure},
                  {"exposure_count", exposure.size()}};
            if (baseline) {
                const auto d = sepolicy::diff_rulesets(*baseline, set);
                const auto keys = [](const sepolicy::KeyMultiset& m) {
                    Json a = Json::array();
                    for (const auto& [k, n] : m) {
                        for (std::size_t i = 0; i < n; ++i) a.push_back(k);
                    }
                    return a;
                };
                sp["baseline_diff"] = {{"added_allow", keys(d.added_allow)},
                                       {"removed_allow", keys(d.removed_allow)},
                                       {"added_neverallow", keys(d.added_neverallow)},
                                       {"removed_neverallow", keys(d.removed_neverallow)}};
            }
        }
    } else if (!targets.binary_policy_candidates.empty()) {
        sp["status"] = std::string(sepolicy::kSkippedBinaryPolicy);
        Json files = Json::array();
        for (const auto& f : targets.binary_policy_candidates) files.push_back(rec.display_path(f));
        sp["files"] = files;
    } else {
        failures.push_back("sepolicy: no CIL or binary policy found");
    }
    body["sepolicy"] = sp;

    body["component_failures"] = failures;
    return {longitudinal::AuditReport(std::move(body)), failures};
}

std::string summary_text(const longitudinal::AuditReport& report) {
    const auto& b = report.body();
    std::ostringstream out;
    const auto num = [](const Json& j) { return j.is_null() ? std::string("-") : j.dump(); };
    out << "firmware " << b["firmware"]["device"].get<std::string>() << " " << b["firmware"]["version"].get<std::string>();
    if (b["firmware"]["release_date"].is_string()) out << " (" << b["firmware"]["release_date"].get<std::string>() << ")";
    if (b["firmware"]["android"].is_object()) {
        out << " android " << b["firmware"]["android"]["release"].get<std::string>() << " / sdk "
            << b["firmware"]["android"]["sdk"].get<int>();
    }
    out << "\n";
    const auto& k = b["kernel"];
    out << "kernel: " << k["status"].get<std::string>();
    if (k["version"].is_string()) out << " " << k["version"].get<std::string>();
    out << ", mitigations enabled " << num(k["mitigations_enabled"]) << ", absent " << num(k["mitigations_absent"]);
    if (k["lts"].is_object() && k["lts"]["determinate"].get<bool>()) {
        out << ", latest LTS " << k["lts"]["latest_lts"].get<std::string>() << " ("
            << k["lts"]["series_behind"].get<int>() << " behind)";
    }
    out << "\n";
    for (const auto* section : {"summary", "apk_embedded_summary"}) {
        const auto& s = b["binaries"][section];
        out << (std::string_view(section) == "summary" ? "binaries" : "apk libraries") << ": " << s["audited"]
            << " audited, " << s["failed"] << " failed; without canary " << s["no_canary"] << ", cfi " << s["no_cfi"]
            << ", fortify " << s["no_fortify"] << ", nx " << s["no_nx"] << ", relro " << s["no_relro"]
            << " (partial " << s["partial_relro"] << ")\n";
    }
    const auto& a = b["apps"];
    out << "apps: " << a["audited"] << " audited, " << a["failed_count"] << " failed; cleartext "
        << a["flag_counts"]["uses_cleartext_traffic"] << ", backup " << a["flag_counts"]["allow_backup"]
        << ", debuggable " << a["flag_counts"]["debuggable"] << "\n";
    if (a["bucket_means"].is_object()) {
        const auto& m = a["bucket_means"];
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "permission means: dangerous %.2f, normal %.2f, signature %.2f, signatureOrSystem %.2f, others %.2f\n",
                      m["DANGEROUS"].get<double>(), m["NORMAL"].get<double>(), m["SIGNATURE"].get<double>(),
                      m["SIGNATURE_OR_SYSTEM"].get<double>(), m["OTHERS"].get<double>());
        out << buf;
    }
    const auto& p = b["permissions"];
    out << "permissions: " << p["declared_count"] << " declared, " << p["residual_count"] << " residual, "
        << p["phantom_count"] << " phantom\n";
    const auto& s = b["sepolicy"];
    out << "sepolicy: " << s["status"].get<std::string>();
    if (s["status"] == "PARSED") {
        out << ", allow " << s["allow_count"] << ", neverallow " << s["neverallow_count"] << ", exposure findings "
            << s["exposure_count"];
        if (s.contains("baseline_diff")) out << ", neverallow removed vs baseline " << s["baseline_diff"]["removed_neverallow"].size();
    }
    out << "\n";
    for (const auto& f : b["component_failures"]) out << "failure: " << f.get<std::string>() << "\n";
    return out.str();
}

}  // namespace vrfaudit
