// Acceptance runner: one PASS/FAIL/SKIP line per criterion, exit status 0
// only when nothing failed. Criterion 8 needs real firmware and reads it
// from $VRFAUDIT_CORPUS_ROOT (one extracted tree per device id).
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "support.hpp"
#include "vrfaudit/apk_audit.hpp"
#include "vrfaudit/compress.hpp"
#include "vrfaudit/elf_audit.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/kernel_audit.hpp"
#include "vrfaudit/permission_analysis.hpp"
#include "vrfaudit/pipeline.hpp"
#include "vrfaudit/sepolicy_audit.hpp"

using namespace vrfaudit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Result {
    Outcome outcome = Outcome::Pass;
    std::string detail;
};

// Collects the first few failed expectations of a criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 5) notes_.push_back(what);
    }
    Result result(std::string pass_detail) const {
        if (failures_ == 0) return {Outcome::Pass, std::move(pass_detail)};
        std::string d = std::to_string(failures_) + " failure(s):";
        for (const auto& n : notes_) d += " [" + n + "]";
        return {Outcome::Fail, d};
    }

private:
    std::size_t failures_ = 0;
    std::vector<std::string> notes_;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << std::fixed << v;
    return s.str();
}

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

// 1 ---------------------------------------------------------------------

std::string random_config_text(std::mt19937& rng) {
    static const char* words[] = {"ARM64", "SLAB", "DEBUG", "NET", "CFI", "KASAN", "BPF", "USB", "VMAP", "PAN"};
    std::uniform_int_distribution<int> lines(5, 400), word(0, 9), kind(0, 9), num(0, 99999);
    std::string text = "#\n# Automatically generated file; DO NOT EDIT.\n#\n";
    const int n = lines(rng);
    for (int i = 0; i < n; ++i) {
        const std::string name = std::string("CONFIG_") + words[word(rng)] + "_" + words[word(rng)] + "_" +
                                 std::to_string(num(rng));
        switch (kind(rng)) {
            case 0: text += "# " + name + " is not set\n"; break;
            case 1: text += name + "=m\n"; break;
            case 2: text += name + "=\"str " + std::to_string(num(rng)) + "\"\n"; break;
            case 3: text += name + "=0x" + std::to_string(num(rng)) + "\n"; break;
            case 4: text += "# marker IKCFG_ST in a comment, and IKCFG_ED too\n"; break;
            case 5: text += "\n"; break;
            default: text += name + "=y\n";
        }
    }
    return text;
}

Result criterion1() {
    const auto t0 = Clock::now();
    std::mt19937 rng(1001);
    std::uniform_int_distribution<int> level_pick(0, 2), noise_len(0, 4096), byte(0, 255), coin(0, 1);
    Check c;
    for (int i = 0; i < 50; ++i) {
        const auto text = random_config_text(rng);
        const int level = std::array{0, 6, 9}[static_cast<std::size_t>(level_pick(rng))];
        Bytes blob;
        for (int k = noise_len(rng); k > 0; --k) blob.push_back(static_cast<std::uint8_t>(byte(rng)));
        if (coin(rng)) {
            const auto decoy = to_bytes("IKCFG_ST not a gzip stream IKCFG_ED");
            blob.insert(blob.end(), decoy.begin(), decoy.end());
        }
        const auto st = to_bytes("IKCFG_ST");
        blob.insert(blob.end(), st.begin(), st.end());
        const auto gz = compress::gzip(to_bytes(text), level);
        blob.insert(blob.end(), gz.begin(), gz.end());
        const auto ed = to_bytes("IKCFG_ED");
        blob.insert(blob.end(), ed.begin(), ed.end());
        for (int k = noise_len(rng); k > 0; --k) blob.push_back(static_cast<std::uint8_t>(byte(rng)));
        // Every other image is itself gzip-compressed, as zImage payloads are.
        if (i % 2 == 1) {
            const auto outer = compress::gzip(blob);
            blob = to_bytes("kernel head ");
            blob.insert(blob.end(), outer.begin(), outer.end());
        }
        try {
            c.expect(kernel::extract_ikconfig_text(blob) == text, "text " + std::to_string(i) + " differs");
        } catch (const std::exception& e) {
            c.expect(false, "text " + std::to_string(i) + ": " + e.what());
        }
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 5.0, "took " + fmt(secs) + " s");
    return c.result("50/50 texts exact in " + fmt(secs) + " s");
}

// 2 ---------------------------------------------------------------------

struct TableEntry {
    const char* id;
    std::vector<std::vector<std::string>> clauses;  // OR of ANDs
};

// The kernel mitigation table, written out independently of data/.
const std::vector<TableEntry>& mitigation_table() {
    static const std::vector<TableEntry> t = {
        {"stack_protector", {{"CONFIG_HAVE_STACKPROTECTOR"}, {"CONFIG_STACKPROTECTOR"}, {"CONFIG_STACKPROTECTOR_STRONG"}}},
        {"kaslr", {{"CONFIG_RANDOMIZE_BASE"}}},
        {"freelist_random", {{"CONFIG_SLAB_FREELIST_RANDOM"}}},
        {"hardened_usercopy", {{"CONFIG_HARDENED_USERCOPY"}}},
        {"fortify_source", {{"CONFIG_FORTIFY_SOURCE"}, {"CONFIG_ARCH_HAS_FORTIFY_SOURCE"}}},
        {"strict_kernel_rwx", {{"CONFIG_STRICT_KERNEL_RWX"}, {"CONFIG_ARCH_HAS_STRICT_KERNEL_RWX"}, {"CONFIG_DEBUG_RODATA"}}},
        {"pan", {{"CONFIG_CPU_SW_DOMAIN_PAN"}, {"CONFIG_ARM64_SW_TTBR0_PAN"}}},
        {"kpti", {{"CONFIG_UNMAP_KERNEL_AT_EL0"}}},
        {"spectre_bhb", {{"CONFIG_MITIGATE_SPECTRE_BRANCH_HISTORY"}}},
        {"kernel_cfi", {{"CONFIG_CFI_CLANG", "CONFIG_SHADOW_CALL_STACK"}}},
        {"init_stack", {{"CONFIG_INIT_STACK_ALL"}, {"CONFIG_INIT_STACK_ALL_ZERO"}}},
        {"init_on_alloc", {{"CONFIG_INIT_ON_ALLOC_DEFAULT_ON"}}},
        {"debug_list", {{"CONFIG_DEBUG_LIST"}}},
        {"bpf_jit_always_on", {{"CONFIG_BPF_JIT_ALWAYS_ON"}}},
        {"slab_freelist_hardened", {{"CONFIG_SLAB_FREELIST_HARDENED"}}},
        {"vmap_stack", {{"CONFIG_VMAP_STACK"}}},
        {"arm64_uao", {{"CONFIG_ARM64_UAO"}}},
    };
    return t;
}

std::string config_with(const std::set<std::string>& on, const std::set<std::string>& off = {}) {
    std::string s;
    for (const auto& o : on) s += o + "=y\n";
    for (const auto& o : off) s += "# " + o + " is not set\n";
    return s;
}

std::map<std::string, kernel::MitigationStatus> verdicts_for(const std::string& cfg_text, int sdk = 31) {
    std::map<std::string, kernel::MitigationStatus> m;
    for (const auto& v : kernel::evaluate_mitigations(kernel::KernelConfig::parse(cfg_text), sdk)) {
        m[v.entry_id] = v.status;
    }
    return m;
}

Result criterion2() {
    using kernel::MitigationStatus;
    Check c;
    const auto& table = mitigation_table();
    const auto& catalog = kernel::default_catalog();
    c.expect(table.size() == 17 && catalog.size() == 17, "catalog size " + std::to_string(catalog.size()));
    for (std::size_t i = 0; i < std::min(table.size(), catalog.size()); ++i) {
        c.expect(catalog[i].id == table[i].id && catalog[i].clauses == table[i].clauses,
                 std::string("catalog entry differs: ") + table[i].id);
    }

    std::set<std::string> every_option;
    for (const auto& e : table) {
        for (const auto& cl : e.clauses) every_option.insert(cl.begin(), cl.end());
    }
    for (const auto& e : table) {
        c.expect(verdicts_for("")[e.id] == MitigationStatus::Absent, std::string(e.id) + " enabled on empty config");
        for (const auto& clause : e.clauses) {
            const std::set<std::string> on(clause.begin(), clause.end());
            c.expect(verdicts_for(config_with(on))[e.id] == MitigationStatus::Enabled,
                     std::string(e.id) + " not enabled by its own clause");
            if (clause.size() > 1) {
                for (const auto& drop : clause) {
                    auto partial = on;
                    partial.erase(drop);
                    c.expect(verdicts_for(config_with(partial, {drop}))[e.id] == MitigationStatus::Absent,
                             std::string(e.id) + " enabled without " + drop);
                }
            }
        }
    }

    // Everything on except heap initialisation.
    auto quest3 = every_option;
    quest3.erase("CONFIG_INIT_ON_ALLOC_DEFAULT_ON");
    std::vector<std::string> absent;
    for (const auto& [id, st] : verdicts_for(config_with(quest3, {"CONFIG_INIT_ON_ALLOC_DEFAULT_ON"}))) {
        if (st == MitigationStatus::Absent) absent.push_back(id);
    }
    c.expect(absent == std::vector<std::string>{"init_on_alloc"},
             "scenario absent set has " + std::to_string(absent.size()) + " entries");

    std::mt19937 rng(2002);
    const std::vector<std::string> pool(every_option.begin(), every_option.end());
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), extra_count(1, 6);
    std::uniform_int_distribution<int> base_count(0, static_cast<int>(pool.size())), sdk_pick(24, 34), noise(0, 99999);
    const int cases = 1200;
    for (int i = 0; i < cases; ++i) {
        std::set<std::string> base;
        for (int k = base_count(rng); k > 0; --k) base.insert(pool[pick(rng)]);
        auto more = base;
        for (auto k = extra_count(rng); k > 0; --k) {
            more.insert(pool[pick(rng)]);
            more.insert("CONFIG_UNRELATED_" + std::to_string(noise(rng)));
        }
        const int sdk = sdk_pick(rng);
        const auto before = verdicts_for(config_with(base), sdk);
        const auto after = verdicts_for(config_with(more), sdk);
        for (const auto& [id, st] : before) {
            c.expect(!(st == MitigationStatus::Enabled && after.at(id) == MitigationStatus::Absent),
                     id + " regressed in case " + std::to_string(i));
        }
    }
    return c.result("17 entries, conjunct removal, single-ABSENT scenario, " + std::to_string(cases) +
                    " monotonicity cases");
}

// 3 ---------------------------------------------------------------------

json load_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

Result criterion3() {
    Check c;
    const auto expected = load_json(testkit::fixture("elf/expected.json"));
    std::size_t agree = 0, total = 0;
    bool has_static = false, has_stripped = false;
    std::map<std::string, elf::ElfHardeningVerdict> verdicts;
    for (const auto& [name, want] : expected.items()) {
        has_static = has_static || name.find("static") != std::string::npos;
        has_stripped = has_stripped || name.find("stripped") != std::string::npos;
        const auto v = elf::audit_elf_bytes(name, read_file(testkit::fixture("elf/" + name)));
        const bool ok = v.parse_status != elf::ParseStatus::Failed && v.sha256 == want["sha256"] &&
                        v.canary.present == want["canary"].get<bool>() && v.cfi.present == want["cfi"].get<bool>() &&
                        v.fortify.present == want["fortify"].get<bool>() && v.nx.present == want["nx"].get<bool>() &&
                        std::string(elf::to_string(v.relro.status)) == want["relro"].get<std::string>();
        ++total;
        if (ok) ++agree;
        c.expect(ok, name + " disagrees with oracle");
        verdicts.emplace(name, v);
    }
    c.expect(total >= 12, "only " + std::to_string(total) + " fixtures");
    c.expect(has_static && has_stripped, "fixture set lacks static or stripped variants");
    std::size_t pairs = 0;
    for (const auto& [name, v] : verdicts) {
        const auto it = verdicts.find(name + "_stripped");
        if (it == verdicts.end()) continue;
        ++pairs;
        c.expect(v.nx.present == it->second.nx.present, name + " NX changed after strip");
        c.expect(v.relro.status == it->second.relro.status, name + " RELRO changed after strip");
    }
    c.expect(pairs >= 3, "only " + std::to_string(pairs) + " strip pairs");
    return c.result(std::to_string(agree) + "/" + std::to_string(total) + " oracle agreement, " +
                    std::to_string(pairs) + " strip pairs stable");
}

// 4 ---------------------------------------------------------------------

json report_json(const apk::ManifestReport& r) {
    json declared = json::array();
    for (const auto& d : r.declared_permissions) {
        declared.push_back({{"name", d.name}, {"raw", d.protection_level_raw}, {"bucket", apk::to_string(d.bucket)}});
    }
    return {{"package", r.package_name},
            {"flags",
             {{"allow_backup", apk::to_string(r.flags.allow_backup)},
              {"debuggable", apk::to_string(r.flags.debuggable)},
              {"uses_cleartext_traffic", apk::to_string(r.flags.uses_cleartext_traffic)}}},
            {"used_permissions", json(std::vector<std::string>(r.used_permissions.begin(), r.used_permissions.end()))},
            {"declared_permissions", declared},
            {"has_launcher_activity", r.has_launcher_activity},
            {"category", apk::to_string(r.category)}};
}

bool has_launcher_via(const apk::AxmlDocument& doc, std::string_view component) {
    if (!doc.root) return false;
    std::function<bool(const apk::AxmlElement&, bool)> walk = [&](const apk::AxmlElement& e, bool inside) {
        const bool here = inside || e.name == component;
        if (here && e.name == "category") {
            for (const auto& a : e.attributes) {
                if (apk::attribute_text(doc, a) == "android.intent.category.LAUNCHER") return true;
            }
        }
        for (const auto& ch : e.children) {
            if (walk(ch, here)) return true;
        }
        return false;
    };
    return walk(*doc.root, false);
}

Result criterion4() {
    Check c;
    const auto expected = load_json(testkit::fixture("axml/expected.json"));
    std::set<std::string> flag_states;
    std::set<std::uint32_t> raw_levels;
    bool flagged_level = false, via_activity = false, via_alias = false;
    std::size_t matched = 0;
    for (const auto& [name, want] : expected.items()) {
        try {
            const auto doc = apk::parse_axml(read_file(testkit::fixture("axml/" + name + ".axml")));
            const auto got = report_json(apk::extract_manifest_report(doc));
            c.expect(got == want, name + " differs from oracle");
            if (got == want) ++matched;
            for (const auto& [flag, st] : want["flags"].items()) flag_states.insert(flag + "=" + st.get<std::string>());
            for (const auto& d : want["declared_permissions"]) {
                const auto raw = d["raw"].get<std::uint32_t>();
                raw_levels.insert(raw);
                flagged_level = flagged_level || (raw > 3 && (raw & 0xF) <= 3);
            }
            via_activity = via_activity || has_launcher_via(doc, "activity");
            via_alias = via_alias || has_launcher_via(doc, "activity-alias");
        } catch (const std::exception& e) {
            c.expect(false, name + ": " + e.what());
        }
    }
    for (const auto* flag : {"allow_backup", "debuggable", "uses_cleartext_traffic"}) {
        for (const auto* st : {"true", "false", "unset"}) {
            c.expect(flag_states.count(std::string(flag) + "=" + st) == 1,
                     std::string("no fixture with ") + flag + "=" + st);
        }
    }
    for (std::uint32_t lvl = 0; lvl <= 3; ++lvl) c.expect(raw_levels.count(lvl) == 1, "no level " + std::to_string(lvl));
    c.expect(flagged_level, "no flagged protection level");
    c.expect(via_activity && via_alias, "launcher via activity and activity-alias not both covered");

    // Append a synthetic chunk inside the document and reparse.
    auto bytes = read_file(testkit::fixture("axml/launcher_debuggable.axml"));
    const auto before = report_json(apk::extract_manifest_report(apk::parse_axml(bytes)));
    const Bytes chunk = {0x77, 0x07, 0x08, 0x00, 0x10, 0x00, 0x00, 0x00, 1, 2, 3, 4, 5, 6, 7, 8};
    bytes.insert(bytes.end(), chunk.begin(), chunk.end());
    const auto total = static_cast<std::uint32_t>(bytes.size());
    for (int i = 0; i < 4; ++i) bytes[4 + i] = static_cast<std::uint8_t>(total >> (8 * i));
    try {
        const auto doc = apk::parse_axml(bytes);
        c.expect(report_json(apk::extract_manifest_report(doc)) == before, "synthetic chunk changed the report");
        c.expect(doc.skipped_chunks == 1, "synthetic chunk not counted as skipped");
    } catch (const std::exception& e) {
        c.expect(false, std::string("synthetic chunk: ") + e.what());
    }
    return c.result(std::to_string(matched) + "/" + std::to_string(expected.size()) +
                    " manifests match oracle, unknown chunk tolerated");
}

// 5 ---------------------------------------------------------------------

Result criterion5() {
    Check c;
    std::mt19937 rng(5005);
    std::uniform_int_distribution<int> universe(1, 60), size(0, 40);
    const int cases = 1500;
    for (int i = 0; i < cases; ++i) {
        const int u = universe(rng);
        std::uniform_int_distribution<int> name(0, u);
        std::set<std::string> declared, used;
        for (int k = size(rng); k > 0; --k) declared.insert("p" + std::to_string(name(rng)));
        for (int k = size(rng); k > 0; --k) used.insert("p" + std::to_string(name(rng)));

        const auto r = permissions::set_inconsistencies(declared, used);
        std::set<std::string> want_residual, want_phantom;
        for (const auto& d : declared) {
            if (!used.count(d)) want_residual.insert(d);
        }
        for (const auto& p : used) {
            if (!declared.count(p)) want_phantom.insert(p);
        }
        const auto tag = " (case " + std::to_string(i) + ")";
        c.expect(r.residual == want_residual, "residual != declared\\used" + tag);
        c.expect(r.phantom == want_phantom, "phantom != used\\declared" + tag);
        bool disjoint = true;
        for (const auto& x : r.residual) disjoint = disjoint && !r.phantom.count(x);
        c.expect(disjoint, "residual and phantom overlap" + tag);
        c.expect(permissions::set_inconsistencies(declared, used) == r, "not deterministic" + tag);
        c.expect(permissions::set_inconsistencies(r.residual, used).residual == r.residual, "residual not idempotent" + tag);
        c.expect(permissions::set_inconsistencies(declared, r.phantom).phantom == r.phantom, "phantom not idempotent" + tag);

        // Same sets through the ledger path.
        apk::ManifestReport fw, app;
        fw.package_name = "android";
        for (const auto& d : declared) fw.declared_permissions.push_back({d, 0, apk::ProtectionBucket::Normal});
        app.package_name = "com.app";
        app.used_permissions = used;
        const auto ledger = permissions::build_ledger({{"framework", &fw}}, {{"app", &app}});
        c.expect(permissions::detect_inconsistencies(ledger) == r, "ledger path differs" + tag);
    }
    return c.result(std::to_string(cases) + " randomized set pairs");
}

// 6 ---------------------------------------------------------------------

std::string synthetic_policy(std::size_t rules, std::mt19937& rng) {
    static const char* domains[] = {"system_server", "surfaceflinger", "vold", "init", "hal_audio_default",
                                    "platform_app", "priv_app", "mediaserver"};
    static const char* classes[] = {"file", "dir", "chr_file", "binder", "property_service"};
    static const char* perms[] = {"read", "write", "open", "getattr", "ioctl", "call", "set", "map"};
    std::uniform_int_distribution<int> d(0, 7), cl(0, 4), p(0, 7), np(1, 4), t(0, 499), form(0, 9);
    std::string s;
    for (std::size_t i = 0; i < rules; ++i) {
        std::string ps;
        for (int k = np(rng); k > 0; --k) ps += std::string(ps.empty() ? "" : " ") + perms[p(rng)];
        const std::string rule = std::string(form(rng) == 0 ? "(neverallow " : "(allow ") + domains[d(rng)] +
                                 " type_" + std::to_string(t(rng)) + " (" + classes[cl(rng)] + " (" + ps + ")))";
        if (i % 50 == 0) s += "(optional opt_" + std::to_string(i) + "\n  " + rule + ")\n";
        else s += rule + "\n";
        if (i % 97 == 0) s += "(typeattributeset attr_" + std::to_string(i) + " (type_" + std::to_string(i) + "))\n";
    }
    return s;
}

Result criterion6() {
    using namespace sepolicy;
    Check c;
    std::mt19937 rng(6006);
    const auto text = synthetic_policy(10000, rng);

    const auto t0 = Clock::now();
    const auto whole = parse_cil_text(text, "policy.cil");
    const double secs = seconds_since(t0);
    c.expect(whole.rules.size() == 10000, "parsed " + std::to_string(whole.rules.size()) + " rules");
    c.expect(secs < 1.0, "10k-rule parse took " + fmt(secs) + " s");

    // Split on line boundaries into 7 files; counts must add up.
    testkit::TempDir dir;
    std::vector<std::string> lines;
    for (auto l : split(text, '\n')) lines.emplace_back(l);
    std::vector<fs::path> files;
    std::vector<std::string> chunks(7);
    std::size_t depth = 0, chunk = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        chunks[chunk] += lines[i] + "\n";
        for (char ch : lines[i]) depth += ch == '(' ? 1 : 0, depth -= ch == ')' ? 1 : 0;
        if (depth == 0 && i > (chunk + 1) * lines.size() / 7 && chunk < 6) ++chunk;
    }
    RuleCounts summed;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto p = dir / ("part" + std::to_string(i) + ".cil");
        write_file_atomic(p, chunks[i]);
        files.push_back(p);
        const auto part = rule_counts(parse_cil_text(chunks[i], p.string()));
        summed.allow += part.allow;
        summed.neverallow += part.neverallow;
    }
    const auto merged = parse_cil(files, 4);
    c.expect(summed == rule_counts(whole), "per-file counts do not add up");
    c.expect(rule_counts(merged) == rule_counts(whole), "merged counts differ");
    c.expect(key_multiset(merged) == key_multiset(whole), "merged multiset differs");

    const auto once = whole.to_cil();
    const auto twice = parse_cil_text(once, "rt.cil").to_cil();
    c.expect(once == twice, "normalized form not stable");
    c.expect(diff_rulesets(whole, whole).empty(), "diff(x,x) not empty");
    c.expect(diff_rulesets(whole, parse_cil_text(once, "rt.cil")).empty(), "diff(x, normalize(x)) not empty");

    // Baseline carries a neverallow on net_dns_prop; the target lacks it.
    const std::string shared = "(allow netd net_dns_prop (file (read open)))\n(neverallow untrusted_app sysfs (file (write)))\n";
    const auto base = parse_cil_text(shared + "(neverallow { domain -init } net_dns_prop (property_service (set)))\n"
                                              "(neverallow untrusted_app net_dns_prop (file (write)))\n",
                                     "baseline.cil");
    const auto target = parse_cil_text(shared + "(neverallow { domain -init } net_dns_prop (property_service (set)))\n",
                                       "target.cil");
    const auto d = diff_rulesets(base, target);
    c.expect(d.added_allow.empty() && d.removed_allow.empty() && d.added_neverallow.empty(), "unexpected diff entries");
    c.expect(d.removed_neverallow.size() == 1 &&
                 d.removed_neverallow.begin()->first == "(neverallow untrusted_app net_dns_prop (file (write)))" &&
                 d.removed_neverallow.begin()->second == 1,
             "net_dns_prop removal not reported exactly");

    // 99 decoys around a single exposing rule.
    std::string decoys;
    std::uniform_int_distribution<int> kind(0, 5), n(0, 999);
    for (int i = 0; i < 99; ++i) {
        const auto k = std::to_string(n(rng));
        switch (kind(rng)) {
            case 0: decoys += "(neverallow untrusted_app decoy" + k + "_prop (file (read)))\n"; break;
            case 1: decoys += "(allow untrusted_app decoy" + k + "_file (file (read)))\n"; break;
            case 2: decoys += "(allow platform_app decoy" + k + "_prop (file (read)))\n"; break;
            case 3: decoys += "(dontaudit untrusted_app decoy" + k + "_prop (file (read)))\n"; break;
            case 4: decoys += "(allow system_server decoy" + k + "_prop_file (file (read)))\n"; break;
            default: decoys += "(allow app_domain prop" + k + "_data (dir (search)))\n";
        }
    }
    const std::string exposing = "(allow untrusted_app vendor_secret_prop (file (read open getattr map)))\n";
    const auto mid = decoys.find('\n', decoys.size() / 2) + 1;
    const auto decoy_set = parse_cil_text(decoys.substr(0, mid) + exposing + decoys.substr(mid), "decoys.cil");
    c.expect(decoy_set.rules.size() + decoy_set.diagnostics.skipped_total() == 100, "decoy set is not 100 rules");
    const auto found = untrusted_domain_exposure(decoy_set);
    c.expect(found.size() == 1, "exposure flagged " + std::to_string(found.size()) + " rules");
    if (!found.empty()) c.expect(found[0].target == "vendor_secret_prop", "wrong rule flagged: " + found[0].rule_key);

    return c.result("10k rules in " + fmt(secs) + " s, additive over 7 files, stable round trip, scenario and decoys ok");
}

// 7 ---------------------------------------------------------------------

Result criterion7() {
    Check c;
    const auto root = testkit::fixture("firmware/mini");
    const auto target_count = [&] {
        const auto rec = ingest::load_firmware(root, ingest::Device::parse("quest3"), "fixture");
        const auto t = ingest::enumerate_targets(rec);
        return std::tuple{t.elf_candidates.size(), t.apk_candidates.size(), t.cil_candidates.size(),
                          t.kernel_blob.has_value()};
    }();
    c.expect(target_count == std::tuple{std::size_t{3}, std::size_t{2}, std::size_t{1}, true},
             "mini firmware layout is not 3 ELF / 2 APK / 1 CIL / boot image");

    AuditConfig cfg;
    cfg.root = root;
    cfg.device = "quest3";
    cfg.version = "fixture";
    const auto t0 = Clock::now();
    cfg.jobs = 1;
    const auto a = run_audit_pipeline(cfg);
    cfg.jobs = 8;
    const auto b = run_audit_pipeline(cfg);
    const double secs = seconds_since(t0);
    c.expect(a.report.canonical_body() == b.report.canonical_body(), "canonical bodies differ");
    c.expect(a.report.digest() == b.report.digest(), "digests differ");
    const longitudinal::AuditReport sa(a.report.body(), "2024-01-01T00:00:00Z");
    const longitudinal::AuditReport sb(b.report.body(), "2024-01-01T00:00:00Z");
    c.expect(sa.serialize() == sb.serialize(), "serialized reports differ");
    c.expect(secs < 10.0, "two runs took " + fmt(secs) + " s");
    return c.result("byte-identical reports (digest " + a.report.digest().substr(0, 12) + "), two runs in " +
                    fmt(secs) + " s");
}

// 8 ---------------------------------------------------------------------

struct Reference {
    const char* device;
    int cleartext, allow_backup, debuggable;
    std::array<double, 5> means;  // DANGEROUS NORMAL SIGNATURE SIGNATURE_OR_SYSTEM OTHERS
    std::array<int, 5> without;   // canary cfi fortify nx relro
};

// Published latest-firmware figures for each device.
const std::vector<Reference>& references() {
    static const std::vector<Reference> r = {
        {"quest", 6, 0, 0, {2.02, 2.93, 2.77, 0.70, 4.87}, {323, 2712, 1687, 7, 7}},
        {"quest2", 9, 1, 0, {2.63, 3.67, 4.09, 0.75, 8.30}, {451, 2757, 1893, 38, 38}},
        {"quest_pro", 9, 1, 0, {2.62, 3.68, 4.08, 0.74, 8.56}, {443, 2750, 1907, 39, 39}},
        {"quest3", 9, 1, 0, {2.64, 3.64, 4.04, 0.74, 8.17}, {436, 2909, 1950, 10, 10}},
        {"pico_neo3", 27, 8, 0, {1.95, 2.92, 1.33, 0.62, 2.86}, {242, 4161, 2417, 77, 67}},
        {"pico4", 27, 7, 0, {1.92, 2.80, 1.29, 0.61, 2.87}, {219, 4207, 2071, 5, 13}},
    };
    return r;
}

Result criterion8() {
    const char* env = std::getenv("VRFAUDIT_CORPUS_ROOT");
    if (!env || !*env) return {Outcome::Skip, "VRFAUDIT_CORPUS_ROOT not set; operator-run against real firmware"};
    const fs::path corpus(env);
    Check c;
    std::vector<std::string> audited;
    for (const auto& ref : references()) {
        const auto root = corpus / ref.device;
        std::error_code ec;
        if (!fs::is_directory(root, ec)) continue;
        audited.push_back(ref.device);
        AuditConfig cfg;
        cfg.root = root;
        cfg.device = ref.device;
        cfg.version = "latest";
        cfg.jobs = default_jobs();
        try {
            const auto body = run_audit_pipeline(cfg).report.body();
            const std::string dev = ref.device;
            const auto& flags = body["apps"]["flag_counts"];
            c.expect(flags["uses_cleartext_traffic"] == ref.cleartext, dev + " cleartext " + flags["uses_cleartext_traffic"].dump());
            c.expect(flags["allow_backup"] == ref.allow_backup, dev + " allow_backup " + flags["allow_backup"].dump());
            c.expect(flags["debuggable"] == ref.debuggable, dev + " debuggable " + flags["debuggable"].dump());
            const auto& means = body["apps"]["bucket_means"];
            const char* buckets[] = {"DANGEROUS", "NORMAL", "SIGNATURE", "SIGNATURE_OR_SYSTEM", "OTHERS"};
            for (std::size_t i = 0; i < 5; ++i) {
                const auto v = means.is_object() ? means.value(buckets[i], -1.0) : -1.0;
                c.expect(std::fabs(v - ref.means[i]) <= 0.02 + 1e-9, dev + " mean " + buckets[i] + " " + fmt(v, 2));
            }
            const auto& s = body["binaries"]["summary"];
            const char* fields[] = {"no_canary", "no_cfi", "no_fortify", "no_nx", "no_relro"};
            for (std::size_t i = 0; i < 5; ++i) {
                const double v = s.value(fields[i], -1.0);
                const double tol = std::max(1.0, 0.02 * ref.without[i]);
                c.expect(std::fabs(v - ref.without[i]) <= tol, dev + " " + fields[i] + " " + fmt(v, 0));
            }
        } catch (const std::exception& e) {
            c.expect(false, std::string(ref.device) + ": " + e.what());
        }
    }
    if (audited.empty()) return {Outcome::Skip, "no device trees under " + corpus.string()};
    std::string list;
    for (const auto& d : audited) list += (list.empty() ? "" : ",") + d;
    return c.result("reference counts reproduced for " + list);
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Result()>>> criteria = {
        {"ikconfig round-trip", criterion1},
        {"mitigation catalog", criterion2},
        {"ELF hardening oracle", criterion3},
        {"AXML manifest oracle", criterion4},
        {"phantom/residual algebra", criterion5},
        {"CIL suite", criterion6},
        {"end-to-end determinism", criterion7},
        {"corpus reproduction", criterion8},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Result r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {Outcome::Fail, std::string("uncaught: ") + e.what()};
        }
        const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Skip ? "SKIP" : "FAIL";
        if (r.outcome == Outcome::Fail) ++failed;
        std::cout << "criterion " << (i + 1) << " " << tag << " " << criteria[i].first << ": " << r.detail << "\n";
    }
    return failed == 0 ? 0 : 1;
}
