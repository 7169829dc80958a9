#include "vrfaudit/permission_analysis.hpp"

#include <algorithm>
#include <cmath>

#include "vrfaudit/error.hpp"

namespace vrfaudit::permissions {

namespace {

void add_declarations(PermissionLedger& ledger, const SourcedReport& src) {
    for (const auto& d : src.report->declared_permissions) {
        Declaration decl{d.protection_level_raw, d.bucket, src.source};
        auto [it, inserted] = ledger.declared.emplace(d.name, decl);
        if (!inserted && it->second.protection_level_raw != d.protection_level_raw) {
            ledger.conflicts.push_back(
                {d.name, it->second.source, it->second.protection_level_raw, src.source, d.protection_level_raw});
        }
    }
}

std::size_t bucket_index(ProtectionBucket b) {
    return static_cast<std::size_t>(std::find(kBucketOrder.begin(), kBucketOrder.end(), b) - kBucketOrder.begin());
}

// NORMAL < DANGEROUS < SIGNATURE == SIGNATURE_OR_SYSTEM; OTHERS has no rank.
int rank(ProtectionBucket b) {
    switch (b) {
        case ProtectionBucket::Normal: return 0;
        case ProtectionBucket::Dangerous: return 1;
        case ProtectionBucket::Signature:
        case ProtectionBucket::SignatureOrSystem: return 2;
        case ProtectionBucket::Others: return -1;
    }
    return -1;
}

}  // namespace

PermissionLedger build_ledger(const std::vector<SourcedReport>& framework_reports,
                              const std::vector<SourcedReport>& app_reports) {
    PermissionLedger ledger;
    for (const auto& r : framework_reports) add_declarations(ledger, r);
    for (const auto& r : app_reports) add_declarations(ledger, r);
    for (const auto& r : app_reports) {
        for (const auto& p : r.report->used_permissions) ledger.used_by[p].insert(r.report->package_name);
    }
    return ledger;
}

InconsistencyReport set_inconsistencies(const std::set<std::string>& declared, const std::set<std::string>& used) {
    InconsistencyReport out;
    std::set_difference(declared.begin(), declared.end(), used.begin(), used.end(),
                        std::inserter(out.residual, out.residual.end()));
    std::set_difference(used.begin(), used.end(), declared.begin(), declared.end(),
                        std::inserter(out.phantom, out.phantom.end()));
    return out;
}

InconsistencyReport detect_inconsistencies(const PermissionLedger& ledger,
                                           const std::set<std::string>& phantom_allowlist) {
    std::set<std::string> declared, used;
    for (const auto& [k, v] : ledger.declared) declared.insert(k);
    for (const auto& [k, v] : ledger.used_by) used.insert(k);
    auto out = set_inconsistencies(declared, used);
    for (const auto& name : phantom_allowlist) out.phantom.erase(name);
    return out;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

BucketMeans per_app_bucket_means(const std::vector<const ManifestReport*>& app_reports,
                                 const PermissionLedger& ledger) {
    if (app_reports.empty()) throw Error(ErrorCode::EmptyAppSet, "no app reports to average over");
    BucketMeans m;
    m.app_count = app_reports.size();
    for (const auto* r : app_reports) {
        for (const auto& p : r->used_permissions) {
            auto it = ledger.declared.find(p);
            ProtectionBucket b = ProtectionBucket::Others;
            if (it == ledger.declared.end()) {
                ++m.others_unresolved;
            } else {
                b = it->second.bucket;
                if (b == ProtectionBucket::Others) ++m.others_unmapped_level;
            }
            ++m.totals[bucket_index(b)];
        }
    }
    for (std::size_t i = 0; i < m.totals.size(); ++i) {
        m.means[i] = round2(static_cast<double>(m.totals[i]) / static_cast<double>(m.app_count));
    }
    return m;
}

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::Tightened: return "TIGHTENED";
        case Direction::Loosened: return "LOOSENED";
        case Direction::Removed: return "REMOVED";
        case Direction::Added: return "ADDED";
        case Direction::FlagOnly: return "FLAG_ONLY";
    }
    return "FLAG_ONLY";
}

DeclarationTable declaration_table(const PermissionLedger& ledger) {
    DeclarationTable t;
    for (const auto& [name, d] : ledger.declared) t.emplace(name, d.protection_level_raw);
    return t;
}

Direction classify_change(std::uint32_t old_raw, std::uint32_t new_raw) {
    const int a = rank(apk::bucket_for_raw(old_raw));
    const int b = rank(apk::bucket_for_raw(new_raw));
    if (a < 0 || b < 0 || a == b) return Direction::FlagOnly;
    return b > a ? Direction::Tightened : Direction::Loosened;
}

std::vector<ProtectionChangeEvent> protection_changes(
    const std::vector<std::pair<std::string, DeclarationTable>>& versions) {
    std::vector<ProtectionChangeEvent> events;
    for (std::size_t i = 1; i < versions.size(); ++i) {
        const auto& [from, old_t] = versions[i - 1];
        const auto& [to, new_t] = versions[i];
        auto o = old_t.begin();
        auto n = new_t.begin();
        while (o != old_t.end() || n != new_t.end()) {
            ProtectionChangeEvent e;
            e.from_version = from;
            e.to_version = to;
            if (n == new_t.end() || (o != old_t.end() && o->first < n->first)) {
                e.permission = o->first;
                e.old_raw = o->second;
                e.old_bucket = apk::bucket_for_raw(o->second);
                e.direction = Direction::Removed;
                ++o;
            } else if (o == old_t.end() || n->first < o->first) {
                e.permission = n->first;
                e.new_raw = n->second;
                e.new_bucket = apk::bucket_for_raw(n->second);
                e.direction = Direction::Added;
                ++n;
            } else {
                const bool same = o->second == n->second;
                if (!same) {
                    e.permission = o->first;
                    e.old_raw = o->second;
                    e.new_raw = n->second;
                    e.old_bucket = apk::bucket_for_raw(o->second);
                    e.new_bucket = apk::bucket_for_raw(n->second);
                    e.direction = classify_change(o->second, n->second);
                }
                ++o;
                ++n;
                if (same) continue;
            }
            events.push_back(std::move(e));
        }
    }
    return events;
}

}  // namespace vrfaudit::permissions
