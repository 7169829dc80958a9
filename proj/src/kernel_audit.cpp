#include "vrfaudit/kernel_audit.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "builtin_data.hpp"
#include "vrfaudit/compress.hpp"
#include "vrfaudit/error.hpp"

namespace vrfaudit::kernel {

namespace {

constexpr std::string_view kBootMagic = "ANDROID!";
constexpr std::string_view kIkcfgStart = "IKCFG_ST";
constexpr std::string_view kBanner = "Linux version ";
constexpr int kMaxLayerDepth = 2;

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

// Visits the blob, then every payload that decompresses out of it (gzip,
// LZ4 frame, LZ4 legacy), depth-first in offset order, until visit()
// returns true.
template <typename Visit>
bool scan_layers(ByteView blob, int depth, Visit&& visit) {
    if (visit(blob)) return true;
    if (depth == 0) return false;
    for (std::size_t p = 0; p + 4 <= blob.size(); ++p) {
        const auto b0 = blob[p];
        if (b0 != 0x1F && b0 != 0x04 && b0 != 0x02) continue;
        const auto rest = blob.subspan(p);
        if (b0 == 0x1F && rest[1] == 0x8B && rest[2] == 0x08) {
            if (auto out = compress::gunzip(rest)) {
                if (scan_layers(ByteView(out->data), depth - 1, visit)) return true;
                p += out->consumed - 1;
            }
        } else if (b0 == 0x04 && rest[1] == 0x22 && rest[2] == 0x4D && rest[3] == 0x18) {
            if (auto out = compress::lz4_frame_decode(rest)) {
                if (scan_layers(ByteView(*out), depth - 1, visit)) return true;
            }
        } else if (b0 == 0x02 && rest[1] == 0x21 && rest[2] == 0x4C && rest[3] == 0x18) {
            if (auto out = compress::lz4_legacy_decode(rest)) {
                if (scan_layers(ByteView(*out), depth - 1, visit)) return true;
            }
        }
    }
    return false;
}

bool parse_number(std::string_view& s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p == s.data()) return false;
    s.remove_prefix(static_cast<std::size_t>(p - s.data()));
    return true;
}

std::optional<KernelVersion> parse_banner(ByteView blob, std::size_t at) {
    std::size_t end = at;
    while (end < blob.size() && end - at < 512 && blob[end] != 0 && blob[end] != '\n') ++end;
    std::string banner(reinterpret_cast<const char*>(blob.data()) + at, end - at);
    std::string_view rest = std::string_view(banner).substr(kBanner.size());
    KernelVersion v;
    if (!parse_number(rest, v.major) || rest.empty() || rest.front() != '.') return std::nullopt;
    rest.remove_prefix(1);
    if (!parse_number(rest, v.minor)) return std::nullopt;
    if (!rest.empty() && rest.front() == '.') {
        rest.remove_prefix(1);
        if (!parse_number(rest, v.patch)) v.patch = 0;
    }
    if (v.major < 2) return std::nullopt;
    v.banner = std::move(banner);
    return v;
}

}  // namespace

BootImage parse_boot_image(ByteView blob) {
    if (blob.size() < kBootMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(blob.data()), kBootMagic.size()) != kBootMagic) {
        throw Error(ErrorCode::BadMagic, "boot image does not start with ANDROID!");
    }
    if (blob.size() < 48) throw Error(ErrorCode::TruncatedImage, "boot image header truncated");
    BootImage img;
    img.raw_size = blob.size();
    img.header_version = load_le32(blob.data() + 40);
    std::size_t kernel_size = load_le32(blob.data() + 8);
    std::size_t ramdisk_size = 0;
    if (img.header_version >= 3 && img.header_version <= 4) {
        ramdisk_size = load_le32(blob.data() + 12);
        img.page_size = 4096;
    } else {
        // Legacy v0 images may hold arbitrary bytes in the former "unused" slot.
        if (img.header_version > 4) img.header_version = 0;
        ramdisk_size = load_le32(blob.data() + 16);
        img.page_size = load_le32(blob.data() + 36);
        if (img.page_size == 0 || (img.page_size & (img.page_size - 1)) != 0) {
            throw Error(ErrorCode::TruncatedImage, "invalid page size " + std::to_string(img.page_size));
        }
    }
    const std::size_t kernel_at = img.page_size;
    if (kernel_at > blob.size() || kernel_size > blob.size() - kernel_at) {
        throw Error(ErrorCode::TruncatedImage, "kernel_size " + std::to_string(kernel_size) + " exceeds image of " +
                                                   std::to_string(blob.size()) + " bytes");
    }
    img.kernel.assign(blob.begin() + static_cast<std::ptrdiff_t>(kernel_at),
                      blob.begin() + static_cast<std::ptrdiff_t>(kernel_at + kernel_size));
    const std::size_t ramdisk_at = kernel_at + align_up(kernel_size, img.page_size);
    if (ramdisk_size > 0) {
        if (ramdisk_at > blob.size() || ramdisk_size > blob.size() - ramdisk_at) {
            throw Error(ErrorCode::TruncatedImage, "ramdisk_size exceeds image");
        }
        img.ramdisk.assign(blob.begin() + static_cast<std::ptrdiff_t>(ramdisk_at),
                           blob.begin() + static_cast<std::ptrdiff_t>(ramdisk_at + ramdisk_size));
    }
    return img;
}

bool is_valid_option_name(std::string_view name) {
    if (!name.starts_with("CONFIG_") || name.size() == 7) return false;
    return std::all_of(name.begin() + 7, name.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

KernelConfig KernelConfig::parse(std::string text) {
    KernelConfig cfg;
    for (auto line : split(text, '\n')) {
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            constexpr std::string_view tail = " is not set";
            auto body = trim(line.substr(1));
            if (!body.ends_with(tail)) continue;
            const auto name = body.substr(0, body.size() - tail.size());
            if (is_valid_option_name(name)) cfg.options_[std::string(name)] = {OptionState::NotSet, ""};
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) continue;
        const auto name = line.substr(0, eq);
        if (!is_valid_option_name(name)) continue;
        const auto value = line.substr(eq + 1);
        OptionState st = OptionState::Value;
        if (value == "y") st = OptionState::Yes;
        else if (value == "m") st = OptionState::Module;
        cfg.options_[std::string(name)] = {st, std::string(value)};
    }
    cfg.raw_ = std::move(text);
    return cfg;
}

bool KernelConfig::enabled(std::string_view option) const {
    auto it = options_.find(option);
    return it != options_.end() && (it->second.state == OptionState::Yes || it->second.state == OptionState::Module);
}

bool KernelConfig::mentioned(std::string_view option) const { return options_.find(option) != options_.end(); }

std::optional<OptionValue> KernelConfig::state(std::string_view option) const {
    auto it = options_.find(option);
    if (it == options_.end()) return std::nullopt;
    return it->second;
}

std::string extract_ikconfig_text(ByteView kernel_blob) {
    bool saw_marker = false;
    std::optional<std::string> text;
    scan_layers(kernel_blob, kMaxLayerDepth, [&](ByteView layer) {
        for (auto pos = find_bytes(layer, kIkcfgStart); pos != std::string_view::npos;
             pos = find_bytes(layer, kIkcfgStart, pos + 1)) {
            saw_marker = true;
            // gzip delimits itself; IKCFG_ED is not needed to find the end.
            if (auto out = compress::gunzip(layer.subspan(pos + kIkcfgStart.size()))) {
                text.emplace(out->data.begin(), out->data.end());
                return true;
            }
        }
        return false;
    });
    if (text) return *std::move(text);
    if (saw_marker) throw Error(ErrorCode::CorruptConfigStream, "IKCFG_ST found but the gzip payload does not decode");
    throw Error(ErrorCode::NoEmbeddedConfig, "no IKCFG_ST marker in kernel image or its decompressed payloads");
}

KernelConfig extract_ikconfig(ByteView kernel_blob) { return KernelConfig::parse(extract_ikconfig_text(kernel_blob)); }

std::string KernelSeries::to_string() const { return std::to_string(major) + "." + std::to_string(minor); }

std::optional<KernelSeries> KernelSeries::parse(std::string_view text) {
    text = trim(text);
    KernelSeries s;
    if (!parse_number(text, s.major) || text.empty() || text.front() != '.') return std::nullopt;
    text.remove_prefix(1);
    if (!parse_number(text, s.minor) || !text.empty()) return std::nullopt;
    return s;
}

std::string KernelVersion::to_string() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

KernelVersion extract_kernel_version(ByteView kernel_blob) {
    std::optional<KernelVersion> found;
    scan_layers(kernel_blob, kMaxLayerDepth, [&](ByteView layer) {
        for (auto pos = find_bytes(layer, kBanner); pos != std::string_view::npos;
             pos = find_bytes(layer, kBanner, pos + 1)) {
            if ((found = parse_banner(layer, pos))) return true;
        }
        return false;
    });
    if (!found) throw Error(ErrorCode::BannerNotFound, "no \"Linux version\" banner in kernel image");
    return *std::move(found);
}

std::string_view to_string(Requirement r) {
    switch (r) {
        case Requirement::Must: return "MUST";
        case Requirement::StronglyRecommended10: return "STRONGLY_RECOMMENDED_10";
        case Requirement::StronglyRecommended12: return "STRONGLY_RECOMMENDED_12";
        case Requirement::Suggested: return "SUGGESTED";
    }
    return "SUGGESTED";
}

std::string_view to_string(ResolvedRequirement r) {
    switch (r) {
        case ResolvedRequirement::Must: return "MUST";
        case ResolvedRequirement::StronglyRecommended: return "STRONGLY_RECOMMENDED";
        case ResolvedRequirement::Suggested: return "SUGGESTED";
    }
    return "SUGGESTED";
}

std::optional<Requirement> parse_requirement(std::string_view text) {
    for (auto r : {Requirement::Must, Requirement::StronglyRecommended10, Requirement::StronglyRecommended12,
                   Requirement::Suggested}) {
        if (to_string(r) == text) return r;
    }
    return std::nullopt;
}

ResolvedRequirement resolve_requirement(Requirement r, int android_sdk) {
    constexpr int kAndroid10 = 29;
    constexpr int kAndroid12 = 31;
    switch (r) {
        case Requirement::Must: return ResolvedRequirement::Must;
        case Requirement::StronglyRecommended10:
            return android_sdk == 0 || android_sdk >= kAndroid10 ? ResolvedRequirement::StronglyRecommended
                                                                  : ResolvedRequirement::Suggested;
        case Requirement::StronglyRecommended12:
            return android_sdk == 0 || android_sdk >= kAndroid12 ? ResolvedRequirement::StronglyRecommended
                                                                  : ResolvedRequirement::Suggested;
        case Requirement::Suggested: return ResolvedRequirement::Suggested;
    }
    return ResolvedRequirement::Suggested;
}

MitigationCatalog parse_catalog(std::string_view text) {
    MitigationCatalog catalog;
    std::set<std::string> ids;
    std::size_t lineno = 0;
    for (auto line : split(text, '\n')) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto where = "catalog line " + std::to_string(lineno) + ": ";
        const auto fields = split(line, '|');
        if (fields.size() != 3 && fields.size() != 5) {
            throw Error(ErrorCode::BadCatalog, where + "expected 3 or 5 '|'-separated fields");
        }
        MitigationCatalogEntry entry;
        entry.id = std::string(trim(fields[0]));
        if (entry.id.empty()) throw Error(ErrorCode::BadCatalog, where + "empty id");
        if (!ids.insert(entry.id).second) throw Error(ErrorCode::BadCatalog, where + "duplicate id " + entry.id);
        const auto req = parse_requirement(trim(fields[1]));
        if (!req) throw Error(ErrorCode::BadCatalog, where + "unknown requirement '" + std::string(trim(fields[1])) + "'");
        entry.requirement = *req;
        for (auto clause_text : split(fields[2], ';')) {
            std::vector<std::string> clause;
            for (auto opt : split(clause_text, '+')) {
                opt = trim(opt);
                if (!is_valid_option_name(opt)) {
                    throw Error(ErrorCode::BadCatalog, where + "invalid option name '" + std::string(opt) + "'");
                }
                clause.emplace_back(opt);
            }
            entry.clauses.push_back(std::move(clause));
        }
        if (fields.size() == 5) {
            entry.attack_vector = std::string(trim(fields[3]));
            entry.mitigation_name = std::string(trim(fields[4]));
        }
        catalog.push_back(std::move(entry));
    }
    if (catalog.empty()) throw Error(ErrorCode::BadCatalog, "catalog has no entries");
    return catalog;
}

std::string serialize_catalog(const MitigationCatalog& catalog) {
    std::string out;
    for (const auto& e : catalog) {
        out += e.id + " | " + std::string(to_string(e.requirement)) + " | ";
        for (std::size_t c = 0; c < e.clauses.size(); ++c) {
            if (c) out += ';';
            for (std::size_t k = 0; k < e.clauses[c].size(); ++k) {
                if (k) out += '+';
                out += e.clauses[c][k];
            }
        }
        out += " | " + e.attack_vector + " | " + e.mitigation_name + "\n";
    }
    return out;
}

std::string_view builtin_catalog_text() { return builtin_data::kMitigationCatalog; }

const MitigationCatalog& default_catalog() {
    static const MitigationCatalog catalog = parse_catalog(builtin_catalog_text());
    return catalog;
}

std::string_view to_string(MitigationStatus s) { return s == MitigationStatus::Enabled ? "ENABLED" : "ABSENT"; }

std::vector<MitigationVerdict> evaluate_mitigations(const KernelConfig& config, int android_sdk,
                                                    const MitigationCatalog& catalog) {
    std::vector<MitigationVerdict> verdicts;
    verdicts.reserve(catalog.size());
    for (const auto& entry : catalog) {
        MitigationVerdict v;
        v.entry_id = entry.id;
        v.requirement = resolve_requirement(entry.requirement, android_sdk);
        bool any_mentioned = false;
        for (const auto& clause : entry.clauses) {
            bool all = !clause.empty();
            for (const auto& opt : clause) {
                any_mentioned = any_mentioned || config.mentioned(opt);
                all = all && config.enabled(opt);
            }
            if (all && v.status == MitigationStatus::Absent) {
                v.status = MitigationStatus::Enabled;
                v.satisfied_clause = clause;
                v.via_module = std::any_of(clause.begin(), clause.end(), [&](const std::string& o) {
                    return config.state(o)->state == OptionState::Module;
                });
            }
        }
        v.predates_option = v.status == MitigationStatus::Absent && !any_mentioned;
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

LtsTable parse_lts_table(std::string_view text) {
    LtsTable table;
    std::size_t lineno = 0;
    for (auto line : split(text, '\n')) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto where = "LTS table line " + std::to_string(lineno) + ": ";
        const auto fields = split(line, '|');
        if (fields.size() != 2) throw Error(ErrorCode::BadCatalog, where + "expected `series | YYYY-MM-DD`");
        const auto series = KernelSeries::parse(fields[0]);
        const auto date = Date::parse(fields[1]);
        if (!series) throw Error(ErrorCode::BadCatalog, where + "bad series '" + std::string(trim(fields[0])) + "'");
        if (!date) throw Error(ErrorCode::BadCatalog, where + "bad date '" + std::string(trim(fields[1])) + "'");
        if (!table.empty() && !(table.back().series < *series && table.back().released < *date)) {
            throw Error(ErrorCode::BadCatalog, where + "series and dates must increase monotonically");
        }
        table.push_back({*series, *date});
    }
    if (table.empty()) throw Error(ErrorCode::BadCatalog, "LTS table has no entries");
    return table;
}

std::string_view builtin_lts_table_text() { return builtin_data::kLtsTable; }

const LtsTable& default_lts_table() {
    static const LtsTable table = parse_lts_table(builtin_lts_table_text());
    return table;
}

LtsLag lts_lag(const KernelVersion& version, const std::optional<Date>& release_date, const LtsTable& table) {
    LtsLag lag;
    if (!release_date) return lag;
    lag.determinate = true;
    for (const auto& r : table) {
        if (r.released > *release_date) break;
        lag.latest_lts = r.series;
        if (version.series() < r.series) ++lag.series_behind;
    }
    lag.lagging = lag.latest_lts && version.series() < *lag.latest_lts;
    return lag;
}

}  // namespace vrfaudit::kernel
