#include "vrfaudit/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <system_error>

#include "builtin_data.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/zip.hpp"

namespace vrfaudit::ingest {

namespace {

constexpr std::array<std::string_view, 3> kPartitions = {"system", "vendor", "odm"};

std::optional<int> to_int(std::string_view s) {
    s = trim(s);
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

bool is_dir(const fs::path& p) {
    std::error_code ec;
    return fs::is_directory(p, ec);
}

// key=value text with '#' comments; the same grammar as build.prop.
std::map<std::string, std::string> read_manifest(const fs::path& path) {
    std::map<std::string, std::string> out;
    const auto props = BuildProperties::load(path);
    for (const auto& [k, v] : props.entries()) out[k] = v;
    return out;
}

fs::path canonical_or_empty(const fs::path& p) {
    std::error_code ec;
    auto c = fs::canonical(p, ec);
    return ec ? fs::path{} : c;
}

bool inside(const fs::path& candidate, const std::vector<fs::path>& roots) {
    const auto text = candidate.native();
    for (const auto& r : roots) {
        const auto& rt = r.native();
        if (text == rt) return true;
        if (text.size() > rt.size() && text.compare(0, rt.size(), rt) == 0 && text[rt.size()] == '/') return true;
    }
    return false;
}

// Recursive walk honoring the symlink containment rule. Emits
// (visible path, canonical path) for regular files.
class Walker {
public:
    explicit Walker(std::vector<fs::path> roots) : roots_(std::move(roots)) {}

    template <typename Fn>
    void walk(const fs::path& dir, Fn&& emit) {
        const auto canon = canonical_or_empty(dir);
        if (canon.empty() || !inside(canon, roots_) || !visited_.insert(canon).second) return;
        std::error_code ec;
        std::vector<fs::path> children;
        for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
            children.push_back(it->path());
        }
        std::sort(children.begin(), children.end());
        for (const auto& child : children) {
            const auto status = fs::symlink_status(child, ec);
            if (ec) continue;
            fs::path real = child;
            if (fs::is_symlink(status)) {
                real = canonical_or_empty(child);
                if (real.empty() || !inside(real, roots_)) continue;
            }
            if (is_dir(real)) {
                walk(child, emit);
            } else if (fs::is_regular_file(real, ec)) {
                emit(child, fs::is_symlink(status) ? real : canonical_or_empty(child));
            }
        }
    }

private:
    std::vector<fs::path> roots_;
    std::set<fs::path> visited_;
};

// Deduplicates by canonical path, keeping the smallest visible path.
class Collector {
public:
    void add(const fs::path& visible, const fs::path& canonical) {
        auto [it, inserted] = by_canonical_.emplace(canonical, visible);
        if (!inserted && visible < it->second) it->second = visible;
    }
    std::vector<fs::path> sorted() const {
        std::vector<fs::path> out;
        out.reserve(by_canonical_.size());
        for (const auto& [c, v] : by_canonical_) out.push_back(v);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::map<fs::path, fs::path> by_canonical_;
};

bool file_has_elf_magic(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::array<std::uint8_t, 4> head{};
    if (!in.read(reinterpret_cast<char*>(head.data()), head.size())) return false;
    return has_elf_magic(head);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Device Device::parse(std::string_view text) {
    static const std::map<std::string, DeviceModel, std::less<>> known = {
        {"quest", DeviceModel::Quest},         {"quest2", DeviceModel::Quest2},
        {"quest3", DeviceModel::Quest3},       {"quest_pro", DeviceModel::QuestPro},
        {"pico_neo3", DeviceModel::PicoNeo3},  {"pico4", DeviceModel::Pico4},
    };
    Device d;
    d.label = std::string(trim(text));
    const auto key = lower(d.label);
    if (auto it = known.find(key); it != known.end()) {
        d.model = it->second;
        d.label = it->first;
    }
    if (d.label.empty()) throw Error(ErrorCode::InvalidArgument, "device model must not be empty");
    return d;
}

BuildProperties BuildProperties::parse(std::string_view text, fs::path source) {
    BuildProperties props;
    props.source_ = std::move(source);
    for (auto line : split(text, '\n')) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            ++props.malformed_;
            continue;
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            ++props.malformed_;
            continue;
        }
        props.entries_.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
    }
    return props;
}

BuildProperties BuildProperties::load(const fs::path& path) { return parse(read_text_file(path), path); }

std::optional<std::string> BuildProperties::get(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->first == key) return it->second;
    }
    return std::nullopt;
}

std::string BuildProperties::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

BuildIdMap BuildIdMap::parse(std::string_view text) {
    BuildIdMap map;
    std::size_t lineno = 0;
    for (auto line : split(text, '\n')) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split(line, '|');
        const auto where = "build-id map line " + std::to_string(lineno);
        if (fields.size() != 3) throw Error(ErrorCode::BadCatalog, where + ": expected `id | sdk | release`");
        const auto key = std::string(trim(fields[0]));
        const auto sdk = to_int(fields[1]);
        if (key.empty() || key == "*") throw Error(ErrorCode::BadCatalog, where + ": empty build id");
        if (!sdk || *sdk < 1) throw Error(ErrorCode::BadCatalog, where + ": sdk must be a positive integer");
        AndroidVersion v{*sdk, std::string(trim(fields[2]))};
        if (key.back() == '*') {
            map.prefix_.emplace_back(key.substr(0, key.size() - 1), std::move(v));
        } else if (!map.exact_.emplace(key, std::move(v)).second) {
            throw Error(ErrorCode::BadCatalog, where + ": duplicate build id " + key);
        }
    }
    std::stable_sort(map.prefix_.begin(), map.prefix_.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    return map;
}

BuildIdMap BuildIdMap::load(const fs::path& path) { return parse(read_text_file(path)); }

const BuildIdMap& BuildIdMap::builtin() {
    static const BuildIdMap map = parse(builtin_buildid_map_text());
    return map;
}

std::string_view builtin_buildid_map_text() { return builtin_data::kBuildIdMap; }

std::optional<AndroidVersion> BuildIdMap::lookup(std::string_view build_id) const {
    if (auto it = exact_.find(build_id); it != exact_.end()) return it->second;
    for (const auto& [prefix, v] : prefix_) {
        if (build_id.starts_with(prefix)) return v;
    }
    return std::nullopt;
}

AndroidVersion resolve_android_version(const BuildProperties& props, const Device& device, const BuildIdMap& map) {
    const auto from_keys = [&](std::string_view sdk_key, std::string_view release_key) -> std::optional<AndroidVersion> {
        const auto sdk_text = props.get(sdk_key);
        if (!sdk_text) return std::nullopt;
        const auto sdk = to_int(*sdk_text);
        if (!sdk || *sdk < 1) return std::nullopt;
        return AndroidVersion{*sdk, props.get(release_key).value_or("")};
    };
    if (device.is_pico()) {
        if (auto v = from_keys("ro.system.build.version.sdk", "ro.system.build.version.release")) return *v;
        if (auto v = from_keys("ro.build.version.sdk", "ro.build.version.release")) return *v;
    } else {
        if (const auto id = props.get("ro.build.id")) {
            if (auto v = map.lookup(*id)) return *v;
        }
        if (auto v = from_keys("ro.build.version.sdk", "ro.build.version.release")) return *v;
        if (auto v = from_keys("ro.system.build.version.sdk", "ro.system.build.version.release")) return *v;
    }
    throw Error(ErrorCode::VersionUnresolved,
                "no usable version property in " + (props.source_path().empty() ? std::string("<text>")
                                                                                 : props.source_path().string()));
}

std::string FirmwareRecord::display_path(const fs::path& p) const {
    auto rel = p.lexically_relative(root);
    if (rel.empty()) rel = p;
    return rel.generic_string();
}

FirmwareRecord load_firmware(const fs::path& root, const Device& device, std::string version_label,
                             const LoadOptions& options) {
    std::error_code ec;
    if (!fs::exists(root, ec) || ec) throw Error(ErrorCode::UnreadableRoot, "firmware root not found: " + root.string());
    if (!is_dir(root)) throw Error(ErrorCode::UnreadableRoot, "firmware root is not a directory: " + root.string());
    fs::directory_iterator probe(root, ec);
    if (ec) throw Error(ErrorCode::UnreadableRoot, root.string() + ": " + ec.message());

    FirmwareRecord rec;
    rec.device = device;
    rec.version_label = std::move(version_label);
    rec.root = canonical_or_empty(root);

    std::map<std::string, std::string> manifest;
    const auto manifest_path = root / kManifestFileName;
    if (fs::is_regular_file(manifest_path, ec)) manifest = read_manifest(manifest_path);

    for (const auto name : kPartitions) {
        fs::path dir = root / name;
        if (auto it = manifest.find(std::string(name)); it != manifest.end()) dir = root / it->second;
        if (!is_dir(dir)) continue;
        fs::directory_iterator readable(dir, ec);
        if (ec) throw Error(ErrorCode::UnreadableRoot, dir.string() + ": " + ec.message());
        rec.partition_roots.emplace(std::string(name), canonical_or_empty(dir));
    }
    if (rec.partition_roots.empty()) {
        throw Error(ErrorCode::NoPartitions, "no system/, vendor/ or odm/ tree under " + root.string());
    }

    fs::path boot = root / "boot.img";
    if (auto it = manifest.find("boot"); it != manifest.end()) boot = root / it->second;
    if (fs::is_regular_file(boot, ec)) {
        rec.boot_image = canonical_or_empty(boot);
    } else {
        rec.diagnostics.push_back("boot image absent");
    }

    std::optional<BuildProperties> props;
    if (auto sys = rec.partition_roots.find("system"); sys != rec.partition_roots.end()) {
        for (const auto& candidate : {sys->second / "build.prop", sys->second / "system" / "build.prop"}) {
            if (fs::is_regular_file(candidate, ec)) {
                props = BuildProperties::load(candidate);
                break;
            }
        }
    }
    if (props) {
        try {
            rec.android_version = resolve_android_version(
                *props, device, options.buildid_map ? *options.buildid_map : BuildIdMap::builtin());
        } catch (const Error& e) {
            rec.diagnostics.push_back(e.what());
        }
    } else {
        rec.diagnostics.push_back("system build.prop not found; Android version unresolved");
    }

    rec.release_date = options.release_date;
    if (!rec.release_date) {
        if (auto it = manifest.find("date"); it != manifest.end()) rec.release_date = Date::parse(it->second);
    }
    if (!rec.release_date && props) {
        if (const auto utc = props->get("ro.build.date.utc")) {
            long long secs = 0;
            const auto t = trim(*utc);
            auto [p, e] = std::from_chars(t.data(), t.data() + t.size(), secs);
            if (e == std::errc() && p == t.data() + t.size() && secs > 0) rec.release_date = Date::from_unix_seconds(secs);
        }
    }
    return rec;
}

bool has_elf_magic(ByteView head) {
    return head.size() >= 4 && head[0] == 0x7F && head[1] == 'E' && head[2] == 'L' && head[3] == 'F';
}

std::vector<std::string> default_framework_apk_names() {
    return {"com.oculus.os.platform-res.apk", "framework-res.apk", "horizonos.platform-res.apk"};
}

TargetSet enumerate_targets(const FirmwareRecord& record, const EnumerateOptions& options) {
    std::vector<fs::path> roots;
    for (const auto& [name, path] : record.partition_roots) roots.push_back(path);
    const auto part = [&](std::string_view name) -> std::optional<fs::path> {
        if (auto it = record.partition_roots.find(std::string(name)); it != record.partition_roots.end()) return it->second;
        return std::nullopt;
    };
    const std::set<std::string> framework_names(options.framework_apk_names.begin(), options.framework_apk_names.end());

    TargetSet out;
    Walker walker(roots);

    Collector elves;
    std::vector<fs::path> packed_apex;
    for (const auto name : kPartitions) {
        const auto base = part(name);
        if (!base) continue;
        for (const auto* sub : {"bin", "lib", "lib64"}) {
            walker = Walker(roots);
            walker.walk(*base / sub, [&](const fs::path& v, const fs::path& c) {
                if (file_has_elf_magic(v)) elves.add(v, c);
            });
        }
        if (name == "system") {
            walker = Walker(roots);
            walker.walk(*base / "apex", [&](const fs::path& v, const fs::path& c) {
                if (v.extension() == ".apex") {
                    packed_apex.push_back(v);
                } else if (file_has_elf_magic(v)) {
                    elves.add(v, c);
                }
            });
        }
    }
    out.elf_candidates = elves.sorted();

    std::sort(packed_apex.begin(), packed_apex.end());
    for (const auto& apex : packed_apex) {
        try {
            const auto zip = ZipArchive::open(apex);
            for (const auto& e : zip.entries()) {
                if (!e.name.starts_with("lib") || e.name.find('/') == std::string::npos || e.name.back() == '/') continue;
                const auto first = std::string_view(e.name).substr(0, e.name.find('/'));
                if (first != "lib" && first != "lib64") continue;
                if (e.uncompressed_size < 4) continue;
                const auto bytes = zip.read(e);
                if (has_elf_magic(bytes)) out.archived_elf_candidates.push_back({apex, e.name});
            }
        } catch (const Error&) {
            // Not a zip container; the apex is skipped.
        }
    }
    std::sort(out.archived_elf_candidates.begin(), out.archived_elf_candidates.end());

    Collector apps, frameworks;
    const std::vector<std::pair<std::string_view, std::string_view>> app_dirs = {
        {"system", "priv-app"}, {"system", "app"}, {"vendor", "app"}, {"odm", "app"}};
    for (const auto& [pname, sub] : app_dirs) {
        const auto base = part(pname);
        if (!base) continue;
        walker = Walker(roots);
        walker.walk(*base / sub, [&](const fs::path& v, const fs::path& c) {
            if (v.extension() != ".apk") return;
            if (framework_names.count(v.filename().string())) {
                frameworks.add(v, c);
            } else {
                apps.add(v, c);
            }
        });
    }
    for (const auto name : kPartitions) {
        const auto base = part(name);
        if (!base) continue;
        walker = Walker(roots);
        walker.walk(*base / "framework", [&](const fs::path& v, const fs::path& c) {
            if (framework_names.count(v.filename().string())) frameworks.add(v, c);
        });
    }
    for (const auto& extra : options.extra_framework_apks) {
        if (fs::is_regular_file(extra)) frameworks.add(extra, canonical_or_empty(extra));
    }
    out.apk_candidates = apps.sorted();
    out.framework_apk_candidates = frameworks.sorted();

    Collector cils, binary_policies;
    for (const auto* pname : {"system", "vendor"}) {
        const auto base = part(pname);
        if (!base) continue;
        walker = Walker(roots);
        walker.walk(*base / "etc" / "selinux", [&](const fs::path& v, const fs::path& c) {
            const auto fname = v.filename().string();
            if (v.extension() == ".cil") {
                cils.add(v, c);
            } else if (fname == "sepolicy" || fname == "precompiled_sepolicy") {
                binary_policies.add(v, c);
            }
        });
    }
    std::error_code ec;
    if (const auto root_policy = record.root / "sepolicy"; fs::is_regular_file(root_policy, ec)) {
        binary_policies.add(root_policy, canonical_or_empty(root_policy));
    }
    out.cil_candidates = cils.sorted();
    out.binary_policy_candidates = binary_policies.sorted();
    out.kernel_blob = record.boot_image;
    return out;
}

}  // namespace vrfaudit::ingest
