#include "vrfaudit/apk_audit.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "vrfaudit/error.hpp"

namespace vrfaudit::apk {

namespace {

constexpr std::uint32_t kNoIndex = 0xFFFFFFFF;
constexpr std::uint32_t kUtf8Flag = 1u << 8;

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::MalformedAxml, why); }

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

std::vector<std::string> read_string_pool(ByteView chunk, std::size_t header_size) {
    if (chunk.size() < 28 || header_size < 28 || header_size > chunk.size()) malformed("string pool header truncated");
    const auto* c = chunk.data();
    const std::uint32_t count = load_le32(c + 8);
    const std::uint32_t flags = load_le32(c + 16);
    const std::uint32_t strings_start = load_le32(c + 20);
    if (count > (chunk.size() - header_size) / 4) malformed("string pool offsets truncated");
    if (strings_start > chunk.size()) malformed("string pool data outside chunk");
    const bool utf8 = flags & kUtf8Flag;
    std::vector<std::string> pool;
    pool.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = static_cast<std::size_t>(strings_start) + load_le32(c + header_size + i * 4);
        if (at >= chunk.size()) malformed("string offset outside pool");
        std::size_t p = at;
        const auto need = [&](std::size_t n) {
            if (n > chunk.size() - p) malformed("string pool entry truncated");
        };
        std::string s;
        if (utf8) {
            need(1);
            if (c[p] & 0x80) ++p;  // UTF-16 length, second byte
            ++p;
            need(1);
            std::size_t len = c[p++];
            if (len & 0x80) {
                need(1);
                len = ((len & 0x7F) << 8) | c[p++];
            }
            need(len);
            s.assign(reinterpret_cast<const char*>(c + p), len);
        } else {
            need(2);
            std::size_t len = load_le16(c + p);
            p += 2;
            if (len & 0x8000) {
                need(2);
                len = ((len & 0x7FFF) << 16) | load_le16(c + p);
                p += 2;
            }
            need(len * 2);
            for (std::size_t k = 0; k < len; ++k) {
                std::uint32_t u = load_le16(c + p + k * 2);
                if (u >= 0xD800 && u < 0xDC00 && k + 1 < len) {
                    const std::uint32_t lo = load_le16(c + p + (k + 1) * 2);
                    if (lo >= 0xDC00 && lo < 0xE000) {
                        u = 0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00);
                        ++k;
                    }
                }
                append_utf8(s, u);
            }
        }
        pool.push_back(std::move(s));
    }
    return pool;
}

std::string pool_string(const std::vector<std::string>& pool, std::uint32_t idx) {
    if (idx == kNoIndex) return {};
    if (idx >= pool.size()) malformed("string index " + std::to_string(idx) + " outside pool");
    return pool[idx];
}

const AxmlElement* child(const AxmlElement& e, std::string_view name) {
    for (const auto& c : e.children) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::string android_name(const AxmlDocument& doc, const AxmlElement& e) {
    const auto* a = e.attribute(kAttrName, "name");
    if (!a) return {};
    return attribute_text(doc, *a).value_or("");
}

TriState read_flag(const AxmlDocument& doc, const AxmlElement* app, std::uint32_t id, std::string_view name) {
    if (!app) return TriState::Unset;
    const auto* a = app->attribute(id, name);
    if (!a) return TriState::Unset;
    if (a->type == kTypeIntBoolean || a->type == kTypeIntDec || a->type == kTypeIntHex) {
        return a->data != 0 ? TriState::True : TriState::False;
    }
    // Resource references (@bool/...) cannot be resolved without resources.arsc.
    if (a->type == kTypeReference) return TriState::Unset;
    const auto text = attribute_text(doc, *a);
    if (text == "true") return TriState::True;
    if (text == "false") return TriState::False;
    return TriState::Unset;
}

bool has_launcher_filter(const AxmlDocument& doc, const AxmlElement& component) {
    for (const auto& filter : component.children) {
        if (filter.name != "intent-filter") continue;
        bool main = false, launcher = false;
        for (const auto& item : filter.children) {
            const auto n = android_name(doc, item);
            if (item.name == "action" && n == "android.intent.action.MAIN") main = true;
            if (item.name == "category" && n == "android.intent.category.LAUNCHER") launcher = true;
        }
        if (main && launcher) return true;
    }
    return false;
}

}  // namespace

const AxmlAttribute* AxmlElement::attribute(std::uint32_t resource_id, std::string_view fallback_name) const {
    if (resource_id != 0) {
        for (const auto& a : attributes) {
            if (a.resource_id == resource_id) return &a;
        }
    }
    for (const auto& a : attributes) {
        if (a.name == fallback_name && (a.ns.empty() || a.ns == kAndroidNs)) return &a;
    }
    return nullptr;
}

AxmlDocument parse_axml(ByteView bytes) {
    if (bytes.size() < 8) malformed("file shorter than a chunk header");
    if (load_le16(bytes.data()) != kResXml) malformed("leading chunk is not RES_XML_TYPE");
    const std::size_t total = std::min<std::size_t>(load_le32(bytes.data() + 4), bytes.size());
    std::size_t pos = load_le16(bytes.data() + 2);
    if (pos < 8 || pos > total) malformed("bad XML header size");

    AxmlDocument doc;
    std::vector<AxmlElement> stack;
    while (pos < total) {
        if (total - pos < 8) malformed("truncated chunk header at offset " + std::to_string(pos));
        const auto* h = bytes.data() + pos;
        const std::uint16_t type = load_le16(h);
        const std::size_t header_size = load_le16(h + 2);
        const std::size_t size = load_le32(h + 4);
        if (size < 8 || size > total - pos || header_size < 8 || header_size > size) {
            malformed("chunk at offset " + std::to_string(pos) + " overruns the document");
        }
        const auto chunk = bytes.subspan(pos, size);
        switch (type) {
            case kResStringPool:
                doc.string_pool = read_string_pool(chunk, header_size);
                break;
            case kResXmlResourceMap:
                doc.resource_map.clear();
                for (std::size_t k = header_size; k + 4 <= size; k += 4) doc.resource_map.push_back(load_le32(h + k));
                break;
            case kResXmlStartNamespace:
            case kResXmlEndNamespace:
            case kResXmlCdata:
                break;
            case kResXmlStartElement: {
                if (size < header_size + 20) malformed("start element truncated");
                const auto* x = h + header_size;
                AxmlElement e;
                e.ns = pool_string(doc.string_pool, load_le32(x));
                e.name = pool_string(doc.string_pool, load_le32(x + 4));
                const std::size_t attr_start = load_le16(x + 8);
                const std::size_t attr_size = load_le16(x + 10);
                const std::size_t attr_count = load_le16(x + 12);
                if (attr_count > 0 && (attr_size < 20 || header_size + attr_start + attr_size * attr_count > size)) {
                    malformed("attributes overrun element chunk");
                }
                for (std::size_t k = 0; k < attr_count; ++k) {
                    const auto* a = x + attr_start + k * attr_size;
                    AxmlAttribute attr;
                    attr.ns = pool_string(doc.string_pool, load_le32(a));
                    const auto name_idx = load_le32(a + 4);
                    attr.name = pool_string(doc.string_pool, name_idx);
                    if (name_idx < doc.resource_map.size()) attr.resource_id = doc.resource_map[name_idx];
                    const auto raw_idx = load_le32(a + 8);
                    if (raw_idx != kNoIndex) attr.raw = pool_string(doc.string_pool, raw_idx);
                    attr.type = a[15];
                    attr.data = load_le32(a + 16);
                    e.attributes.push_back(std::move(attr));
                }
                stack.push_back(std::move(e));
                break;
            }
            case kResXmlEndElement: {
                if (stack.empty()) malformed("end element without matching start");
                if (size >= header_size + 8) {
                    const auto name = pool_string(doc.string_pool, load_le32(h + header_size + 4));
                    if (name != stack.back().name) malformed("end element </" + name + "> closes <" + stack.back().name + ">");
                }
                auto done = std::move(stack.back());
                stack.pop_back();
                if (stack.empty()) {
                    if (!doc.root) doc.root = std::move(done);
                } else {
                    stack.back().children.push_back(std::move(done));
                }
                break;
            }
            default:
                ++doc.skipped_chunks;
                break;
        }
        pos += size;
    }
    if (!stack.empty()) malformed("unclosed element <" + stack.back().name + ">");
    return doc;
}

std::optional<std::string> attribute_text(const AxmlDocument& doc, const AxmlAttribute& attr) {
    switch (attr.type) {
        case kTypeString:
            if (attr.data < doc.string_pool.size()) return doc.string_pool[attr.data];
            return attr.raw;
        case kTypeIntBoolean: return std::string(attr.data ? "true" : "false");
        case kTypeIntDec: return std::to_string(static_cast<std::int32_t>(attr.data));
        case kTypeIntHex: {
            char buf[16];
            std::snprintf(buf, sizeof buf, "0x%x", attr.data);
            return std::string(buf);
        }
        default: return attr.raw;
    }
}

std::string_view to_string(TriState t) {
    switch (t) {
        case TriState::Unset: return "unset";
        case TriState::False: return "false";
        case TriState::True: return "true";
    }
    return "unset";
}

std::string_view to_string(ProtectionBucket b) {
    switch (b) {
        case ProtectionBucket::Dangerous: return "DANGEROUS";
        case ProtectionBucket::Normal: return "NORMAL";
        case ProtectionBucket::Signature: return "SIGNATURE";
        case ProtectionBucket::SignatureOrSystem: return "SIGNATURE_OR_SYSTEM";
        case ProtectionBucket::Others: return "OTHERS";
    }
    return "OTHERS";
}

std::optional<ProtectionBucket> parse_bucket(std::string_view text) {
    for (auto b : {ProtectionBucket::Dangerous, ProtectionBucket::Normal, ProtectionBucket::Signature,
                   ProtectionBucket::SignatureOrSystem, ProtectionBucket::Others}) {
        if (to_string(b) == text) return b;
    }
    return std::nullopt;
}

ProtectionBucket bucket_for_raw(std::uint32_t raw) {
    switch (raw & 0x0F) {
        case 0: return ProtectionBucket::Normal;
        case 1: return ProtectionBucket::Dangerous;
        case 2: return ProtectionBucket::Signature;
        case 3: return ProtectionBucket::SignatureOrSystem;
        default: return ProtectionBucket::Others;
    }
}

std::optional<std::uint32_t> parse_protection_level(std::string_view text) {
    static const std::map<std::string_view, std::uint32_t> tokens = {
        {"normal", 0x0},
        {"dangerous", 0x1},
        {"signature", 0x2},
        {"signatureOrSystem", 0x3},
        {"internal", 0x4},
        {"privileged", 0x10},
        {"system", 0x10},
        {"development", 0x20},
        {"appop", 0x40},
        {"pre23", 0x80},
        {"installer", 0x100},
        {"verifier", 0x200},
        {"preinstalled", 0x400},
        {"setup", 0x800},
        {"instant", 0x1000},
        {"ephemeral", 0x1000},
        {"runtime", 0x2000},
        {"oem", 0x4000},
        {"vendorPrivileged", 0x8000},
        {"textClassifier", 0x10000},
        {"configurator", 0x80000},
        {"incidentReportApprover", 0x100000},
        {"appPredictor", 0x200000},
        {"module", 0x400000},
        {"companion", 0x800000},
        {"retailDemo", 0x1000000},
        {"recents", 0x2000000},
        {"role", 0x4000000},
        {"knownSigner", 0x8000000},
    };
    text = trim(text);
    if (text.starts_with("0x") || text.starts_with("0X")) {
        std::uint32_t v = 0;
        auto [p, ec] = std::from_chars(text.data() + 2, text.data() + text.size(), v, 16);
        if (ec == std::errc() && p == text.data() + text.size()) return v;
        return std::nullopt;
    }
    if (!text.empty() && text.front() >= '0' && text.front() <= '9') {
        std::uint32_t v = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && p == text.data() + text.size()) return v;
        return std::nullopt;
    }
    std::uint32_t value = 0;
    for (auto tok : split(text, '|')) {
        auto it = tokens.find(trim(tok));
        if (it == tokens.end()) return std::nullopt;
        value |= it->second;
    }
    return value;
}

std::string_view to_string(AppCategory c) {
    switch (c) {
        case AppCategory::UserLaunchable: return "USER_LAUNCHABLE";
        case AppCategory::AndroidSystem: return "ANDROID_SYSTEM";
        case AppCategory::VendorSpecific: return "VENDOR_SPECIFIC";
    }
    return "VENDOR_SPECIFIC";
}

AppCategory categorize(std::string_view package_name, bool has_launcher_activity) {
    if (package_name.starts_with("com.android.")) return AppCategory::AndroidSystem;
    if (has_launcher_activity) return AppCategory::UserLaunchable;
    return AppCategory::VendorSpecific;
}

ManifestReport extract_manifest_report(const AxmlDocument& doc) {
    ManifestReport r;
    if (!doc.root || doc.root->name != "manifest") return r;
    const auto& manifest = *doc.root;
    if (const auto* pkg = manifest.attribute(0, "package")) r.package_name = attribute_text(doc, *pkg).value_or("");

    const auto* app = child(manifest, "application");
    r.flags.allow_backup = read_flag(doc, app, kAttrAllowBackup, "allowBackup");
    r.flags.debuggable = read_flag(doc, app, kAttrDebuggable, "debuggable");
    r.flags.uses_cleartext_traffic = read_flag(doc, app, kAttrUsesCleartextTraffic, "usesCleartextTraffic");

    std::map<std::string, DeclaredPermission> declared;
    for (const auto& e : manifest.children) {
        if (e.name == "uses-permission" || e.name == "uses-permission-sdk-23" || e.name == "uses-permission-sdk-m") {
            auto n = android_name(doc, e);
            if (!n.empty()) r.used_permissions.insert(std::move(n));
        } else if (e.name == "permission") {
            DeclaredPermission p;
            p.name = android_name(doc, e);
            if (p.name.empty()) continue;
            if (const auto* level = e.attribute(kAttrProtectionLevel, "protectionLevel")) {
                if (level->type == kTypeIntDec || level->type == kTypeIntHex) {
                    p.protection_level_raw = level->data;
                } else if (auto text = attribute_text(doc, *level)) {
                    p.protection_level_raw = parse_protection_level(*text).value_or(0);
                }
            }
            p.bucket = bucket_for_raw(p.protection_level_raw);
            declared.emplace(p.name, std::move(p));
        }
    }
    for (auto& [name, p] : declared) r.declared_permissions.push_back(std::move(p));

    if (app) {
        for (const auto& comp : app->children) {
            if ((comp.name == "activity" || comp.name == "activity-alias") && has_launcher_filter(doc, comp)) {
                r.has_launcher_activity = true;
                break;
            }
        }
    }
    r.category = categorize(r.package_name, r.has_launcher_activity);
    return r;
}

ApkArchive::ApkArchive(ZipArchive zip) : zip_(std::move(zip)) {
    manifest_ = zip_.find(kManifestEntry);
    if (!manifest_) throw Error(ErrorCode::NoManifest, "archive has no AndroidManifest.xml");
}

ApkArchive ApkArchive::open(const std::filesystem::path& path) { return ApkArchive(ZipArchive::open(path)); }

ApkArchive ApkArchive::from_bytes(Bytes data) { return ApkArchive(ZipArchive(std::move(data))); }

Bytes ApkArchive::manifest_bytes() const { return zip_.read(*manifest_); }

std::vector<std::string> ApkArchive::native_library_entries() const {
    std::vector<std::string> out;
    for (const auto& e : zip_.entries()) {
        if (e.name.starts_with("lib/") && e.name.back() != '/') out.push_back(e.name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

FlagCounts summarize_flags(const std::vector<ManifestReport>& reports) {
    FlagCounts c;
    for (const auto& r : reports) {
        c.uses_cleartext_traffic += r.flags.uses_cleartext_traffic == TriState::True;
        c.allow_backup += r.flags.allow_backup == TriState::True;
        c.debuggable += r.flags.debuggable == TriState::True;
    }
    return c;
}

}  // namespace vrfaudit::apk
