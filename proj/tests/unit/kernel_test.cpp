#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "support.hpp"
#include "vrfaudit/compress.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/kernel_audit.hpp"

using namespace vrfaudit;
using namespace vrfaudit::kernel;
using nlohmann::json;

namespace {

json boot_expected() {
    std::ifstream in(testkit::fixture("boot/expected.json"));
    return json::parse(in);
}

Bytes wrap_config(std::string_view text, std::string_view prefix = "") {
    Bytes blob(prefix.begin(), prefix.end());
    const std::string st = "IKCFG_ST";
    blob.insert(blob.end(), st.begin(), st.end());
    auto gz = compress::gzip(Bytes(text.begin(), text.end()));
    blob.insert(blob.end(), gz.begin(), gz.end());
    const std::string ed = "IKCFG_ED";
    blob.insert(blob.end(), ed.begin(), ed.end());
    return blob;
}

std::map<std::string, MitigationStatus> by_id(const std::vector<MitigationVerdict>& vs) {
    std::map<std::string, MitigationStatus> m;
    for (const auto& v : vs) m[v.entry_id] = v.status;
    return m;
}

}  // namespace

TEST(BootImage, FixturesMatchRecordedLayout) {
    const auto expected = boot_expected();
    for (const auto& [name, want] : expected.items()) {
        const auto blob = read_file(testkit::fixture("boot/" + name));
        const auto img = parse_boot_image(blob);
        EXPECT_EQ(img.header_version, want["header_version"].get<std::uint32_t>()) << name;
        EXPECT_EQ(img.page_size, want["page_size"].get<std::uint32_t>()) << name;
        EXPECT_EQ(img.kernel.size(), want["kernel_size"].get<std::size_t>()) << name;
        EXPECT_EQ(sha256_hex(img.kernel), want["kernel_sha256"].get<std::string>()) << name;
        EXPECT_EQ(sha256_hex(img.ramdisk), want["ramdisk_sha256"].get<std::string>()) << name;
        EXPECT_EQ(sha256_hex(extract_ikconfig_text(img.kernel)), want["config_sha256"].get<std::string>()) << name;
        EXPECT_EQ(extract_kernel_version(img.kernel).to_string(), want["kernel_version"].get<std::string>()) << name;
    }
}

TEST(BootImage, ExtractedConfigEqualsSource) {
    const auto text = read_text_file(testkit::fixture("boot/config.txt"));
    const auto img = parse_boot_image(read_file(testkit::fixture("boot/v3_lz4_frame.img")));
    EXPECT_EQ(extract_ikconfig_text(img.kernel), text);
}

TEST(BootImage, BadInputs) {
    try {
        parse_boot_image(read_file(testkit::fixture("boot/bad_magic.img")));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadMagic);
    }
    try {
        parse_boot_image(read_file(testkit::fixture("boot/truncated.img")));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TruncatedImage);
    }
}

TEST(KernelConfig, ParsesStates) {
    auto c = KernelConfig::parse(
        "CONFIG_A=y\nCONFIG_B=m\n# CONFIG_C is not set\nCONFIG_D=\"str\"\nCONFIG_E=0x10\nnot_config=y\n# comment\n");
    EXPECT_TRUE(c.enabled("CONFIG_A"));
    EXPECT_TRUE(c.enabled("CONFIG_B"));
    EXPECT_EQ(c.state("CONFIG_B")->state, OptionState::Module);
    EXPECT_FALSE(c.enabled("CONFIG_C"));
    EXPECT_TRUE(c.mentioned("CONFIG_C"));
    EXPECT_EQ(c.state("CONFIG_D")->state, OptionState::Value);
    EXPECT_EQ(c.state("CONFIG_E")->text, "0x10");
    EXPECT_FALSE(c.mentioned("not_config"));
    EXPECT_EQ(c.options().size(), 5u);
}

TEST(Ikconfig, SkipsDecoyMarkerAndErrors) {
    const std::string text = "CONFIG_X=y\n";
    const auto blob = wrap_config(text, "junk IKCFG_ST not gzip here ");
    EXPECT_EQ(extract_ikconfig_text(blob), text);

    try {
        extract_ikconfig_text(Bytes{'n', 'o', 'n', 'e'});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoEmbeddedConfig);
    }
    const std::string broken = "IKCFG_ST\x1f\x8b\x08garbage";
    try {
        extract_ikconfig_text(Bytes(broken.begin(), broken.end()));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CorruptConfigStream);
    }
}

TEST(Ikconfig, FoundInsideGzipLayer) {
    const std::string text = "CONFIG_NESTED=y\n";
    auto inner = wrap_config(text, "Linux version 4.19.157-perf (builder@host) #1 SMP\n");
    auto outer = compress::gzip(inner);
    Bytes blob = {'M', 'Z', 0, 0};
    blob.insert(blob.end(), outer.begin(), outer.end());
    EXPECT_EQ(extract_ikconfig_text(blob), text);
    const auto v = extract_kernel_version(blob);
    EXPECT_EQ(v.to_string(), "4.19.157");
    EXPECT_EQ(v.series(), (KernelSeries{4, 19}));
}

TEST(KernelVersion, BannerMissing) {
    try {
        extract_kernel_version(Bytes{'L', 'i', 'n', 'u', 'x'});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BannerNotFound);
    }
}

TEST(Requirement, ResolvesByAndroidRelease) {
    EXPECT_EQ(resolve_requirement(Requirement::Must, 25), ResolvedRequirement::Must);
    EXPECT_EQ(resolve_requirement(Requirement::StronglyRecommended10, 25), ResolvedRequirement::Suggested);
    EXPECT_EQ(resolve_requirement(Requirement::StronglyRecommended10, 29), ResolvedRequirement::StronglyRecommended);
    EXPECT_EQ(resolve_requirement(Requirement::StronglyRecommended12, 29), ResolvedRequirement::Suggested);
    EXPECT_EQ(resolve_requirement(Requirement::StronglyRecommended12, 31), ResolvedRequirement::StronglyRecommended);
    EXPECT_EQ(resolve_requirement(Requirement::StronglyRecommended12, 0), ResolvedRequirement::StronglyRecommended);
    EXPECT_EQ(resolve_requirement(Requirement::Suggested, 34), ResolvedRequirement::Suggested);
}

TEST(Catalog, BuiltinShapeAndRoundTrip) {
    const auto& c = default_catalog();
    ASSERT_EQ(c.size(), 17u);
    const auto again = parse_catalog(serialize_catalog(c));
    ASSERT_EQ(again.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(again[i].id, c[i].id);
        EXPECT_EQ(again[i].clauses, c[i].clauses);
        EXPECT_EQ(again[i].requirement, c[i].requirement);
    }
}

TEST(Catalog, RejectsBadLines) {
    EXPECT_THROW(parse_catalog("a | MUST\n"), Error);
    EXPECT_THROW(parse_catalog("a | SOMETIMES | CONFIG_A\n"), Error);
    EXPECT_THROW(parse_catalog("a | MUST | NOT_CONFIG\n"), Error);
    EXPECT_THROW(parse_catalog("a | MUST | CONFIG_A\na | MUST | CONFIG_B\n"), Error);
    EXPECT_THROW(parse_catalog("# only comments\n"), Error);
    try {
        parse_catalog("\n\nx | MUST | bad\n");
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Mitigations, ModuleAndPredatesFlags) {
    auto c = KernelConfig::parse("CONFIG_VMAP_STACK=m\n# CONFIG_DEBUG_LIST is not set\n");
    auto vs = evaluate_mitigations(c, 31);
    for (const auto& v : vs) {
        if (v.entry_id == "vmap_stack") {
            EXPECT_EQ(v.status, MitigationStatus::Enabled);
            EXPECT_TRUE(v.via_module);
        } else if (v.entry_id == "debug_list") {
            EXPECT_EQ(v.status, MitigationStatus::Absent);
            EXPECT_FALSE(v.predates_option);
        } else if (v.entry_id == "arm64_uao") {
            EXPECT_TRUE(v.predates_option);
        }
    }
}

TEST(Mitigations, FixtureConfigMissesOnlyHeapInit) {
    const auto c = KernelConfig::parse(read_text_file(testkit::fixture("boot/config.txt")));
    const auto m = by_id(evaluate_mitigations(c, 31));
    std::size_t absent = 0;
    for (const auto& [id, st] : m) {
        if (st == MitigationStatus::Absent) {
            ++absent;
            EXPECT_EQ(id, "init_on_alloc");
        }
    }
    EXPECT_EQ(absent, 1u);
}

TEST(Lts, TableParsingAndOrdering) {
    EXPECT_THROW(parse_lts_table("5.4 | 2019-11-24\n4.19 | 2020-01-01\n"), Error);
    EXPECT_THROW(parse_lts_table("5.4 | 2019-11-24\n5.10 | 2019-01-01\n"), Error);
    EXPECT_THROW(parse_lts_table("five | 2019-11-24\n"), Error);
    EXPECT_EQ(default_lts_table().front().series, (KernelSeries{3, 18}));
}

// Device release month, shipped kernel series, newest LTS at that time.
struct LtsCase {
    const char* device;
    const char* date;
    KernelSeries shipped;
    KernelSeries latest;
};

TEST(Lts, DeviceLaunchLag) {
    const LtsCase cases[] = {
        {"quest", "2019-05-21", {4, 4}, {4, 19}},
        {"quest2", "2020-10-13", {4, 19}, {5, 4}},
        {"quest_pro", "2022-10-25", {4, 19}, {5, 15}},
        {"quest3", "2023-10-10", {5, 10}, {6, 1}},
        {"pico_neo3", "2021-05-10", {4, 19}, {5, 10}},
        // 6.6 was first released 2023-10-30, after this device shipped.
        {"pico4", "2022-10-18", {4, 19}, {5, 15}},
    };
    for (const auto& c : cases) {
        KernelVersion v{c.shipped.major, c.shipped.minor, 0, ""};
        const auto lag = lts_lag(v, Date::parse(c.date));
        ASSERT_TRUE(lag.determinate) << c.device;
        ASSERT_TRUE(lag.latest_lts) << c.device;
        EXPECT_EQ(*lag.latest_lts, c.latest) << c.device;
        EXPECT_TRUE(lag.lagging) << c.device;
        EXPECT_GT(lag.series_behind, 0) << c.device;
    }
}

TEST(Lts, IndeterminateWithoutDateAndCurrentSeries) {
    KernelVersion v{5, 10, 1, ""};
    EXPECT_FALSE(lts_lag(v, std::nullopt).determinate);
    const auto lag = lts_lag(v, Date::parse("2021-02-01"));
    EXPECT_FALSE(lag.lagging);
    EXPECT_EQ(lag.series_behind, 0);
}
