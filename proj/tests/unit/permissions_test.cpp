#include <gtest/gtest.h>

#include "vrfaudit/error.hpp"
#include "vrfaudit/permission_analysis.hpp"

using namespace vrfaudit;
using namespace vrfaudit::permissions;
using apk::DeclaredPermission;

namespace {

ManifestReport app(std::string pkg, std::set<std::string> used, std::vector<DeclaredPermission> declared = {}) {
    ManifestReport r;
    r.package_name = std::move(pkg);
    r.used_permissions = std::move(used);
    for (auto& d : declared) d.bucket = apk::bucket_for_raw(d.protection_level_raw);
    r.declared_permissions = std::move(declared);
    return r;
}

}  // namespace

TEST(Ledger, FrameworkWinsAndConflictsLogged) {
    const auto fw = app("android", {}, {{"android.permission.CAMERA", 1}, {"android.permission.INTERNET", 0}});
    const auto a = app("com.a", {"android.permission.CAMERA", "com.a.X"}, {{"android.permission.CAMERA", 2}, {"com.a.X", 2}});
    const auto b = app("com.b", {"com.a.X", "com.ghost.Y"}, {{"com.a.X", 3}});
    const auto ledger = build_ledger({{"framework:framework-res.apk", &fw}}, {{"app/a", &a}, {"app/b", &b}});

    EXPECT_EQ(ledger.declared.at("android.permission.CAMERA").protection_level_raw, 1u);
    EXPECT_EQ(ledger.declared.at("android.permission.CAMERA").source, "framework:framework-res.apk");
    EXPECT_EQ(ledger.declared.at("com.a.X").source, "app/a");
    ASSERT_EQ(ledger.conflicts.size(), 2u);
    EXPECT_EQ(ledger.conflicts[0].permission, "android.permission.CAMERA");
    EXPECT_EQ(ledger.conflicts[1].dropped_source, "app/b");
    EXPECT_EQ(ledger.used_by.at("com.a.X"), (std::set<std::string>{"com.a", "com.b"}));

    const auto inc = detect_inconsistencies(ledger);
    EXPECT_EQ(inc.residual, (std::set<std::string>{"android.permission.INTERNET"}));
    EXPECT_EQ(inc.phantom, (std::set<std::string>{"com.ghost.Y"}));
    EXPECT_TRUE(detect_inconsistencies(ledger, {"com.ghost.Y"}).phantom.empty());
}

TEST(Ledger, SameLevelDuplicateIsNotAConflict) {
    const auto a = app("com.a", {}, {{"p", 2}});
    const auto b = app("com.b", {}, {{"p", 2}});
    EXPECT_TRUE(build_ledger({}, {{"a", &a}, {"b", &b}}).conflicts.empty());
}

TEST(SetAlgebra, Basic) {
    const auto r = set_inconsistencies({"a", "b", "c"}, {"b", "d"});
    EXPECT_EQ(r.residual, (std::set<std::string>{"a", "c"}));
    EXPECT_EQ(r.phantom, (std::set<std::string>{"d"}));
    EXPECT_EQ(set_inconsistencies({}, {}), InconsistencyReport{});
}

TEST(BucketMeans, PerAppAverages) {
    const auto fw = app("android", {}, {{"D", 1}, {"N", 0}, {"S", 0x12}, {"SS", 3}, {"O", 7}});
    const auto a = app("com.a", {"D", "N", "S", "ghost"});
    const auto b = app("com.b", {"D", "SS", "O"});
    const auto c = app("com.c", {});
    const auto ledger = build_ledger({{"framework", &fw}}, {{"a", &a}, {"b", &b}, {"c", &c}});
    const auto m = per_app_bucket_means({&a, &b, &c}, ledger);
    EXPECT_EQ(m.app_count, 3u);
    // Order: DANGEROUS, NORMAL, SIGNATURE, SIGNATURE_OR_SYSTEM, OTHERS.
    EXPECT_EQ(m.totals, (std::array<std::size_t, 5>{2, 1, 1, 1, 2}));
    EXPECT_DOUBLE_EQ(m.means[0], 0.67);
    EXPECT_DOUBLE_EQ(m.means[1], 0.33);
    EXPECT_DOUBLE_EQ(m.means[4], 0.67);
    EXPECT_EQ(m.others_unresolved, 1u);
    EXPECT_EQ(m.others_unmapped_level, 1u);
    try {
        per_app_bucket_means({}, ledger);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyAppSet);
    }
}

TEST(Round2, HalfAwayFromZero) {
    EXPECT_DOUBLE_EQ(round2(8.1666), 8.17);
    EXPECT_DOUBLE_EQ(round2(0.0), 0.0);
}

TEST(ProtectionChange, Directions) {
    EXPECT_EQ(classify_change(0, 1), Direction::Tightened);
    EXPECT_EQ(classify_change(1, 2), Direction::Tightened);
    EXPECT_EQ(classify_change(2, 0), Direction::Loosened);
    EXPECT_EQ(classify_change(3, 1), Direction::Loosened);
    EXPECT_EQ(classify_change(2, 3), Direction::FlagOnly);
    EXPECT_EQ(classify_change(2, 0x12), Direction::FlagOnly);
    EXPECT_EQ(classify_change(7, 0), Direction::FlagOnly);
    EXPECT_EQ(to_string(Direction::Loosened), "LOOSENED");
}

TEST(ProtectionChange, VersionSequence) {
    const std::vector<std::pair<std::string, DeclarationTable>> versions = {
        {"v1", {{"a", 2}, {"b", 0}, {"gone", 1}}},
        {"v2", {{"a", 0}, {"b", 0}, {"new", 3}}},
        {"v3", {{"a", 0}, {"b", 1}, {"new", 3}}},
    };
    const auto ev = protection_changes(versions);
    ASSERT_EQ(ev.size(), 4u);
    EXPECT_EQ(ev[0].permission, "a");
    EXPECT_EQ(ev[0].direction, Direction::Loosened);
    EXPECT_EQ(ev[1].permission, "gone");
    EXPECT_EQ(ev[1].direction, Direction::Removed);
    EXPECT_FALSE(ev[1].new_raw);
    EXPECT_EQ(ev[2].permission, "new");
    EXPECT_EQ(ev[2].direction, Direction::Added);
    EXPECT_EQ(ev[3].from_version, "v2");
    EXPECT_EQ(ev[3].direction, Direction::Tightened);
    EXPECT_TRUE(protection_changes({versions[0]}).empty());
}
