#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "vrfaudit/error.hpp"
#include "vrfaudit/util.hpp"
#include "vrfaudit/zip.hpp"

using namespace vrfaudit;

TEST(Date, ParsesFullAndMonthForms) {
    auto d = Date::parse("2023-10-10");
    ASSERT_TRUE(d);
    EXPECT_EQ(d->to_string(), "2023-10-10");
    auto m = Date::parse("2021-05");
    ASSERT_TRUE(m);
    EXPECT_EQ(m->day, 1);
    EXPECT_FALSE(Date::parse("2021-13-01"));
    EXPECT_FALSE(Date::parse("yesterday"));
    EXPECT_LT(*Date::parse("2020-12-31"), *Date::parse("2021-01-01"));
}

TEST(Date, FromUnixSeconds) {
    EXPECT_EQ(Date::from_unix_seconds(0).to_string(), "1970-01-01");
    EXPECT_EQ(Date::from_unix_seconds(1656633600).to_string(), "2022-07-01");
    EXPECT_EQ(Date::from_unix_seconds(951782400).to_string(), "2000-02-29");
}

TEST(Sha256, KnownVector) {
    EXPECT_EQ(sha256_hex(std::string_view("abc")),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Strings, TrimSplit) {
    EXPECT_EQ(trim("  a b \t\r\n"), "a b");
    auto parts = split("a,,b", ',');
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts[1], "");
    EXPECT_TRUE(starts_with("CONFIG_X", "CONFIG_"));
    EXPECT_TRUE(ends_with("foo_prop", "_prop"));
}

TEST(NaturalLess, DigitRunsNumeric) {
    EXPECT_TRUE(natural_less("v9", "v10"));
    EXPECT_FALSE(natural_less("v10", "v9"));
    EXPECT_TRUE(natural_less("50.0", "50.1"));
    EXPECT_TRUE(natural_less("1.2.9", "1.10.0"));
    EXPECT_FALSE(natural_less("same", "same"));
}

TEST(FindBytes, Offsets) {
    const std::string hay = "xxIKCFG_STyyIKCFG_ST";
    ByteView v(reinterpret_cast<const std::uint8_t*>(hay.data()), hay.size());
    EXPECT_EQ(find_bytes(v, "IKCFG_ST"), 2u);
    EXPECT_EQ(find_bytes(v, "IKCFG_ST", 3), 12u);
    EXPECT_EQ(find_bytes(v, "nope"), std::string::npos);
}

TEST(Files, AtomicWriteAndRead) {
    testkit::TempDir dir;
    const auto p = dir / "sub/file.txt";
    write_file_atomic(p, "hello");
    EXPECT_EQ(read_text_file(p), "hello");
    write_file_atomic(p, "again");
    EXPECT_EQ(read_text_file(p), "again");
    EXPECT_THROW(read_file(dir / "missing"), Error);
}

TEST(ParallelFor, CoversEveryIndexOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Zip, RoundTripStoredAndDeflate) {
    ZipWriter w;
    const std::string a(5000, 'a');
    const std::string b = "short";
    w.add("dir/a.txt", ByteView(reinterpret_cast<const std::uint8_t*>(a.data()), a.size()), true);
    w.add("b.bin", ByteView(reinterpret_cast<const std::uint8_t*>(b.data()), b.size()), false);
    ZipArchive z(w.finish());
    ASSERT_EQ(z.entries().size(), 2u);
    const auto* ea = z.find("dir/a.txt");
    ASSERT_NE(ea, nullptr);
    EXPECT_EQ(ea->method, 8);
    EXPECT_LT(ea->compressed_size, ea->uncompressed_size);
    auto ra = z.read(*ea);
    EXPECT_EQ(std::string(ra.begin(), ra.end()), a);
    const auto* eb = z.find("b.bin");
    ASSERT_NE(eb, nullptr);
    EXPECT_EQ(eb->method, 0);
    auto rb = z.read(*eb);
    EXPECT_EQ(std::string(rb.begin(), rb.end()), b);
    EXPECT_EQ(z.find("absent"), nullptr);
}

TEST(Zip, RejectsNonZip) {
    try {
        ZipArchive z(Bytes{'n', 'o', 't', ' ', 'a', ' ', 'z', 'i', 'p'});
        FAIL() << "expected NotAZip";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotAZip);
    }
}
