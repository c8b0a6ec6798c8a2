#include <gtest/gtest.h>

#include <random>

#include "jsvuln/diff.hpp"
#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"

using namespace jsvuln;
using namespace jsvuln::diff;

namespace {

std::string fixture(const std::string& rel) { return read_file(std::string(JSVULN_FIXTURES) + "/" + rel); }

}  // namespace

TEST(ParseUnifiedDiff, SingleHunkListing) {
    const auto files = parse_unified_diff(fixture("listings/listing1.diff"));
    ASSERT_EQ(files.size(), 1u);
    EXPECT_EQ(files[0].old_path, "/path/to/original.js");
    EXPECT_EQ(files[0].new_path, "/path/to/new.js");
    ASSERT_EQ(files[0].hunks.size(), 1u);
    const Hunk& h = files[0].hunks[0];
    EXPECT_EQ(h.old_start, 4);
    EXPECT_EQ(h.old_len, 1);
    EXPECT_EQ(h.new_start, 4);
    EXPECT_EQ(h.new_len, 2);
    ASSERT_EQ(h.lines.size(), 3u);
    EXPECT_EQ(h.lines[0].tag, LineTag::add);
    EXPECT_EQ(h.lines[1].tag, LineTag::add);
    EXPECT_EQ(h.lines[2].tag, LineTag::del);
    EXPECT_EQ(h.lines[2].text, "  return bar(i);");
}

TEST(ParseUnifiedDiff, EmptyInput) { EXPECT_TRUE(parse_unified_diff("").empty()); }

TEST(ParseUnifiedDiff, TwoFileGitPatch) {
    const auto files = parse_unified_diff(fixture("two_files.diff"));
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].old_path, "lib/parse.js");
    EXPECT_EQ(files[0].new_path, "lib/parse.js");
    ASSERT_EQ(files[0].hunks.size(), 2u);
    // Hand count: 6 context + 1 deletion + 2 additions.
    const Hunk& first = files[0].hunks[0];
    EXPECT_EQ(first.old_start, 10);
    EXPECT_EQ(first.old_len, 7);
    EXPECT_EQ(first.new_len, 8);
    EXPECT_EQ(first.lines.size(), 9u);
    EXPECT_EQ(first.section, "function parse(str) {");
    const Hunk& second = files[0].hunks[1];
    EXPECT_EQ(second.old_start, 40);
    EXPECT_EQ(second.lines.size(), 3u);
    EXPECT_EQ(files[1].old_path, "README.md");
    ASSERT_EQ(files[1].hunks.size(), 1u);
    EXPECT_EQ(files[1].hunks[0].old_len, 1);  // omitted count defaults to 1
    EXPECT_EQ(files[1].hunks[0].new_len, 2);
}

TEST(ParseUnifiedDiff, CountMismatchNamesTheHunk) {
    const std::string text = "--- a/x.js\n+++ b/x.js\n@@ -1,3 +1,3 @@\n context\n-old\n";
    try {
        parse_unified_diff(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("@@ -1,3 +1,3 @@"), std::string::npos);
    }
}

TEST(ParseUnifiedDiff, GarbageBetweenDiffsIsSkipped) {
    const std::string text =
        "From 1234 Mon Sep 17 00:00:00 2001\nSubject: fix\n\n---\n x.js | 2 +-\n\n"
        "--- a/x.js\n+++ b/x.js\n@@ -2 +2 @@\n-a\n+b\n-- \n2.30.0\n";
    const auto files = parse_unified_diff(text);
    ASSERT_EQ(files.size(), 1u);
    ASSERT_EQ(files[0].hunks.size(), 1u);
    EXPECT_EQ(files[0].hunks[0].lines.size(), 2u);
}

TEST(ParseUnifiedDiff, AddedAndDeletedFiles) {
    const std::string text =
        "--- /dev/null\n+++ b/new.js\n@@ -0,0 +1,2 @@\n+a\n+b\n"
        "--- a/old.js\n+++ /dev/null\n@@ -1,1 +0,0 @@\n-gone\n\\ No newline at end of file\n";
    const auto files = parse_unified_diff(text);
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].old_path, "/dev/null");
    EXPECT_EQ(files[0].new_path, "new.js");
    EXPECT_EQ(files[1].old_path, "old.js");
    EXPECT_EQ(files[1].new_path, "/dev/null");
    EXPECT_EQ(files[1].hunks[0].lines.size(), 1u);
}

TEST(AffectedOldRange, OneLineChange) {
    Hunk h{4, 1, 4, 2, "", {}};
    EXPECT_EQ(affected_old_range(h), (LineRange{4, 5}));
}

TEST(AffectedOldRange, EqualLengths) {
    EXPECT_EQ(affected_old_range(Hunk{10, 3, 10, 3, "", {}}), (LineRange{10, 12}));
}

TEST(AffectedOldRange, PureInsertion) {
    // 7 + max(0, 4) - 1 = 10
    EXPECT_EQ(affected_old_range(Hunk{7, 0, 7, 4, "", {}}), (LineRange{7, 10}));
}

TEST(AffectedOldRange, EmptyHunkIsDegenerate) {
    EXPECT_EQ(affected_old_range(Hunk{3, 0, 3, 0, "", {}}), (LineRange{3, 3}));
}

TEST(RangesIntersect, Examples) {
    EXPECT_TRUE(ranges_intersect({1, 6}, {4, 5}));
    EXPECT_FALSE(ranges_intersect({1, 3}, {4, 5}));
    EXPECT_TRUE(ranges_intersect({5, 5}, {5, 5}));
    EXPECT_THROW(ranges_intersect({6, 1}, {4, 5}), ValidationError);
}

TEST(RangesIntersect, SymmetricAndReflexive) {
    std::mt19937 gen(7);
    std::uniform_int_distribution<int> d(0, 40);
    for (int i = 0; i < 2000; ++i) {
        int a0 = d(gen), a1 = d(gen), b0 = d(gen), b1 = d(gen);
        LineRange a{std::min(a0, a1), std::max(a0, a1)};
        LineRange b{std::min(b0, b1), std::max(b0, b1)};
        EXPECT_EQ(ranges_intersect(a, b), ranges_intersect(b, a));
        EXPECT_TRUE(ranges_intersect(a, a));
        // Brute force: some line lies in both.
        bool shared = false;
        for (int l = a.start; l <= a.end; ++l) shared |= (l >= b.start && l <= b.end);
        EXPECT_EQ(ranges_intersect(a, b), shared);
    }
}

TEST(UnifiedDiffProperty, ReserializeRoundTripAndRangeShape) {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int nfiles = 1 + static_cast<int>(gen() % 3);
        for (int f = 0; f < nfiles; ++f) {
            text += "--- a/f" + std::to_string(f) + ".js\n+++ b/f" + std::to_string(f) + ".js\n";
            int old_line = 1;
            const int nh = 1 + static_cast<int>(gen() % 3);
            for (int h = 0; h < nh; ++h) {
                old_line += static_cast<int>(gen() % 20);
                std::vector<char> tags;
                const int nl = static_cast<int>(gen() % 8);
                int ol = 0, nw = 0;
                for (int k = 0; k < nl; ++k) {
                    const char tag = " +-"[gen() % 3];
                    tags.push_back(tag);
                    if (tag != '+') ++ol;
                    if (tag != '-') ++nw;
                }
                text += "@@ -" + std::to_string(old_line) + "," + std::to_string(ol) + " +" +
                        std::to_string(old_line) + "," + std::to_string(nw) + " @@\n";
                for (char t : tags) text += std::string(1, t) + "line" + std::to_string(gen() % 100) + "\n";
                old_line += ol;
            }
        }
        const auto parsed = parse_unified_diff(text);
        EXPECT_EQ(to_unified_diff(parsed), text);
        EXPECT_EQ(parse_unified_diff(to_unified_diff(parsed)), parsed);
        for (const auto& fd : parsed) {
            for (const auto& h : fd.hunks) {
                const auto r = affected_old_range(h);
                EXPECT_EQ(r.start, h.old_start);
                EXPECT_GE(r.end, r.start);
            }
        }
    }
}

TEST(NormalizePath, StripsLeadingSlashAndDot) {
    EXPECT_EQ(normalize_path("/path/to/original.js"), "path/to/original.js");
    EXPECT_EQ(normalize_path("./lib/a.js"), "lib/a.js");
    EXPECT_EQ(normalize_path("lib\\a.js"), "lib/a.js");
}
