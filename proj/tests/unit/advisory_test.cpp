#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "jsvuln/advisory.hpp"
#include "jsvuln/error.hpp"

using namespace jsvuln;
using namespace jsvuln::advisory;

namespace {

std::string fixture(const std::string& rel) { return std::string(JSVULN_FIXTURES) + "/advisories/" + rel; }

}  // namespace

TEST(IngestAdvisories, NspGatherFileHandChecked) {
    const auto r = ingest_advisories(fixture("nsp_gather.json"), Source::nsp);
    EXPECT_EQ(r.skipped, 0);
    ASSERT_EQ(r.entries.size(), 5u);
    for (const auto& e : r.entries) EXPECT_EQ(e.source, Source::nsp);

    EXPECT_EQ(r.entries[0].id, "nsp:46");
    EXPECT_EQ(r.entries[0].module_name, "ms");
    EXPECT_EQ(r.entries[0].title, "Regular Expression Denial of Service");
    EXPECT_EQ(r.entries[0].reference_urls,
              (std::vector<std::string>{"https://github.com/vercel/ms/commit/305f2ddcd4eff7cc7c518aca6bb2b2d2daad8fef",
                                        "https://nodesecurity.io/advisories/46"}));

    EXPECT_EQ(r.entries[1].id, "nsp:118");
    EXPECT_EQ(r.entries[1].reference_urls,
              (std::vector<std::string>{"https://github.com/ljharb/qs/pull/201", "https://github.com/ljharb/qs/issues/200"}));

    EXPECT_EQ(r.entries[2].id, "nsp:130");
    EXPECT_TRUE(r.entries[2].reference_urls.empty());

    EXPECT_EQ(r.entries[3].id, "nsp:214");
    EXPECT_EQ(r.entries[3].reference_urls,
              (std::vector<std::string>{"https://github.com/npm/node-tar/commit/b0c58433c22f5e7fe8b1c76373f27e3f81dcd4c8",
                                        "https://example.org/advisory?id=214#top"}));

    EXPECT_EQ(r.entries[4].id, "nsp:530");
    EXPECT_EQ(r.entries[4].reference_urls.size(), 1u);
}

TEST(IngestAdvisories, MalformedRecordIsSkipped) {
    const auto r = ingest_advisories(fixture("mixed.jsonl"), Source::snyk);
    ASSERT_EQ(r.entries.size(), 2u);
    EXPECT_EQ(r.skipped, 1);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(r.entries[0].id, "snyk:a1");
    EXPECT_EQ(r.entries[1].id, "snyk:a3");
    EXPECT_TRUE(r.entries[1].reference_urls.empty());
}

TEST(IngestAdvisories, SnykMirrorDirectory) {
    const auto r = ingest_advisories(fixture("snyk_mirror"), Source::snyk);
    EXPECT_EQ(r.skipped, 1);
    ASSERT_EQ(r.entries.size(), 2u);
    EXPECT_EQ(r.entries[0].id, "snyk:npm:ms:20151024");
    EXPECT_EQ(r.entries[0].module_name, "ms");
    EXPECT_EQ(r.entries[0].reference_urls.size(), 1u);
    EXPECT_EQ(r.entries[1].id, "snyk:npm:qs:20170213");
}

TEST(IngestAdvisories, DuplicateIdsAndMissingIds) {
    const auto dir = std::filesystem::temp_directory_path() / "jsvuln_adv_dup";
    std::filesystem::create_directories(dir);
    const auto f = dir / "d.json";
    {
        std::ofstream(f) << R"([{"id": 1}, {"id": 1}, {"title": "no id"}, 5])";
    }
    const auto r = ingest_advisories(f, Source::nsp);
    EXPECT_EQ(r.entries.size(), 1u);
    EXPECT_EQ(r.skipped, 3);
}

TEST(IngestAdvisories, MissingPathIsIoError) {
    EXPECT_THROW(ingest_advisories(fixture("nope.json"), Source::nsp), IoError);
}

TEST(IngestAdvisories, ReingestIsIdentical) {
    const auto a = ingest_advisories(fixture("nsp_gather.json"), Source::nsp);
    const auto b = ingest_advisories(fixture("nsp_gather.json"), Source::nsp);
    EXPECT_EQ(a.entries, b.entries);
}

TEST(IngestAdvisories, SaveLoadRoundTrip) {
    const auto a = ingest_advisories(fixture("nsp_gather.json"), Source::nsp).entries;
    const auto path = std::filesystem::temp_directory_path() / "jsvuln_adv_rt" / "advisories.json";
    save_advisories(path, a);
    EXPECT_EQ(load_advisories(path), a);
}

TEST(ClassifyUrl, Examples) {
    auto c = classify_url("https://github.com/a/b/commit/abc123f");
    EXPECT_EQ(c.kind, UrlKind::commit);
    EXPECT_EQ(c.repo_slug, "a/b");
    EXPECT_EQ(c.ref_id, "abc123f");

    c = classify_url("https://github.com/a/b/pull/42");
    EXPECT_EQ(c.kind, UrlKind::pull_request);
    EXPECT_EQ(c.repo_slug, "a/b");
    EXPECT_EQ(c.ref_id, "42");

    c = classify_url("https://example.org/advisory");
    EXPECT_EQ(c.kind, UrlKind::other);
    EXPECT_FALSE(c.repo_slug);
    EXPECT_FALSE(c.ref_id);
}

TEST(ClassifyUrl, Variants) {
    EXPECT_EQ(classify_url("https://github.com/a/b/issues/7#issuecomment-1").kind, UrlKind::issue);
    EXPECT_EQ(classify_url("https://github.com/a/b/pull/7/files").kind, UrlKind::pull_request);
    const auto pc = classify_url("https://github.com/a/b/pull/7/commits/0123456789abcdef0123456789abcdef01234567");
    EXPECT_EQ(pc.kind, UrlKind::commit);
    EXPECT_EQ(pc.ref_id, "0123456789abcdef0123456789abcdef01234567");
    EXPECT_EQ(classify_url("https://github.com/a/b/commits/ABCDEF1").ref_id, "abcdef1");
    EXPECT_EQ(classify_url("https://github.com/a/b.git/commit/abcdef1").repo_slug, "a/b");
    EXPECT_EQ(classify_url("https://github.com/a/b/commit/xyz").kind, UrlKind::other);
    EXPECT_EQ(classify_url("https://github.com/a/b/commit/abc12").kind, UrlKind::other);
    EXPECT_EQ(classify_url("https://github.com/a/b/pull/0").kind, UrlKind::other);
    EXPECT_EQ(classify_url("https://github.com/a/b").repo_slug, "a/b");
    EXPECT_EQ(classify_url("https://gitlab.com/a/b/commit/abcdef1").kind, UrlKind::other);
}

TEST(ClassifyUrls, TotalAndDeterministic) {
    // Property: one output per input URL, in order, and invariants on each kind.
    std::mt19937 gen(3);
    const std::vector<std::string> parts = {"commit", "pull", "issues", "commits", "tree", "42", "0", "abcdef1", "zz",
                                            "0123456789abcdef0123456789abcdef01234567", "a", "b"};
    for (int t = 0; t < 200; ++t) {
        AdvisoryEntry e;
        const int n = int(gen() % 6);
        for (int i = 0; i < n; ++i) {
            std::string u = gen() % 4 ? "https://github.com" : "https://example.org";
            const int segs = int(gen() % 6);
            for (int s = 0; s < segs; ++s) u += "/" + parts[gen() % parts.size()];
            e.reference_urls.push_back(u);
        }
        const auto out = classify_urls(e);
        ASSERT_EQ(out.size(), e.reference_urls.size());
        EXPECT_EQ(out, classify_urls(e));
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_EQ(out[i].url, e.reference_urls[i]);
            if (out[i].kind == UrlKind::commit) {
                ASSERT_TRUE(out[i].ref_id);
                EXPECT_GE(out[i].ref_id->size(), 7u);
                EXPECT_LE(out[i].ref_id->size(), 40u);
            }
            if (out[i].kind == UrlKind::pull_request || out[i].kind == UrlKind::issue) {
                ASSERT_TRUE(out[i].ref_id);
                EXPECT_GT(std::stoi(*out[i].ref_id), 0);
            }
        }
    }
}

TEST(HarvestUrls, ValidatesAndTrims) {
    const auto j = nlohmann::ordered_json::parse(
        R"({"a": "see https://x.org/p. and (https://y.org/q_(1)) or http://", "b": ["https://x.org/p", "ftp://z.org"]})");
    EXPECT_EQ(harvest_urls(j), (std::vector<std::string>{"https://x.org/p", "https://y.org/q_(1)"}));
    EXPECT_TRUE(is_valid_url("https://a.b/c?d=1"));
    EXPECT_FALSE(is_valid_url("https://"));
    EXPECT_FALSE(is_valid_url("https://..x/"));
    EXPECT_FALSE(is_valid_url("mailto:x@y.z"));
}
