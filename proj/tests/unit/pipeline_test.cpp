#include <gtest/gtest.h>

#include <cstdlib>

#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/pipeline.hpp"

using namespace jsvuln;
using namespace jsvuln::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCorpus = std::string(JSVULN_FIXTURES) + "/corpus";

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

PipelineConfig corpus_config(const fs::path& work) {
    json j = json::parse(read_file(kCorpus + "/pipeline.json"));
    j["work_dir"] = work.string();
    return pipeline_config_from_json(j, kCorpus);
}

std::vector<bool> skipped(const std::vector<StageOutcome>& o) {
    std::vector<bool> out;
    for (const auto& s : o) out.push_back(s.skipped);
    return out;
}

class NetworkOff {
public:
    NetworkOff() { github::set_network_allowed(false); }
    ~NetworkOff() { github::set_network_allowed(true); }
};

}  // namespace

TEST(ContentHash, FilesAndDirectories) {
    const auto d = fresh_dir("jsvuln_hash_dir");
    fs::create_directories(d / "sub");
    write_file(d / "a.txt", "a");
    write_file(d / "sub/b.txt", "b");
    const auto h1 = content_hash(d);
    EXPECT_EQ(content_hash(d / "a.txt"), sha256_hex("a"));
    write_file(d / "sub/b.txt", "c");
    EXPECT_NE(content_hash(d), h1);
    EXPECT_THROW(content_hash(d / "missing"), IoError);
}

TEST(Pipeline, OfflineCorpusMatchesGoldenFiles) {
    NetworkOff off;
    const std::size_t before = github::network_request_count();
    const auto work = fresh_dir("jsvuln_e2e_a");
    const auto outcomes = run_pipeline(corpus_config(work));
    ASSERT_EQ(outcomes.size(), 5u);
    EXPECT_EQ(skipped(outcomes), std::vector<bool>(5, false));
    EXPECT_EQ(github::network_request_count(), before);
    EXPECT_EQ(read_file(work / "dataset.csv"), read_file(kCorpus + "/golden/dataset.csv"));
    EXPECT_EQ(read_file(work / "report/table2.csv"), read_file(kCorpus + "/golden/table2.csv"));
    EXPECT_EQ(read_file(work / "report/metrics_long.csv"), read_file(kCorpus + "/golden/metrics_long.csv"));
    const auto rows = dataset::load_dataset(work / "dataset.csv");
    const json expected = json::parse(read_file(kCorpus + "/expected_rows.json"));
    EXPECT_EQ(rows.size(), expected["total"].get<std::size_t>());
    const auto queue = json::parse(read_file(work / "review_queue.json"));
    EXPECT_TRUE(queue["review_queue"].empty());
    EXPECT_TRUE(Manifest::load(work / "manifest.json").validate(work).empty());
}

TEST(Pipeline, RerunsAreByteIdentical) {
    const auto a = fresh_dir("jsvuln_e2e_b1"), b = fresh_dir("jsvuln_e2e_b2");
    auto ca = corpus_config(a), cb = corpus_config(b);
    cb.jobs = cb.eval.jobs = 1;
    run_pipeline(ca);
    run_pipeline(cb);
    for (const char* f : {"advisories.json", "dataset.csv", "results.json", "report/table2.csv", "report/metrics_long.csv"})
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    EXPECT_EQ(content_hash(a / "resolutions"), content_hash(b / "resolutions"));
}

TEST(Pipeline, FreshManifestSkipsEverything) {
    const auto work = fresh_dir("jsvuln_e2e_c");
    const auto cfg = corpus_config(work);
    run_pipeline(cfg);
    const auto table = read_file(work / "report/table2.csv");
    EXPECT_EQ(skipped(run_pipeline(cfg)), std::vector<bool>(5, true));
    EXPECT_EQ(read_file(work / "report/table2.csv"), table);
}

TEST(Pipeline, DeletedDatasetRebuildsDownstream) {
    const auto work = fresh_dir("jsvuln_e2e_d");
    const auto cfg = corpus_config(work);
    run_pipeline(cfg);
    fs::remove(work / "dataset.csv");
    EXPECT_EQ(skipped(run_pipeline(cfg)), (std::vector<bool>{true, true, false, false, false}));
    EXPECT_EQ(read_file(work / "dataset.csv"), read_file(kCorpus + "/golden/dataset.csv"));
}

TEST(Pipeline, TamperedOutputOrConfigChangeReruns) {
    const auto work = fresh_dir("jsvuln_e2e_e");
    auto cfg = corpus_config(work);
    run_pipeline(cfg);
    write_file(work / "results.json", "{}");
    EXPECT_EQ(skipped(run_pipeline(cfg)), (std::vector<bool>{true, true, true, false, false}));
    cfg.resamplings = {eval::ResamplingSpec{}};
    EXPECT_EQ(skipped(run_pipeline(cfg)), (std::vector<bool>{true, true, true, false, false}));
    const auto rows = dataset::parse_csv(read_file(work / "report/table2.csv"));
    EXPECT_EQ(rows[1][2], "");
}

TEST(Pipeline, MissingInputNamesStage) {
    const auto work = fresh_dir("jsvuln_e2e_f");
    auto cfg = corpus_config(work);
    cfg.snapshots = work / "no_snapshots";
    try {
        run_pipeline(cfg);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("stage build-dataset"), std::string::npos) << e.what();
    }
    cfg = corpus_config(work);
    cfg.advisories[0].path = work / "none.json";
    try {
        run_pipeline(cfg);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("stage ingest"), std::string::npos) << e.what();
    }
}

TEST(Pipeline, ConfigValidation) {
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"work_dir": "w"})"), "/tmp"), ValidationError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"advisories": [{"path": "a", "source": "cve"}]})"), "/tmp"),
                 ValidationError);
    EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"advisories": [{"path": "a", "source": "nsp"}], "algorithms": ["svr"]})"), "/tmp"),
                 ValidationError);
    const auto c = pipeline_config_from_json(json::parse(R"({"advisories": [{"path": "a", "source": "nsp"}]})"), "/base");
    EXPECT_EQ(c.advisories[0].path, fs::path("/base/a"));
    EXPECT_EQ(c.algorithms.size(), 9u);
    EXPECT_EQ(c.resamplings.size(), 9u);
    EXPECT_FALSE(c.api_fixtures);
    EXPECT_THROW(load_pipeline_config("/nonexistent/pipeline.json"), ValidationError);
}

TEST(Pipeline, LiveModeRespectsNetworkSwitch) {
    NetworkOff off;
    EXPECT_THROW(make_api_client(std::nullopt, fresh_dir("jsvuln_cache_x"), "GITHUB_TOKEN"), IoError);
}

TEST(Ingest, DuplicateIdsAcrossSourcesKeptOnce) {
    const auto r = ingest_all({{kCorpus + "/advisories/nsp.json", advisory::Source::nsp}, {kCorpus + "/advisories/nsp.json", advisory::Source::nsp}});
    EXPECT_EQ(r.entries.size(), 4u);
    EXPECT_EQ(r.skipped, 4);
}

TEST(ReviewImport, AppliesDecisionsAndFetchesPatch) {
    github::FixtureClient client(kCorpus + "/api");
    const auto entries = ingest_all({{kCorpus + "/advisories/snyk", advisory::Source::snyk}}).entries;
    const auto pending = resolve_all(entries, client, {}, 1);
    std::size_t queued = 0;
    for (const auto& r : pending) queued += r.status == github::Status::pending_review;
    ASSERT_EQ(queued, 1u);
    const auto decisions = github::parse_decisions(json::parse(read_file(kCorpus + "/decisions.json")));
    const auto done = import_decisions(pending, decisions, client);
    for (const auto& r : done) {
        if (r.advisory_id == decisions.front().advisory_id) {
            EXPECT_EQ(r.status, github::Status::resolved);
            EXPECT_TRUE(r.combined_patch.has_value());
        }
    }
    EXPECT_THROW(import_decisions(pending, {{"snyk:nope", "abc", true, ""}}, client), ValidationError);
}

TEST(Cli, ExitCodes) {
    const std::string cli = JSVULN_CLI;
    const auto work = fresh_dir("jsvuln_cli");
    fs::create_directories(work);
    auto code = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(s);
    };
    EXPECT_EQ(code(cli + " --help"), 0);
    EXPECT_EQ(code(cli), 2);
    EXPECT_EQ(code(cli + " frobnicate"), 2);
    EXPECT_EQ(code(cli + " train --algo perceptron --dataset " + kCorpus + "/golden/dataset.csv --out " + work.string()), 2);
    EXPECT_EQ(code(cli + " build-dataset --resolutions " + (work / "missing").string() + " --out " + (work / "d.csv").string()), 1);
    EXPECT_EQ(code(cli + " ingest --nsp " + kCorpus + "/advisories/nsp.json --out " + (work / "adv.json").string()), 0);
    EXPECT_EQ(advisory::load_advisories(work / "adv.json").size(), 4u);
    EXPECT_EQ(code(cli + " --seed 3 train --algo knn --dataset " + kCorpus + "/golden/dataset.csv --out " + work.string()), 0);
    EXPECT_TRUE(fs::exists(work / "knn_none_search.json"));
    EXPECT_TRUE(fs::exists(work / "knn_none_model.json"));
    EXPECT_EQ(code(cli + " analyze " + std::string(JSVULN_FIXTURES) + "/listings/listing2.js --path original.js --diff " +
                   std::string(JSVULN_FIXTURES) + "/listings/listing1.diff --out " + (work / "a.jsonl").string()),
              0);
    const auto line = json::parse(read_file(work / "a.jsonl"));
    EXPECT_EQ(line["name"], "foo");
    EXPECT_EQ(line["vulnerable"], 1);
}
