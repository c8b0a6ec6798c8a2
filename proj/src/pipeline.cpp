#include "jsvuln/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <set>

#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"
#include "jsvuln/parallel.hpp"

namespace jsvuln::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string content_hash(const fs::path& path) {
    std::error_code ec;
    if (fs::is_regular_file(path, ec)) return hash_path(path);
    if (!fs::is_directory(path, ec)) throw IoError("cannot hash missing path " + path.string());
    std::vector<std::string> lines;
    for (const auto& de : fs::recursive_directory_iterator(path)) {
        if (!de.is_regular_file()) continue;
        lines.push_back(fs::relative(de.path(), path).generic_string() + '\0' + hash_path(de.path()));
    }
    std::sort(lines.begin(), lines.end());
    std::string joined;
    for (const auto& l : lines) joined += l + '\n';
    return sha256_hex(joined);
}

// Manifest.

Manifest Manifest::load(const fs::path& path) {
    Manifest m;
    if (!fs::exists(path)) return m;
    try {
        const json j = json::parse(read_file(path));
        for (const auto& [name, s] : j.at("stages").items()) {
            StageRecord r;
            r.inputs_hash = s.at("inputs_hash").get<std::string>();
            r.created = s.at("created").get<std::string>();
            r.tool_version = s.at("tool_version").get<std::string>();
            for (const auto& o : s.at("outputs")) r.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>()});
            m.stages[name] = std::move(r);
        }
    } catch (const json::exception& e) {
        log_warn("manifest", "ignoring unreadable manifest " + path.string() + ": " + e.what());
        m.stages.clear();
    }
    return m;
}

void Manifest::save(const fs::path& path) const {
    json stages_json = json::object();
    for (const auto& [name, r] : stages) {
        json outs = json::array();
        for (const auto& o : r.outputs) outs.push_back({{"path", o.path}, {"sha256", o.sha256}});
        stages_json[name] = {{"outputs", outs}, {"inputs_hash", r.inputs_hash}, {"created", r.created}, {"tool_version", r.tool_version}};
    }
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, json{{"stages", stages_json}}.dump(2) + "\n");
    fs::rename(tmp, path);
}

bool Manifest::fresh(const std::string& stage, const std::string& inputs_hash, const fs::path& work_dir) const {
    const auto it = stages.find(stage);
    if (it == stages.end() || it->second.inputs_hash != inputs_hash || it->second.tool_version != kToolVersion) return false;
    for (const auto& o : it->second.outputs) {
        const fs::path p = work_dir / o.path;
        if (!fs::exists(p) || content_hash(p) != o.sha256) return false;
    }
    return true;
}

std::vector<std::string> Manifest::validate(const fs::path& work_dir) const {
    std::vector<std::string> problems;
    for (const auto& [name, r] : stages) {
        for (const auto& o : r.outputs) {
            const fs::path p = work_dir / o.path;
            if (!fs::exists(p)) {
                problems.push_back(name + ": missing " + o.path);
            } else if (content_hash(p) != o.sha256) {
                problems.push_back(name + ": hash mismatch for " + o.path);
            }
        }
    }
    return problems;
}

// Configuration.

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    PipelineConfig c;
    try {
        if (!j.is_object()) throw ValidationError("pipeline config must be a JSON object");
        c.work_dir = resolve(j.value("work_dir", "work"));
        if (!j.contains("advisories") || !j["advisories"].is_array() || j["advisories"].empty())
            throw ValidationError("pipeline config needs a non-empty 'advisories' list");
        for (const auto& a : j["advisories"]) c.advisories.push_back({resolve(a.at("path").get<std::string>()), advisory::parse_source(a.at("source").get<std::string>())});
        const json gh = j.value("github", json::object());
        if (gh.contains("fixtures")) c.api_fixtures = resolve(gh["fixtures"].get<std::string>());
        c.api_cache = resolve(gh.value("cache", (c.work_dir / "api_cache").string()));
        c.token_env = gh.value("token_env", c.token_env);
        if (j.contains("decisions") && !j["decisions"].is_null()) c.decisions = resolve(j["decisions"].get<std::string>());
        const json snap = j.value("snapshots", json::object());
        c.snapshots = resolve(snap.value("dir", (c.work_dir / "snapshots").string()));
        c.download_snapshots = snap.value("download", false);
        c.eval = eval::config_from_json(j.value("eval", json::object()));
        if (j.contains("seed")) c.eval.seed = j["seed"].get<std::uint64_t>();
        c.jobs = j.value("jobs", 1u);
        c.eval.jobs = c.jobs;
        if (j.contains("algorithms")) {
            for (const auto& a : j["algorithms"]) c.algorithms.push_back(ml::parse_algorithm(a.get<std::string>()));
        } else {
            c.algorithms.assign(std::begin(ml::kAllAlgorithms), std::end(ml::kAllAlgorithms));
        }
        if (j.contains("resamplings")) {
            for (const auto& r : j["resamplings"]) c.resamplings.push_back(eval::parse_resampling(r.get<std::string>()));
        } else {
            c.resamplings = eval::all_resamplings();
        }
        c.rand_check = j.value("rand_check", true);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad pipeline config: ") + e.what());
    }
    if (c.jobs == 0) throw ValidationError("jobs must be at least 1");
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j, fs::absolute(path).parent_path());
}

// Stage building blocks.

advisory::IngestResult ingest_all(const std::vector<SourceSpec>& sources) {
    advisory::IngestResult all;
    std::set<std::string> seen;
    for (const auto& s : sources) {
        auto r = advisory::ingest_advisories(s.path, s.source);
        all.skipped += r.skipped;
        all.warnings.insert(all.warnings.end(), r.warnings.begin(), r.warnings.end());
        for (auto& e : r.entries) {
            if (!seen.insert(e.id).second) {
                all.warnings.push_back("duplicate advisory id " + e.id + " in " + s.path.string());
                ++all.skipped;
                continue;
            }
            all.entries.push_back(std::move(e));
        }
    }
    return all;
}

std::shared_ptr<github::ApiClient> make_api_client(const std::optional<fs::path>& fixtures, const fs::path& cache_dir,
                                                   const std::string& token_env) {
    if (fixtures) {
        if (!fs::is_directory(*fixtures)) throw IoError("API fixture directory not found: " + fixtures->string());
        return std::make_shared<github::FixtureClient>(*fixtures);
    }
    const char* token = std::getenv(token_env.c_str());
    auto live = std::make_shared<github::LiveClient>(github::make_https_transport(), token ? token : "");
    return std::make_shared<github::CachingClient>(live, cache_dir);
}

std::vector<github::FixResolution> resolve_all(const std::vector<advisory::AdvisoryEntry>& entries, github::ApiClient& client,
                                               const std::vector<github::ReviewDecision>& decisions, unsigned jobs) {
    std::vector<github::FixResolution> out(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        const auto& e = entries[i];
        auto r = github::resolve_fixing_commits(e, advisory::classify_urls(e), client);
        std::vector<github::ReviewDecision> mine;
        for (const auto& d : decisions)
            if (d.advisory_id == e.id) mine.push_back(d);
        if (!mine.empty()) r = github::apply_review_decisions(r, mine);
        if (r.status == github::Status::resolved) r = github::fetch_combined_patch(r, client);
        out[i] = std::move(r);
    });
    return out;
}

std::vector<github::FixResolution> import_decisions(std::vector<github::FixResolution> resolutions,
                                                    const std::vector<github::ReviewDecision>& decisions, github::ApiClient& client) {
    std::set<std::string> known;
    for (const auto& r : resolutions) known.insert(r.advisory_id);
    for (const auto& d : decisions)
        if (!known.count(d.advisory_id)) throw ValidationError("decision for unknown advisory " + d.advisory_id);
    for (auto& r : resolutions) {
        std::vector<github::ReviewDecision> mine;
        for (const auto& d : decisions)
            if (d.advisory_id == r.advisory_id) mine.push_back(d);
        if (mine.empty()) continue;
        r = github::apply_review_decisions(r, mine);
        if (r.status == github::Status::resolved && !r.combined_patch) r = github::fetch_combined_patch(r, client);
    }
    return resolutions;
}

dataset::SnapshotProvider make_snapshot_provider(const fs::path& dir, bool download) {
    if (download) return dataset::downloading_snapshots(dir, github::make_https_transport("codeload.github.com"));
    return dataset::directory_snapshots(dir);
}

json to_json(const eval::SweepResult& s) {
    json cells = json::array(), rand = json::array();
    for (const auto& c : s.cells) cells.push_back(eval::to_json(c));
    for (const auto& c : s.rand) rand.push_back(eval::to_json(c));
    return {{"cells", cells}, {"rand", rand}, {"zeror", eval::to_json(s.zeror)}};
}

eval::SweepResult sweep_from_json(const json& j) {
    eval::SweepResult s;
    try {
        for (const auto& c : j.at("cells")) s.cells.push_back(eval::result_from_json(c));
        for (const auto& c : j.at("rand")) s.rand.push_back(eval::result_from_json(c));
        s.zeror = eval::result_from_json(j.at("zeror"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad sweep results: ") + e.what());
    }
    return s;
}

// Runner.

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_of(const json& j) { return sha256_hex(j.dump()); }

json eval_fingerprint(const PipelineConfig& c) {
    json grids = json::object();
    for (const auto& [a, g] : c.eval.grids) grids[std::string(ml::to_string(a))] = g;
    json algos = json::array(), rs = json::array();
    for (auto a : c.algorithms) algos.push_back(ml::to_string(a));
    for (const auto& r : c.resamplings) rs.push_back(r.label());
    return {{"grids", grids},
            {"seed", c.eval.seed},
            {"fold_count", c.eval.fold_count},
            {"pooling", c.eval.pooling == eval::Pooling::pooled ? "pooled" : "averaged"},
            {"algorithms", algos},
            {"resamplings", rs},
            {"rand_check", c.rand_check}};
}

struct Stage {
    std::string name;
    std::function<json()> inputs;  ///< evaluated only once upstream outputs exist
    std::vector<std::string> outputs;
    std::function<void()> run;
};

}  // namespace

std::vector<StageOutcome> run_pipeline(const PipelineConfig& c) {
    const fs::path& w = c.work_dir;
    fs::create_directories(w);
    const fs::path manifest_path = w / "manifest.json";
    Manifest manifest = Manifest::load(manifest_path);

    std::shared_ptr<github::ApiClient> client;
    auto api = [&]() -> github::ApiClient& {
        if (!client) client = make_api_client(c.api_fixtures, c.api_cache, c.token_env);
        return *client;
    };

    std::vector<Stage> stages;
    stages.push_back({"ingest",
                      [&] {
                          json srcs = json::array();
                          for (const auto& s : c.advisories) {
                              if (!fs::exists(s.path)) throw IoError("advisory input not found: " + s.path.string());
                              srcs.push_back({{"source", advisory::to_string(s.source)}, {"hash", content_hash(s.path)}});
                          }
                          return srcs;
                      },
                      {"advisories.json"},
                      [&] {
                          const auto r = ingest_all(c.advisories);
                          for (const auto& wmsg : r.warnings) log_warn("ingest", wmsg);
                          advisory::save_advisories(w / "advisories.json", r.entries);
                          log_info("ingest", std::to_string(r.entries.size()) + " advisories, " + std::to_string(r.skipped) + " skipped");
                      }});
    stages.push_back({"resolve",
                      [&] {
                          json api_id = c.api_fixtures ? json{{"fixtures", content_hash(*c.api_fixtures)}} : json{{"live", true}};
                          return json{{"advisories", content_hash(w / "advisories.json")},
                                      {"decisions", c.decisions ? json(content_hash(*c.decisions)) : json(nullptr)},
                                      {"api", api_id}};
                      },
                      {"resolutions", "review_queue.json"},
                      [&] {
                          const auto entries = advisory::load_advisories(w / "advisories.json");
                          std::vector<github::ReviewDecision> decisions;
                          if (c.decisions) decisions = github::parse_decisions(json::parse(read_file(*c.decisions)));
                          const auto rs = resolve_all(entries, api(), decisions, c.jobs);
                          fs::remove_all(w / "resolutions");
                          github::save_resolutions(w / "resolutions", rs);
                          write_file(w / "review_queue.json", github::export_review_queue(rs).dump(2) + "\n");
                          std::map<std::string, int> counts;
                          for (const auto& r : rs) ++counts[std::string(github::to_string(r.status))];
                          std::string msg;
                          for (const auto& [k, v] : counts) msg += k + "=" + std::to_string(v) + " ";
                          log_info("resolve", msg);
                      }});
    stages.push_back({"build-dataset",
                      [&] {
                          json snap = c.download_snapshots ? json{{"download", true}} : json{{"dir", content_hash(c.snapshots)}};
                          return json{{"resolutions", content_hash(w / "resolutions")}, {"snapshots", snap}};
                      },
                      {"dataset.csv"},
                      [&] {
                          const auto rs = github::load_resolutions(w / "resolutions");
                          const auto built = dataset::build_dataset(rs, make_snapshot_provider(c.snapshots, c.download_snapshots), c.jobs);
                          for (const auto& wmsg : built.warnings) log_warn("build-dataset", wmsg);
                          const auto s = dataset::emit_dataset(built.rows, w / "dataset.csv");
                          log_info("build-dataset", std::to_string(s.total) + " functions, " + std::to_string(s.vulnerable) + " vulnerable");
                      }});
    stages.push_back({"sweep", [&] { return json{{"dataset", content_hash(w / "dataset.csv")}, {"eval", eval_fingerprint(c)}}; },
                      {"results.json"},
                      [&] {
                          const auto data = eval::features_from_dataset(dataset::load_dataset(w / "dataset.csv"));
                          const auto s = eval::sweep(data, c.eval, c.algorithms, c.resamplings, c.rand_check);
                          write_file(w / "results.json", to_json(s).dump(2) + "\n");
                      }});
    stages.push_back({"report", [&] { return json{{"results", content_hash(w / "results.json")}}; },
                      {"report/table2.csv", "report/metrics_long.csv"},
                      [&] {
                          const auto s = sweep_from_json(json::parse(read_file(w / "results.json")));
                          eval::report(s.cells, s.rand, w / "report");
                      }});

    std::vector<StageOutcome> outcomes;
    bool upstream_ran = false;
    for (const auto& st : stages) {
        try {
            const std::string inputs = hash_of(st.inputs());
            if (!upstream_ran && manifest.fresh(st.name, inputs, w)) {
                log_info(st.name, "up to date, skipped");
                outcomes.push_back({st.name, true});
                continue;
            }
            log_info(st.name, "running");
            manifest.stages.erase(st.name);
            manifest.save(manifest_path);
            st.run();
            StageRecord rec{{}, inputs, utc_now(), kToolVersion};
            for (const auto& o : st.outputs) rec.outputs.push_back({o, content_hash(w / o)});
            manifest.stages[st.name] = std::move(rec);
            manifest.save(manifest_path);
            upstream_ran = true;
            outcomes.push_back({st.name, false});
        } catch (const std::exception& e) {
            throw Error("stage " + st.name + ": " + e.what());
        }
    }
    return outcomes;
}

}  // namespace jsvuln::pipeline
