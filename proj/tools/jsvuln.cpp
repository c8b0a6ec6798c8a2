#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "jsvuln/diff.hpp"
#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/js/functions.hpp"
#include "jsvuln/js/metrics.hpp"
#include "jsvuln/log.hpp"
#include "jsvuln/parallel.hpp"
#include "jsvuln/pipeline.hpp"

using namespace jsvuln;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    bool seed_set = false;
    unsigned jobs = 0;
    std::string config;
    bool quiet = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

eval::EvalConfig eval_config(const Globals& g) {
    eval::EvalConfig c = g.config.empty() ? eval::config_from_json(json::object()) : eval::load_config(g.config);
    if (g.seed_set || g.config.empty()) c.seed = g.seed;
    if (g.jobs) c.jobs = g.jobs;
    return c;
}

std::vector<ml::Algorithm> algorithms(const std::string& list) {
    if (list.empty()) return {std::begin(ml::kAllAlgorithms), std::end(ml::kAllAlgorithms)};
    std::vector<ml::Algorithm> out;
    for (const auto& a : split_list(list)) out.push_back(ml::parse_algorithm(a));
    return out;
}

void write_output(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_file(out, text);
    }
}

eval::FeatureMatrix load_features(const std::string& path) { return eval::load_feature_csv(path); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Builds a dataset of vulnerable JavaScript functions from advisories and evaluates classifiers on it."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--jobs", g.jobs, "Worker threads (default: hardware threads)");
    app.add_option("--config", g.config, "Evaluation config (train, sweep, rand-check) or pipeline config (run)");
    app.add_flag("--quiet", g.quiet, "Only log warnings and errors");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Normalize advisory records into one advisories file");
    std::vector<std::string> nsp_inputs, snyk_inputs;
    std::string ingest_out = "advisories.json";
    ingest->add_option("--nsp", nsp_inputs, "nsp advisory file or directory");
    ingest->add_option("--snyk", snyk_inputs, "Snyk advisory file or directory");
    ingest->add_option("--out", ingest_out, "Output file");

    // resolve
    auto* resolve = app.add_subcommand("resolve", "Find fixing commits and fetch their combined patches");
    std::string advisories_in = "advisories.json", fixtures, cache = ".jsvuln-cache/api", decisions_in, resolutions_dir = "resolutions";
    std::string token_env = "GITHUB_TOKEN";
    resolve->add_option("--advisories", advisories_in, "Advisories file from ingest");
    resolve->add_option("--fixtures", fixtures, "Serve API answers from this directory instead of the network");
    resolve->add_option("--cache", cache, "Response cache for the live API");
    resolve->add_option("--token-env", token_env, "Environment variable holding the API token");
    resolve->add_option("--decisions", decisions_in, "Review decisions to apply");
    resolve->add_option("--out", resolutions_dir, "Output directory");

    // review-export / review-import
    auto* review_export = app.add_subcommand("review-export", "Write the review queue of issue-derived commits");
    std::string queue_out = "review_queue.json";
    review_export->add_option("--resolutions", resolutions_dir, "Resolutions directory");
    review_export->add_option("--out", queue_out, "Output file");
    auto* review_import = app.add_subcommand("review-import", "Apply review decisions to stored resolutions");
    std::string import_out;
    review_import->add_option("--resolutions", resolutions_dir, "Resolutions directory");
    review_import->add_option("--decisions", decisions_in, "Decisions file")->required();
    review_import->add_option("--fixtures", fixtures, "Serve API answers from this directory instead of the network");
    review_import->add_option("--cache", cache, "Response cache for the live API");
    review_import->add_option("--token-env", token_env, "Environment variable holding the API token");
    review_import->add_option("--out", import_out, "Output directory (default: update in place)");

    // build-dataset
    auto* build = app.add_subcommand("build-dataset", "Label functions of the pre-fix snapshots and write the dataset CSV");
    std::string snapshots = "snapshots", dataset_out = "dataset.csv";
    bool download = false;
    build->add_option("--resolutions", resolutions_dir, "Resolutions directory");
    build->add_option("--snapshots", snapshots, "Snapshot root (<owner>/<repo>/<sha>/)");
    build->add_flag("--download", download, "Download missing snapshots from GitHub");
    build->add_option("--out", dataset_out, "Output CSV");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Print the functions and metrics of one JavaScript file");
    std::string js_file, diff_file, analyze_out, rel_path;
    analyze->add_option("file", js_file, "JavaScript source")->required();
    analyze->add_option("--diff", diff_file, "Unified diff used to label the functions");
    analyze->add_option("--path", rel_path, "Repository path of the file as named in the diff");
    analyze->add_option("--out", analyze_out, "Output file (default: stdout)");

    // train
    auto* train = app.add_subcommand("train", "Grid-search one algorithm under one resampling strategy");
    std::string dataset_in = "dataset.csv", algo, resample = "none", grid_file, train_out = "results";
    train->add_option("--dataset", dataset_in, "Dataset CSV");
    train->add_option("--algo", algo, "Algorithm")->required();
    train->add_option("--resample", resample, "none, over:<ratio> or under:<ratio>");
    train->add_option("--grid", grid_file, "JSON grid for the algorithm (object of lists or list of objects)");
    train->add_option("--out", train_out, "Output directory");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Evaluate every algorithm under every resampling strategy");
    std::string algos, resamplings, sweep_out = "results.json";
    bool no_rand = false;
    sweep->add_option("--dataset", dataset_in, "Dataset CSV");
    sweep->add_option("--algos", algos, "Comma-separated algorithms (default: all)");
    sweep->add_option("--resamplings", resamplings, "Comma-separated strategies (default: all nine)");
    sweep->add_flag("--no-rand", no_rand, "Skip the random-label column");
    sweep->add_option("--out", sweep_out, "Output JSON");

    // rand-check
    auto* rand = app.add_subcommand("rand-check", "Search every algorithm on randomly reassigned labels");
    std::string rand_out = "rand.json";
    rand->add_option("--dataset", dataset_in, "Dataset CSV");
    rand->add_option("--algos", algos, "Comma-separated algorithms (default: all)");
    rand->add_option("--out", rand_out, "Output JSON");

    // report
    auto* report = app.add_subcommand("report", "Write the F-measure table and the long-form metrics CSV");
    std::string results_in = "results.json", report_out = "report";
    report->add_option("--results", results_in, "Sweep results JSON");
    report->add_option("--out", report_out, "Output directory");

    // run
    auto* run = app.add_subcommand("run", "Run the whole pipeline, skipping stages whose outputs are current");
    std::string run_config;
    run->add_option("pipeline_config", run_config, "Pipeline config (or use --config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (g.quiet) set_log_threshold(LogLevel::warn);
    const unsigned jobs = g.jobs ? g.jobs : default_jobs();

    try {
        if (*ingest) {
            std::vector<pipeline::SourceSpec> sources;
            for (const auto& p : nsp_inputs) sources.push_back({p, advisory::Source::nsp});
            for (const auto& p : snyk_inputs) sources.push_back({p, advisory::Source::snyk});
            if (sources.empty()) throw ValidationError("ingest needs at least one --nsp or --snyk input");
            const auto r = pipeline::ingest_all(sources);
            for (const auto& w : r.warnings) log_warn("ingest", w);
            advisory::save_advisories(ingest_out, r.entries);
            log_info("ingest", std::to_string(r.entries.size()) + " advisories written to " + ingest_out);
        } else if (*resolve) {
            auto client = pipeline::make_api_client(fixtures.empty() ? std::nullopt : std::optional<fs::path>(fixtures), cache, token_env);
            std::vector<github::ReviewDecision> decisions;
            if (!decisions_in.empty()) decisions = github::parse_decisions(json::parse(read_file(decisions_in)));
            const auto rs = pipeline::resolve_all(advisory::load_advisories(advisories_in), *client, decisions, jobs);
            fs::remove_all(resolutions_dir);
            github::save_resolutions(resolutions_dir, rs);
            log_info("resolve", std::to_string(rs.size()) + " resolutions written to " + resolutions_dir);
        } else if (*review_export) {
            write_file(queue_out, github::export_review_queue(github::load_resolutions(resolutions_dir)).dump(2) + "\n");
        } else if (*review_import) {
            auto client = pipeline::make_api_client(fixtures.empty() ? std::nullopt : std::optional<fs::path>(fixtures), cache, token_env);
            const auto decisions = github::parse_decisions(json::parse(read_file(decisions_in)));
            const auto rs = pipeline::import_decisions(github::load_resolutions(resolutions_dir), decisions, *client);
            const std::string out = import_out.empty() ? resolutions_dir : import_out;
            fs::remove_all(out);
            github::save_resolutions(out, rs);
        } else if (*build) {
            const auto built = dataset::build_dataset(github::load_resolutions(resolutions_dir),
                                                      pipeline::make_snapshot_provider(snapshots, download), jobs);
            for (const auto& w : built.warnings) log_warn("build-dataset", w);
            const auto s = dataset::emit_dataset(built.rows, dataset_out);
            log_info("build-dataset", std::to_string(s.total) + " functions, " + std::to_string(s.vulnerable) + " vulnerable");
        } else if (*analyze) {
            const std::string name = rel_path.empty() ? fs::path(js_file).filename().string() : rel_path;
            const auto tree = js::analyze_source(read_file(js_file), name);
            const auto flat = js::flatten(tree);
            std::vector<int> flags;
            if (!diff_file.empty()) {
                std::vector<std::string> warnings;
                flags = dataset::label_functions(flat, diff::parse_unified_diff(read_file(diff_file)), {name}, &warnings);
                for (const auto& w : warnings) log_warn("analyze", w);
            }
            std::string text;
            for (std::size_t i = 0; i < flat.size(); ++i) {
                const auto m = js::compute_metrics(*flat[i]);
                json metrics = json::object();
                for (std::size_t k = 0; k < js::kMetricCount; ++k) metrics[std::string(js::kMetricNames[k])] = m.values[k];
                json line = {{"name", flat[i]->qualified_name},
                             {"start", {flat[i]->start_line, flat[i]->start_col}},
                             {"end", {flat[i]->end_line, flat[i]->end_col}},
                             {"metrics", metrics}};
                if (!flags.empty()) line["vulnerable"] = flags[i];
                text += line.dump() + "\n";
            }
            write_output(analyze_out, text);
        } else if (*train) {
            const auto cfg = eval_config(g);
            const auto a = ml::parse_algorithm(algo);
            eval::Grid grid = cfg.grids.count(a) ? cfg.grids.at(a) : eval::Grid{ml::HyperParams{}};
            if (!grid_file.empty()) {
                json gj;
                try {
                    gj = json::parse(read_file(grid_file));
                } catch (const json::parse_error& e) {
                    throw ValidationError("cannot parse grid " + grid_file + ": " + e.what());
                }
                grid = eval::config_from_json(json{{"grids", {{std::string(ml::to_string(a)), gj}}}}).grids.at(a);
            }
            const auto rs = eval::parse_resampling(resample);
            const auto data = load_features(dataset_in);
            const auto plan = eval::make_folds(data.y, cfg.seed, cfg.fold_count);
            const auto res = eval::grid_search(a, grid, data, plan, rs, cfg.seed, {cfg.jobs, cfg.pooling, eval::default_fit_predict});
            json table = json::array();
            for (const auto& r : res.table) table.push_back(eval::to_json(r));
            fs::create_directories(train_out);
            const std::string stem = std::string(ml::to_string(a)) + "_" + rs.label();
            write_file(fs::path(train_out) / (stem + "_search.json"), json{{"best", eval::to_json(res.best)}, {"table", table}}.dump(2) + "\n");
            if (!res.best.failed) {
                const auto fold = plan.fold(0);
                const auto train_rows = data.subset(eval::resample(fold.train, data.y, rs, derive_seed(cfg.seed, 0x10000)));
                const auto dev_rows = data.subset(fold.dev);
                const auto model = ml::train(res.best.spec, train_rows, cfg.seed, &dev_rows);
                write_file(fs::path(train_out) / (stem + "_model.json"), ml::to_json(model).dump() + "\n");
            }
            char line[160];
            std::snprintf(line, sizeof line, "best test P=%.3f R=%.3f F=%.3f MCC=%.3f", res.best.precision, res.best.recall,
                          res.best.f_measure, res.best.mcc);
            log_info("train", line);
        } else if (*sweep) {
            const auto cfg = eval_config(g);
            std::vector<eval::ResamplingSpec> rs;
            for (const auto& r : split_list(resamplings)) rs.push_back(eval::parse_resampling(r));
            if (rs.empty()) rs = eval::all_resamplings();
            const auto result = eval::sweep(load_features(dataset_in), cfg, algorithms(algos), rs, !no_rand);
            write_file(sweep_out, pipeline::to_json(result).dump(2) + "\n");
        } else if (*rand) {
            const auto cfg = eval_config(g);
            const auto result = eval::random_label_check(load_features(dataset_in), cfg, cfg.seed, algorithms(algos));
            json out = json::array();
            for (const auto& r : result) out.push_back(eval::to_json(r));
            write_file(rand_out, json{{"rand", out}}.dump(2) + "\n");
        } else if (*report) {
            const json j = json::parse(read_file(results_in));
            eval::SweepResult s;
            if (j.contains("cells")) {
                s = pipeline::sweep_from_json(j);
            } else {
                for (const auto& r : j.at("rand")) s.rand.push_back(eval::result_from_json(r));
            }
            eval::report(s.cells, s.rand, report_out);
        } else if (*run) {
            const std::string path = !run_config.empty() ? run_config : g.config;
            if (path.empty()) throw ValidationError("run needs a pipeline config");
            auto cfg = pipeline::load_pipeline_config(path);
            if (g.seed_set) cfg.eval.seed = g.seed;
            if (g.jobs) cfg.jobs = cfg.eval.jobs = g.jobs;
            pipeline::run_pipeline(cfg);
        }
    } catch (const ValidationError& e) {
        log(app.get_subcommands().front()->get_name(), LogLevel::error, e.what());
        return 2;
    } catch (const std::exception& e) {
        log(app.get_subcommands().front()->get_name(), LogLevel::error, e.what());
        return 1;
    }
    return 0;
}
