// One line per acceptance criterion; exit status 1 when a gating criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "../common/dnn_schedule.hpp"
#include "../common/fuzz_js.hpp"
#include "../common/metric_golden.hpp"
#include "jsvuln/dataset.hpp"
#include "jsvuln/diff.hpp"
#include "jsvuln/error.hpp"
#include "jsvuln/eval.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"
#include "jsvuln/parallel.hpp"
#include "jsvuln/pipeline.hpp"

using namespace jsvuln;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kFixtures = JSVULN_FIXTURES;

// Tolerances.
constexpr double kWorkedExampleSeconds = 1.0;
constexpr double kZeroRTolerance = 1e-12;
constexpr double kReportedZeroRF = 0.216;       // F for p = 1496/12125, rounded
constexpr double kReportedZeroRFSlack = 0.005;  // rounding of the reported value
constexpr double kKnnFloor = 0.70;
constexpr double kReportedMedian = 0.71;
constexpr double kMedianSlack = 0.08;
constexpr double kRandCeiling = 0.25;
constexpr int kRandSeeds = 5;
constexpr std::size_t kFullRows = 12125;
constexpr std::size_t kFullPositives = 1496;
constexpr double kLogisticGradTol = 1e-5;
constexpr double kMlpGradTol = 1e-4;
constexpr int kGradInstances = 20;
constexpr int kFuzzedStreams = 1000;
constexpr double kIdentityTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
    bool gating = true;
    bool skipped = false;
};

// 1

Outcome worked_example() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto patch = diff::parse_unified_diff(read_file(kFixtures + "/listings/listing1.diff"));
    const auto fns = js::analyze_source(read_file(kFixtures + "/listings/listing2.js"), "original.js");
    const auto flat = js::flatten(fns);
    const auto flags = dataset::label_functions(flat, patch, {"original.js"});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (patch.size() != 1 || patch[0].hunks.size() != 1 || flat.size() != 1) return {false, "unexpected fixture shape"};
    const auto range = diff::affected_old_range(patch[0].hunks[0]);
    const auto* foo = flat[0];
    const bool ok = range == diff::LineRange{4, 5} && foo->qualified_name == "foo" && foo->start_line == 1 && foo->end_line == 6 &&
                    flags == std::vector<int>{1} && secs < kWorkedExampleSeconds;
    char buf[200];
    std::snprintf(buf, sizeof buf, "hunk [%d,%d], %s span [%d,%d], flag %d, %.3f s", range.start, range.end, foo->qualified_name.c_str(),
                  foo->start_line, foo->end_line, flags.empty() ? -1 : flags[0], secs);
    return {ok, buf};
}

// 2

eval::FeatureMatrix constant_features(std::size_t pos, std::size_t neg) {
    eval::FeatureMatrix f;
    f.y.assign(pos, 1);
    f.y.resize(pos + neg, 0);
    f.x = ml::Matrix::Zero(static_cast<Eigen::Index>(pos + neg), 1);
    return f;
}

Outcome zeror_closed_form() {
    std::vector<eval::FeatureMatrix> sets;
    sets.push_back(eval::load_feature_csv(kFixtures + "/corpus/golden/dataset.csv"));
    sets.push_back(constant_features(kFullPositives, kFullRows - kFullPositives));
    sets.push_back(constant_features(50, 50));
    bool ok = true;
    double worst = 0.0;
    eval::EvalResult full;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto& f = sets[i];
        const auto r = eval::zeror_baseline(f, eval::make_folds(f.y, 1));
        const double p = double(std::count(f.y.begin(), f.y.end(), 1)) / double(f.rows());
        const double err = std::max({std::abs(r.precision - p), std::abs(r.recall - 1.0), std::abs(r.f_measure - 2 * p / (1 + p))});
        worst = std::max(worst, err);
        ok = ok && err <= kZeroRTolerance;
        if (i == 1) full = r;
    }
    ok = ok && std::abs(full.f_measure - kReportedZeroRF) <= kReportedZeroRFSlack;
    char buf[200];
    std::snprintf(buf, sizeof buf, "max error %.1e over 3 fixtures; p=1496/12125 gives P=%.4f R=%.2f F=%.4f", worst, full.precision,
                  full.recall, full.f_measure);
    return {ok, buf};
}

// 3

eval::EvalConfig default_config() {
    auto c = eval::config_from_json(json::object());
    c.jobs = default_jobs();
    return c;
}

Outcome quantitative_reproduction() {
    const char* env = std::getenv("JSVULN_PUBLIC_DATASET");
    const fs::path path = env ? fs::path(env) : fs::path(kFixtures) / "external" / "dataset.csv";
    if (!fs::exists(path)) return {true, "public dataset CSV not found at " + path.string() + "; non-gating", false, true};
    const auto data = eval::load_feature_csv(path);
    const auto cfg = default_config();
    std::vector<double> fs_none;
    double knn_f = 0.0;
    for (auto a : ml::kAllAlgorithms) {
        const auto r = eval::evaluate(a, data, {}, cfg);
        fs_none.push_back(r.f_measure);
        if (a == ml::Algorithm::knn) knn_f = r.f_measure;
    }
    const double med = eval::median(fs_none);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu rows; knn F=%.3f (floor %.2f), median F=%.3f (target %.2f +/- %.2f)", data.rows(), knn_f, kKnnFloor, med,
                  kReportedMedian, kMedianSlack);
    return {knn_f >= kKnnFloor && std::abs(med - kReportedMedian) <= kMedianSlack, buf, false};
}

// 4

/// Metric-like synthetic rows: a latent size drives the count columns, and the
/// vulnerable flag leans towards larger functions.
eval::FeatureMatrix synthetic_full_size(std::uint64_t seed) {
    Rng rng(seed);
    eval::FeatureMatrix f;
    const std::size_t n = kFullRows;
    f.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(js::kMetricCount));
    std::vector<std::pair<double, std::size_t>> size(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = std::exp(1.5 + 0.9 * rng.normal());
        size[i] = {s + 3.0 * rng.normal(), i};
        for (std::size_t j = 0; j < js::kMetricCount; ++j) {
            const double scale = 0.2 + double(j % 7);
            f.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::round(s * scale * std::exp(0.3 * rng.normal()));
        }
    }
    std::sort(size.rbegin(), size.rend());
    f.y.assign(n, 0);
    for (std::size_t k = 0; k < kFullPositives; ++k) f.y[size[k].second] = 1;
    for (auto name : js::kMetricNames) f.column_names.emplace_back(name);
    return f;
}

eval::EvalConfig compact_config(std::uint64_t seed) {
    auto c = eval::config_from_json(json::parse(R"({
        "grids": {
            "knn": {"k": [5]},
            "tree": {"max_depth": [8]},
            "forest": {"n_trees": [10], "max_depth": [8]},
            "svm": {"C": [1], "max_iter": [100]},
            "logistic": {"l2": [0.01], "max_iter": [200]},
            "dnn_s": {"hidden1": [32], "hidden2": [0], "learning_rate": [0.1], "epochs": [5]},
            "dnn_c": {"hidden1": [32], "hidden2": [0], "learning_rate": [0.1], "max_epochs": [8]}
        }})"));
    c.seed = seed;
    c.jobs = default_jobs();
    return c;
}

Outcome random_label_sanity() {
    const auto data = synthetic_full_size(2024);
    double worst = 0.0;
    std::string worst_name;
    bool ok = true;
    for (int s = 0; s < kRandSeeds; ++s) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
        for (const auto& r : eval::random_label_check(data, compact_config(seed), seed)) {
            if (r.failed || r.f_measure > kRandCeiling) ok = false;
            if (r.f_measure >= worst) {
                worst = r.f_measure;
                worst_name = std::string(ml::to_string(r.spec.algorithm)) + " seed " + std::to_string(seed);
            }
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu synthetic rows, %zu positives, %d seeds x 9 algorithms; max Rand F=%.3f (%s), ceiling %.2f", kFullRows,
                  kFullPositives, kRandSeeds, worst, worst_name.c_str(), kRandCeiling);
    return {ok, buf};
}

// 5

Outcome resampling_arithmetic() {
    std::vector<int> y(100, 1);
    y.resize(1100, 0);
    std::vector<std::size_t> rows(y.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    int cells = 0;
    bool ok = true;
    for (const auto& spec : eval::all_resamplings()) {
        if (spec.strategy == eval::Strategy::none) continue;
        ++cells;
        const auto out = eval::resample(rows, y, spec, 17);
        std::size_t pos = 0, neg = 0;
        for (std::size_t i : out) (y[i] ? pos : neg)++;
        if (spec.strategy == eval::Strategy::over) {
            ok = ok && neg == 1000 && pos == static_cast<std::size_t>(std::llround(spec.ratio * 1000));
        } else {
            ok = ok && pos == 100 && neg == static_cast<std::size_t>(std::llround(100 / spec.ratio));
        }
    }
    return {ok && cells == 8, std::to_string(cells) + " cells on 1000 majority / 100 minority"};
}

// 6

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Outcome gradient_checks() {
    Rng rng(31);
    double worst_log = 0.0, worst_mlp = 0.0;
    const double h = 1e-6;
    for (int t = 0; t < kGradInstances; ++t) {
        const int n = 5 + int(rng.below(20)), d = 1 + int(rng.below(6));
        ml::Matrix x(n, d);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
            y[static_cast<std::size_t>(i)] = int(rng.below(2));
        }
        ml::Vector w(d);
        for (int j = 0; j < d; ++j) w(j) = rng.normal();
        const double b = rng.normal(), l2 = rng.uniform() * 0.5;
        const auto g = ml::logistic_loss_grad(x, y, w, b, l2);
        for (int j = 0; j < d; ++j) {
            ml::Vector wp = w, wm = w;
            wp(j) += h;
            wm(j) -= h;
            const double num = (ml::logistic_loss_grad(x, y, wp, b, l2).loss - ml::logistic_loss_grad(x, y, wm, b, l2).loss) / (2 * h);
            worst_log = std::max(worst_log, rel_error(g.grad_w(j), num));
        }
        const double numb = (ml::logistic_loss_grad(x, y, w, b + h, l2).loss - ml::logistic_loss_grad(x, y, w, b - h, l2).loss) / (2 * h);
        worst_log = std::max(worst_log, rel_error(g.grad_b, numb));

        std::vector<int> widths{d, 2 + int(rng.below(5))};
        if (rng.below(2)) widths.push_back(2 + int(rng.below(4)));
        widths.push_back(1);
        ml::MlpState s = ml::init_mlp(widths, rng);
        for (auto& bias : s.biases)
            for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = 0.1 * rng.normal();
        const auto mg = ml::mlp_loss_grad(s, x, y);
        for (std::size_t l = 0; l < s.weights.size(); ++l) {
            for (Eigen::Index i = 0; i < s.weights[l].rows(); ++i) {
                for (Eigen::Index j = 0; j < s.weights[l].cols(); ++j) {
                    auto p = s, m = s;
                    p.weights[l](i, j) += h;
                    m.weights[l](i, j) -= h;
                    const double num = (ml::mlp_loss_grad(p, x, y).loss - ml::mlp_loss_grad(m, x, y).loss) / (2 * h);
                    worst_mlp = std::max(worst_mlp, rel_error(mg.grad.weights[l](i, j), num));
                }
                auto p = s, m = s;
                p.biases[l](i) += h;
                m.biases[l](i) -= h;
                const double num = (ml::mlp_loss_grad(p, x, y).loss - ml::mlp_loss_grad(m, x, y).loss) / (2 * h);
                worst_mlp = std::max(worst_mlp, rel_error(mg.grad.biases[l](i), num));
            }
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d instances each; max relative error logistic %.2e (tol %.0e), MLP %.2e (tol %.0e)", kGradInstances,
                  worst_log, kLogisticGradTol, worst_mlp, kMlpGradTol);
    return {worst_log <= kLogisticGradTol && worst_mlp <= kMlpGradTol, buf};
}

// 7

Outcome no_leakage() {
    Rng rng(3);
    eval::FeatureMatrix data;
    data.x.resize(200, 2);
    for (int i = 0; i < 200; ++i) {
        data.y.push_back(rng.uniform() < 0.3);
        data.x(i, 0) = rng.normal();
        data.x(i, 1) = rng.normal();
    }
    // k=1 is perfect on dev and inverted on test; k=2 is constant-positive on dev and perfect on test.
    eval::SearchOptions opt;
    opt.fit = [](const ml::ModelSpec& spec, const eval::FeatureMatrix&, const eval::FeatureMatrix& dev, const eval::FeatureMatrix& test,
                 std::uint64_t) {
        eval::FoldPredictions p;
        if (spec.params.at("k") == 1) {
            p.dev = dev.y;
            p.test = test.y;
            for (auto& v : p.test) v = 1 - v;
        } else {
            p.dev.assign(dev.rows(), 1);
            p.test = test.y;
        }
        return p;
    };
    const auto res = eval::grid_search(ml::Algorithm::knn, eval::cartesian({{"k", {2, 1}}}), data, eval::make_folds(data.y, 5), {}, 5, opt);
    const auto& test_best = res.table[0];
    const bool ok = res.best.spec.params.at("k") == 1 && test_best.f_measure > res.best.f_measure;
    char buf[200];
    std::snprintf(buf, sizeof buf, "selected k=%g (dev F %.2f, test F %.2f); test-optimal k=2 has test F %.2f", res.best.spec.params.at("k"),
                  res.best.dev_f, res.best.f_measure, test_best.f_measure);
    return {ok, buf};
}

// 8

Outcome metric_golden() {
    int checked = 0;
    const auto mismatches = golden::check_all(kFixtures + "/metrics_golden", true, &checked);
    std::mt19937 gen(8);
    int violations = 0, functions = 0;
    for (int s = 0; s < kFuzzedStreams; ++s) {
        const auto tree = js::analyze_source(fuzz::token_stream_function(gen), "fuzz.js");
        for (const auto* f : js::flatten(tree)) {
            ++functions;
            const auto m = js::compute_metrics(*f);
            using js::Metric;
            auto close = [](double a, double b) { return std::abs(a - b) <= kIdentityTol * std::max(1.0, std::abs(b)); };
            if (!close(m[Metric::HLEN], m[Metric::HOR_T] + m[Metric::HON_T]) || !close(m[Metric::HEFF], m[Metric::HDIFF] * m[Metric::HVOL]) ||
                !close(m[Metric::HTIME], m[Metric::HEFF] / 18.0) || !close(m[Metric::HBUGS], m[Metric::HVOL] / 3000.0))
                ++violations;
        }
    }
    std::string detail = std::to_string(checked) + " hand-counted functions, " + std::to_string(mismatches.size()) + " mismatches; " +
                         std::to_string(kFuzzedStreams) + " fuzzed streams (" + std::to_string(functions) + " functions), " +
                         std::to_string(violations) + " identity violations";
    if (!mismatches.empty()) detail += "; first: " + golden::describe(mismatches.front());
    return {mismatches.empty() && checked >= 11 && violations == 0 && functions >= kFuzzedStreams, detail};
}

// 9

Outcome dnn_c_schedule() {
    Rng rng(9);
    eval::FeatureMatrix data;
    data.x.resize(60, 3);
    for (int i = 0; i < 60; ++i) {
        data.y.push_back(i % 3 == 0);
        for (int j = 0; j < 3; ++j) data.x(i, j) = rng.normal() + data.y.back();
    }
    const auto scores = oracle::rigged_scores();
    const double lr0 = 0.2;
    std::vector<ml::TrainedModel> seen;
    const auto m = ml::train_dnn_c({ml::Algorithm::dnn_c, {{"learning_rate", lr0}}}, data, 4, [&](const ml::TrainedModel& c, int epoch) {
        seen.push_back(c);
        return scores.at(static_cast<std::size_t>(epoch - 1));
    });
    const auto expected = oracle::simulate_dnn_c(scores, lr0, 100);
    bool ok = m.schedule.size() == expected.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i)
        ok = m.schedule[i].epoch == expected[i].epoch && m.schedule[i].improved == expected[i].improved &&
             m.schedule[i].learning_rate == expected[i].learning_rate && m.schedule[i].consecutive_misses == expected[i].misses;
    std::size_t last_improvement = 0;
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (expected[i].improved) last_improvement = i;
    ok = ok && std::get<ml::MlpState>(m.state).weights == std::get<ml::MlpState>(seen.at(last_improvement).state).weights;
    int halvings = 0;
    for (const auto& e : m.schedule) halvings += !e.improved;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu epochs, %d halvings, final rate lr0/%.0f, checkpoint of epoch %zu returned", m.schedule.size(), halvings,
                  m.schedule.empty() ? 0.0 : lr0 / m.schedule.back().learning_rate, last_improvement + 1);
    return {ok, buf};
}

// 10

Outcome offline_pipeline() {
    const std::string corpus = kFixtures + "/corpus";
    const fs::path work = fs::temp_directory_path() / "jsvuln_acceptance_pipeline";
    fs::remove_all(work);
    json cfg = json::parse(read_file(corpus + "/pipeline.json"));
    cfg["work_dir"] = work.string();
    github::set_network_allowed(false);
    const std::size_t before = github::network_request_count();
    pipeline::run_pipeline(pipeline::pipeline_config_from_json(cfg, corpus));
    const bool offline = github::network_request_count() == before;
    github::set_network_allowed(true);

    const auto entries = advisory::load_advisories(work / "advisories.json");
    const auto resolutions = github::load_resolutions(work / "resolutions");
    const auto decisions = github::parse_decisions(json::parse(read_file(corpus + "/decisions.json")));
    int multi = 0, via_issue = 0;
    for (const auto& r : resolutions) {
        if (r.status != github::Status::resolved) continue;
        if (r.fixing_commits.size() >= 2) ++multi;
        for (const auto& d : decisions)
            if (d.accepted && d.advisory_id == r.advisory_id &&
                std::find(r.fixing_commits.begin(), r.fixing_commits.end(), d.commit_sha) != r.fixing_commits.end())
                ++via_issue;
    }
    bool golden = true;
    for (const auto& [out, ref] : std::vector<std::pair<std::string, std::string>>{
             {"dataset.csv", "dataset.csv"}, {"report/table2.csv", "table2.csv"}, {"report/metrics_long.csv", "metrics_long.csv"}})
        golden = golden && read_file(work / out) == read_file(corpus + "/golden/" + ref);
    const auto rows = dataset::load_dataset(work / "dataset.csv");
    const auto expected = json::parse(read_file(corpus + "/expected_rows.json"));
    const bool rows_ok = rows.size() == expected["total"].get<std::size_t>();
    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "full-scale rebuild not reproducible offline; corpus: %zu advisories, %d multi-commit fixes, %d issue-mediated, %zu rows, "
                  "golden CSVs %s, network requests %s",
                  entries.size(), multi, via_issue, rows.size(), golden ? "match" : "DIFFER", offline ? "none" : "MADE");
    return {entries.size() >= 3 && multi >= 2 && via_issue >= 1 && golden && rows_ok && offline, buf};
}

}  // namespace

int main() {
    set_log_threshold(LogLevel::error);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"worked-example fidelity", worked_example},
        {"ZeroR closed form", zeror_closed_form},
        {"quantitative reproduction", quantitative_reproduction},
        {"random-label sanity", random_label_sanity},
        {"resampling arithmetic", resampling_arithmetic},
        {"gradient checks", gradient_checks},
        {"no test leakage in selection", no_leakage},
        {"metric golden suite", metric_golden},
        {"DNN_c schedule", dnn_c_schedule},
        {"offline end-to-end pipeline", offline_pipeline},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const char* status = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
        std::printf("[%s] %zu %s: %s\n", status, i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && o.gating) ++failures;
    }
    return failures ? 1 : 0;
}
