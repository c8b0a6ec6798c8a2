#include "jsvuln/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"
#include "jsvuln/parallel.hpp"

namespace jsvuln::eval {

using nlohmann::json;

FeatureMatrix features_from_dataset(const std::vector<dataset::DatasetRow>& rows) {
    FeatureMatrix f;
    f.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(js::kMetricCount));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < js::kMetricCount; ++j)
            f.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].metrics.values[j];
        f.y.push_back(rows[i].flag);
    }
    for (auto name : js::kMetricNames) f.column_names.emplace_back(name);
    return f;
}

FeatureMatrix load_feature_csv(const std::filesystem::path& path) {
    const auto table = dataset::parse_csv(read_file(path));
    if (table.empty()) throw ParseError(path.string() + ": empty CSV");
    const auto& header = table.front();
    auto lower = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    std::vector<std::size_t> metric_col;
    for (auto name : js::kMetricNames) {
        const auto it = std::find(header.begin(), header.end(), std::string(name));
        if (it == header.end()) throw ParseError(path.string() + ": missing metric column " + std::string(name));
        metric_col.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (lower(header[i]) == "vulnerable" || lower(header[i]) == "vuln") label_col = i;
    if (label_col == header.size()) throw ParseError(path.string() + ": missing label column");
    FeatureMatrix f;
    for (auto name : js::kMetricNames) f.column_names.emplace_back(name);
    f.x.resize(static_cast<Eigen::Index>(table.size() - 1), static_cast<Eigen::Index>(metric_col.size()));
    auto number = [&](const std::string& cell, std::size_t line) {
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            return v;
        } catch (const std::exception&) {
            throw ParseError(path.string() + ":" + std::to_string(line + 1) + ": not a number: '" + cell + "'");
        }
    };
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& row = table[r];
        if (row.size() != header.size()) throw ParseError(path.string() + ":" + std::to_string(r + 1) + ": wrong field count");
        for (std::size_t j = 0; j < metric_col.size(); ++j)
            f.x(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = number(row[metric_col[j]], r);
        f.y.push_back(number(row[label_col], r) > 0 ? 1 : 0);
    }
    return f;
}

// Splitting.

Fold SplitPlan::fold(std::size_t i) const {
    const std::size_t k = blocks.size();
    if (i >= k) throw ValidationError("fold index out of range");
    Fold f;
    f.test = blocks[i];
    f.dev = blocks[(i + 1) % k];
    for (std::size_t b = 0; b < k; ++b)
        if (b != i && b != (i + 1) % k) f.train.insert(f.train.end(), blocks[b].begin(), blocks[b].end());
    std::sort(f.train.begin(), f.train.end());
    return f;
}

SplitPlan make_folds(const std::vector<int>& labels, std::uint64_t seed, std::size_t fold_count) {
    if (fold_count < 3) throw ValidationError("at least 3 folds are needed for train, dev and test");
    if (labels.size() < fold_count)
        throw ValidationError("need at least " + std::to_string(fold_count) + " rows to build folds, got " + std::to_string(labels.size()));
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(pos));
    rng.shuffle(std::span<std::size_t>(neg));
    SplitPlan plan;
    plan.seed = seed;
    plan.blocks.resize(fold_count);
    std::size_t next = 0;
    for (const auto* group : {&pos, &neg}) {
        for (std::size_t i : *group) {
            plan.blocks[next].push_back(i);
            next = (next + 1) % fold_count;
        }
    }
    for (auto& b : plan.blocks) std::sort(b.begin(), b.end());
    return plan;
}

// Resampling.

std::string ResamplingSpec::label() const {
    if (strategy == Strategy::none) return "none";
    return (strategy == Strategy::over ? "over" : "under") + std::to_string(static_cast<int>(std::lround(ratio * 100)));
}

ResamplingSpec parse_resampling(const std::string& s) {
    if (s == "none") return {};
    for (const auto& r : all_resamplings())
        if (r.label() == s) return r;
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const std::string kind = s.substr(0, colon);
        double ratio = 0.0;
        try {
            std::size_t used = 0;
            ratio = std::stod(s.substr(colon + 1), &used);
            if (used != s.size() - colon - 1) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw ValidationError("bad resampling ratio in '" + s + "'");
        }
        if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("resampling ratio must lie in (0, 1]: " + s);
        if (kind == "over") return {Strategy::over, ratio};
        if (kind == "under") return {Strategy::under, ratio};
    }
    throw ValidationError("unknown resampling strategy '" + s + "'");
}

const std::vector<ResamplingSpec>& all_resamplings() {
    static const std::vector<ResamplingSpec> all = {
        {Strategy::none, 0.0},   {Strategy::over, 0.25},  {Strategy::over, 0.50},  {Strategy::over, 0.75},  {Strategy::over, 1.0},
        {Strategy::under, 0.25}, {Strategy::under, 0.50}, {Strategy::under, 0.75}, {Strategy::under, 1.0},
    };
    return all;
}

std::vector<std::size_t> resample(const std::vector<std::size_t>& rows, const std::vector<int>& labels, const ResamplingSpec& spec,
                                  std::uint64_t seed) {
    if (spec.strategy == Strategy::none) return rows;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i : rows) (labels.at(i) ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw ValidationError("resampling needs both classes in the training rows");
    const bool pos_minority = pos.size() <= neg.size();
    const auto& minority = pos_minority ? pos : neg;
    const auto& majority = pos_minority ? neg : pos;
    Rng rng(seed);
    if (spec.strategy == Strategy::over) {
        const auto target = static_cast<std::size_t>(std::llround(spec.ratio * double(majority.size())));
        std::vector<std::size_t> out = rows;
        for (std::size_t have = minority.size(); have < target; ++have) out.push_back(minority[rng.below(minority.size())]);
        return out;
    }
    const auto target = static_cast<std::size_t>(std::llround(double(minority.size()) / spec.ratio));
    if (majority.size() <= target) return rows;
    std::vector<std::size_t> pick = majority;
    rng.shuffle(std::span<std::size_t>(pick));
    pick.resize(target);
    const std::set<std::size_t> keep(pick.begin(), pick.end());
    const int majority_label = pos_minority ? 0 : 1;
    std::vector<std::size_t> out;
    for (std::size_t i : rows)
        if (labels[i] != majority_label || keep.count(i)) out.push_back(i);
    return out;
}

// Scoring.

void finalize(EvalResult& r, Pooling pooling, const std::vector<Confusion>& dev_folds, const std::vector<Confusion>& test_folds) {
    r.dev = {};
    r.test = {};
    for (const auto& c : dev_folds) r.dev += c;
    for (const auto& c : test_folds) r.test += c;
    if (pooling == Pooling::pooled) {
        r.dev_precision = r.dev.precision();
        r.dev_f = r.dev.f_measure();
        r.precision = r.test.precision();
        r.recall = r.test.recall();
        r.f_measure = r.test.f_measure();
        r.mcc = r.test.mcc();
        return;
    }
    auto mean = [](const std::vector<Confusion>& cs, double (Confusion::*m)() const) {
        double s = 0.0;
        for (const auto& c : cs) s += (c.*m)();
        return cs.empty() ? 0.0 : s / double(cs.size());
    };
    r.dev_precision = mean(dev_folds, &Confusion::precision);
    r.dev_f = mean(dev_folds, &Confusion::f_measure);
    r.precision = mean(test_folds, &Confusion::precision);
    r.recall = mean(test_folds, &Confusion::recall);
    r.f_measure = mean(test_folds, &Confusion::f_measure);
    r.mcc = mean(test_folds, &Confusion::mcc);
}

Grid cartesian(const std::map<std::string, std::vector<double>>& axes) {
    Grid out{HyperParams{}};
    for (const auto& [key, values] : axes) {
        if (values.empty()) throw ValidationError("grid axis '" + key + "' has no values");
        Grid next;
        for (const auto& base : out) {
            for (double v : values) {
                HyperParams p = base;
                p[key] = v;
                next.push_back(std::move(p));
            }
        }
        out = std::move(next);
    }
    return out;
}

Grid product(const Grid& a, const Grid& b) {
    Grid out;
    for (const auto& x : a) {
        for (const auto& y : b) {
            HyperParams p = x;
            p.insert(y.begin(), y.end());
            out.push_back(std::move(p));
        }
    }
    return out;
}

FoldPredictions default_fit_predict(const ModelSpec& spec, const FeatureMatrix& train, const FeatureMatrix& dev,
                                    const FeatureMatrix& test, std::uint64_t seed) {
    const auto model = ml::train(spec, train, seed, &dev);
    return {ml::predict(model, dev.x), ml::predict(model, test.x)};
}

namespace {

std::string describe(const HyperParams& p) {
    std::string s;
    for (const auto& [k, v] : p) {
        if (!s.empty()) s += ';';
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", v);
        s += k + "=" + buf;
    }
    return s;
}

struct FoldData {
    FeatureMatrix train, dev, test;
};

}  // namespace

SearchResult grid_search(Algorithm algorithm, const Grid& grid, const FeatureMatrix& data, const SplitPlan& plan,
                         const ResamplingSpec& resampling, std::uint64_t seed, const SearchOptions& options) {
    if (grid.empty()) throw ValidationError("empty hyper-parameter grid for " + std::string(ml::to_string(algorithm)));
    data.validate();
    const std::size_t k = plan.fold_count();
    std::vector<FoldData> folds(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Fold f = plan.fold(i);
        folds[i].train = data.subset(resample(f.train, data.y, resampling, derive_seed(seed, 0x10000 + i)));
        folds[i].dev = data.subset(f.dev);
        folds[i].test = data.subset(f.test);
    }
    const std::size_t units = grid.size() * k;
    std::vector<Confusion> dev_c(units), test_c(units);
    std::vector<std::string> errors(units);
    parallel_for(units, options.jobs, [&](std::size_t u) {
        const std::size_t combo = u / k, fold = u % k;
        const ModelSpec spec{algorithm, grid[combo]};
        try {
            const auto& fd = folds[fold];
            const auto p = options.fit(spec, fd.train, fd.dev, fd.test, derive_seed(seed, fold));
            dev_c[u] = ml::confusion(p.dev, fd.dev.y);
            test_c[u] = ml::confusion(p.test, fd.test.y);
        } catch (const std::exception& e) {
            errors[u] = *e.what() ? e.what() : "training failed";
        }
    });
    SearchResult out;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        EvalResult r;
        r.spec = {algorithm, grid[c]};
        r.resampling = resampling;
        for (std::size_t f = 0; f < k; ++f) {
            if (!errors[c * k + f].empty() && !r.failed) {
                r.failed = true;
                r.error = "fold " + std::to_string(f) + ": " + errors[c * k + f];
                log_warn("eval", std::string(ml::to_string(algorithm)) + " [" + describe(grid[c]) + "] failed: " + r.error);
            }
        }
        if (!r.failed)
            finalize(r, options.pooling, {dev_c.begin() + long(c * k), dev_c.begin() + long((c + 1) * k)},
                     {test_c.begin() + long(c * k), test_c.begin() + long((c + 1) * k)});
        out.table.push_back(std::move(r));
    }
    const EvalResult* best = nullptr;
    for (const auto& r : out.table) {
        if (r.failed) continue;
        if (!best || r.dev_f > best->dev_f || (r.dev_f == best->dev_f && r.dev_precision > best->dev_precision)) best = &r;
    }
    out.best = best ? *best : out.table.front();
    return out;
}

EvalResult zeror_baseline(const FeatureMatrix& data, const SplitPlan& plan) {
    return grid_search(Algorithm::zeror, Grid{HyperParams{}}, data, plan, {}, plan.seed).best;
}

// Configuration.

std::map<Algorithm, Grid> default_grids() {
    const Grid layers = {{{"hidden1", 32}, {"hidden2", 0}}, {{"hidden1", 64}, {"hidden2", 32}}};
    std::map<Algorithm, Grid> g;
    g[Algorithm::knn] = cartesian({{"k", {1, 3, 5, 9, 15}}});
    g[Algorithm::tree] = cartesian({{"max_depth", {4, 8, 16, 0}}, {"min_samples_split", {2, 10}}});
    g[Algorithm::forest] = cartesian({{"n_trees", {50, 100}}, {"max_depth", {8, 16, 0}}});
    g[Algorithm::svm] = cartesian({{"C", {0.1, 1, 10}}});
    g[Algorithm::logistic] = cartesian({{"l2", {0, 0.01, 0.1}}});
    g[Algorithm::linear] = Grid{HyperParams{}};
    g[Algorithm::bayes] = Grid{HyperParams{}};
    g[Algorithm::dnn_s] = product(layers, cartesian({{"learning_rate", {0.1, 0.3}}, {"epochs", {20, 50}}}));
    g[Algorithm::dnn_c] = product(layers, cartesian({{"learning_rate", {0.1, 0.3}}}));
    return g;
}

namespace {

Grid grid_from_json(Algorithm a, const json& j) {
    Grid grid;
    if (j.is_object()) {
        std::map<std::string, std::vector<double>> axes;
        for (const auto& [key, v] : j.items()) {
            if (v.is_number()) {
                axes[key] = {v.get<double>()};
            } else if (v.is_array()) {
                axes[key] = v.get<std::vector<double>>();
            } else {
                throw ValidationError("grid value for '" + key + "' must be a number or a list");
            }
        }
        grid = cartesian(axes);
    } else if (j.is_array()) {
        for (const auto& combo : j) grid.push_back(combo.get<HyperParams>());
    } else {
        throw ValidationError("grid for " + std::string(ml::to_string(a)) + " must be an object or a list");
    }
    if (grid.empty()) throw ValidationError("empty grid for " + std::string(ml::to_string(a)));
    for (const auto& p : grid) ml::complete_spec({a, p});
    return grid;
}

}  // namespace

EvalConfig config_from_json(const json& j) {
    EvalConfig c;
    c.grids = default_grids();
    try {
        if (!j.is_object()) throw ValidationError("evaluation config must be a JSON object");
        if (j.contains("fold_count")) c.fold_count = j["fold_count"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("jobs")) c.jobs = j["jobs"].get<unsigned>();
        if (j.contains("pooling")) {
            const auto p = j["pooling"].get<std::string>();
            if (p == "pooled") {
                c.pooling = Pooling::pooled;
            } else if (p == "averaged") {
                c.pooling = Pooling::averaged;
            } else {
                throw ValidationError("pooling must be 'pooled' or 'averaged'");
            }
        }
        if (j.contains("grids"))
            for (const auto& [name, g] : j["grids"].items()) c.grids[ml::parse_algorithm(name)] = grid_from_json(ml::parse_algorithm(name), g);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad evaluation config: ") + e.what());
    }
    if (c.fold_count < 3) throw ValidationError("fold_count must be at least 3");
    return c;
}

EvalConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
}

// Experiments.

std::vector<int> shuffled_labels(const std::vector<int>& labels, std::uint64_t seed) {
    std::vector<int> out = labels;
    Rng rng(seed);
    rng.shuffle(std::span<int>(out));
    return out;
}

EvalResult evaluate(Algorithm algorithm, const FeatureMatrix& data, const ResamplingSpec& resampling, const EvalConfig& config) {
    const auto plan = make_folds(data.y, config.seed, config.fold_count);
    const auto it = config.grids.find(algorithm);
    const Grid grid = it != config.grids.end() ? it->second : Grid{HyperParams{}};
    return grid_search(algorithm, grid, data, plan, resampling, config.seed, {config.jobs, config.pooling, default_fit_predict}).best;
}

std::vector<EvalResult> random_label_check(const FeatureMatrix& data, const EvalConfig& config, std::uint64_t seed,
                                           const std::vector<Algorithm>& algorithms) {
    FeatureMatrix shuffled = data;
    shuffled.y = shuffled_labels(data.y, seed);
    std::vector<EvalResult> out;
    for (Algorithm a : algorithms) {
        log_info("rand-check", "searching " + std::string(ml::to_string(a)) + " on shuffled labels");
        out.push_back(evaluate(a, shuffled, {}, config));
    }
    return out;
}

SweepResult sweep(const FeatureMatrix& data, const EvalConfig& config, const std::vector<Algorithm>& algorithms,
                  const std::vector<ResamplingSpec>& resamplings, bool with_rand) {
    SweepResult s;
    for (Algorithm a : algorithms) {
        for (const auto& r : resamplings) {
            log_info("sweep", std::string(ml::to_string(a)) + " / " + r.label());
            s.cells.push_back(evaluate(a, data, r, config));
        }
    }
    if (with_rand) s.rand = random_label_check(data, config, derive_seed(config.seed, 0x52414e44), algorithms);
    s.zeror = zeror_baseline(data, make_folds(data.y, config.seed, config.fold_count));
    return s;
}

// Reporting.

double median(std::vector<double> v) {
    if (v.empty()) throw ValidationError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

namespace {

std::string fmt(double v, const char* f = "%.4f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

std::string table_csv(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand) {
    std::vector<std::string> columns;
    for (const auto& r : all_resamplings()) columns.push_back(r.label());
    columns.push_back(kRandColumn);
    std::map<Algorithm, std::map<std::string, double>> grid;
    for (const auto& c : cells)
        if (!c.failed) grid[c.spec.algorithm][c.resampling.label()] = c.f_measure;
    for (const auto& c : rand)
        if (!c.failed) grid[c.spec.algorithm][kRandColumn] = c.f_measure;
    std::ostringstream out;
    out << "algorithm";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    std::vector<Algorithm> order(std::begin(ml::kAllAlgorithms), std::end(ml::kAllAlgorithms));
    order.push_back(Algorithm::zeror);
    bool any = false;
    for (Algorithm a : order) {
        const auto it = grid.find(a);
        if (it == grid.end()) continue;
        any = true;
        out << ml::to_string(a);
        for (const auto& c : columns) {
            out << ',';
            if (it->second.count(c)) out << fmt(it->second.at(c));
        }
        out << '\n';
    }
    if (any) {
        out << "median";
        for (const auto& c : columns) {
            std::vector<double> v;
            for (const auto& [a, row] : grid)
                if (row.count(c)) v.push_back(row.at(c));
            out << ',';
            if (!v.empty()) out << fmt(median(v));
        }
        out << '\n';
    }
    return out.str();
}

std::string long_csv(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand) {
    std::ostringstream out;
    out << "algorithm,resampling,params,tp,fp,tn,fn,precision,recall,f_measure,mcc,dev_precision,dev_f,failed\n";
    auto line = [&](const EvalResult& r, const std::string& column) {
        out << ml::to_string(r.spec.algorithm) << ',' << column << ',' << dataset::csv_field(describe(r.spec.params)) << ',' << r.test.tp
            << ',' << r.test.fp << ',' << r.test.tn << ',' << r.test.fn << ',' << fmt(r.precision, "%.6f") << ','
            << fmt(r.recall, "%.6f") << ',' << fmt(r.f_measure, "%.6f") << ',' << fmt(r.mcc, "%.6f") << ','
            << fmt(r.dev_precision, "%.6f") << ',' << fmt(r.dev_f, "%.6f") << ',' << (r.failed ? 1 : 0) << '\n';
    };
    for (const auto& r : cells) line(r, r.resampling.label());
    for (const auto& r : rand) line(r, kRandColumn);
    return out.str();
}

void report(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
    write_file(dir / "table2.csv", table_csv(cells, rand));
    write_file(dir / "metrics_long.csv", long_csv(cells, rand));
}

json to_json(const EvalResult& r) {
    auto conf = [](const Confusion& c) { return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}; };
    return {{"algorithm", ml::to_string(r.spec.algorithm)},
            {"params", r.spec.params},
            {"resampling", r.resampling.label()},
            {"dev", conf(r.dev)},
            {"test", conf(r.test)},
            {"dev_precision", r.dev_precision},
            {"dev_f", r.dev_f},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f_measure", r.f_measure},
            {"mcc", r.mcc},
            {"failed", r.failed},
            {"error", r.error}};
}

EvalResult result_from_json(const json& j) {
    auto conf = [](const json& c) {
        return Confusion{c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                         c.at("fn").get<std::size_t>()};
    };
    try {
        EvalResult r;
        r.spec = {ml::parse_algorithm(j.at("algorithm").get<std::string>()), j.at("params").get<HyperParams>()};
        r.resampling = parse_resampling(j.at("resampling").get<std::string>());
        r.dev = conf(j.at("dev"));
        r.test = conf(j.at("test"));
        r.dev_precision = j.at("dev_precision").get<double>();
        r.dev_f = j.at("dev_f").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.f_measure = j.at("f_measure").get<double>();
        r.mcc = j.at("mcc").get<double>();
        r.failed = j.at("failed").get<bool>();
        r.error = j.at("error").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad evaluation result: ") + e.what());
    }
}

}  // namespace jsvuln::eval
