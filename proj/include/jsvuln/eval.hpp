#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsvuln/dataset.hpp"
#include "jsvuln/ml.hpp"

namespace jsvuln::eval {

using ml::Algorithm;
using ml::Confusion;
using ml::FeatureMatrix;
using ml::HyperParams;
using ml::ModelSpec;

/// The 35 metric columns as features and the vulnerable flag as label.
FeatureMatrix features_from_dataset(const std::vector<dataset::DatasetRow>& rows);
/// Any CSV whose header names the 35 metric columns and a label column
/// ("vulnerable" or "Vuln", any case; values > 0 count as vulnerable).
/// Throws ParseError when a column is missing or a cell is not numeric.
FeatureMatrix load_feature_csv(const std::filesystem::path& path);

struct Fold {
    std::vector<std::size_t> train, dev, test;
};

/// Stratified blocks of row indices. Fold i tests on block i, selects on
/// block (i+1) mod k and trains on the rest.
struct SplitPlan {
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> blocks;

    std::size_t fold_count() const { return blocks.size(); }
    Fold fold(std::size_t i) const;
};

/// Throws ValidationError when there are fewer rows than folds.
SplitPlan make_folds(const std::vector<int>& labels, std::uint64_t seed, std::size_t fold_count = 10);

enum class Strategy { none, over, under };

struct ResamplingSpec {
    Strategy strategy = Strategy::none;
    double ratio = 0.0;  ///< target minority:majority ratio; 0 for none

    std::string label() const;  ///< none, over25, ..., under100
    bool operator==(const ResamplingSpec&) const = default;
};

/// Accepts "none", "over:0.5", "under:0.25" and the label() spelling.
ResamplingSpec parse_resampling(const std::string& s);
/// none, then over and under at 25/50/75/100%.
const std::vector<ResamplingSpec>& all_resamplings();

/// Training rows after random over- or under-sampling. Over-sampling appends
/// minority rows drawn with replacement; under-sampling keeps a random subset
/// of the majority in original order. Throws ValidationError if a class is missing.
std::vector<std::size_t> resample(const std::vector<std::size_t>& rows, const std::vector<int>& labels, const ResamplingSpec& spec,
                                  std::uint64_t seed);

enum class Pooling { pooled, averaged };

struct EvalResult {
    ModelSpec spec;
    ResamplingSpec resampling;
    Confusion dev;   ///< summed over folds
    Confusion test;  ///< summed over folds
    double dev_precision = 0, dev_f = 0;
    double precision = 0, recall = 0, f_measure = 0, mcc = 0;  ///< test metrics
    bool failed = false;
    std::string error;
};

/// Fills the metric fields from pooled counts, or from per-fold averages.
void finalize(EvalResult& r, Pooling pooling, const std::vector<Confusion>& dev_folds, const std::vector<Confusion>& test_folds);

using Grid = std::vector<HyperParams>;

/// Every combination of the listed values, last key varying fastest.
Grid cartesian(const std::map<std::string, std::vector<double>>& axes);
Grid product(const Grid& a, const Grid& b);

/// Predictions for the dev and test rows of one fold.
struct FoldPredictions {
    std::vector<int> dev, test;
};
using FitPredict = std::function<FoldPredictions(const ModelSpec& spec, const FeatureMatrix& train, const FeatureMatrix& dev,
                                                 const FeatureMatrix& test, std::uint64_t seed)>;
/// train() on the training rows, predict() on dev and test.
FoldPredictions default_fit_predict(const ModelSpec& spec, const FeatureMatrix& train, const FeatureMatrix& dev,
                                    const FeatureMatrix& test, std::uint64_t seed);

struct SearchOptions {
    unsigned jobs = 1;
    Pooling pooling = Pooling::pooled;
    FitPredict fit = default_fit_predict;
};

struct SearchResult {
    EvalResult best;
    std::vector<EvalResult> table;  ///< one entry per grid combination, grid order
};

/// Runs every combination on every fold, selects on dev F-measure (ties: dev
/// precision, then grid order) and reports the winner's test metrics. A
/// combination whose training throws is marked failed and never selected.
SearchResult grid_search(Algorithm algorithm, const Grid& grid, const FeatureMatrix& data, const SplitPlan& plan,
                         const ResamplingSpec& resampling, std::uint64_t seed, const SearchOptions& options = {});

/// Constant-positive predictor over the test blocks of `plan`.
EvalResult zeror_baseline(const FeatureMatrix& data, const SplitPlan& plan);

struct EvalConfig {
    std::size_t fold_count = 10;
    std::uint64_t seed = 42;
    Pooling pooling = Pooling::pooled;
    unsigned jobs = 1;
    std::map<Algorithm, Grid> grids;
};

/// Grids for every algorithm in kAllAlgorithms.
std::map<Algorithm, Grid> default_grids();
/// Reads {"fold_count", "seed", "pooling", "grids": {algo: {key: [..]} | [{..}, ..]}};
/// missing keys keep their defaults. Throws ValidationError on bad content.
EvalConfig config_from_json(const nlohmann::json& j);
EvalConfig load_config(const std::filesystem::path& path);

/// Labels permuted uniformly at random; the positive count is unchanged.
std::vector<int> shuffled_labels(const std::vector<int>& labels, std::uint64_t seed);

/// Best grid result of one algorithm under one resampling strategy.
EvalResult evaluate(Algorithm algorithm, const FeatureMatrix& data, const ResamplingSpec& resampling, const EvalConfig& config);

/// Rand column: each algorithm searched on shuffled labels without resampling.
std::vector<EvalResult> random_label_check(const FeatureMatrix& data, const EvalConfig& config, std::uint64_t seed,
                                           const std::vector<Algorithm>& algorithms = {std::begin(ml::kAllAlgorithms),
                                                                                       std::end(ml::kAllAlgorithms)});

struct SweepResult {
    std::vector<EvalResult> cells;  ///< algorithm x resampling
    std::vector<EvalResult> rand;
    EvalResult zeror;
};

SweepResult sweep(const FeatureMatrix& data, const EvalConfig& config, const std::vector<Algorithm>& algorithms,
                  const std::vector<ResamplingSpec>& resamplings, bool with_rand);

inline constexpr const char* kRandColumn = "rand";

/// F-measure grid: one row per algorithm, one column per resampling label plus
/// rand, and a median row. Cells without a result stay empty.
std::string table_csv(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand);
/// One line per result with counts and test P/R/F/MCC.
std::string long_csv(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand);
/// Writes table2.csv and metrics_long.csv into `dir`.
void report(const std::vector<EvalResult>& cells, const std::vector<EvalResult>& rand, const std::filesystem::path& dir);

/// Median of the values; the mean of the middle pair for even counts.
double median(std::vector<double> v);

nlohmann::json to_json(const EvalResult& r);
EvalResult result_from_json(const nlohmann::json& j);

}  // namespace jsvuln::eval
