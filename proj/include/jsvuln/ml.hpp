#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "jsvuln/rng.hpp"

namespace jsvuln::ml {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct FeatureMatrix {
    Matrix x;
    std::vector<int> y;
    std::vector<std::string> column_names;

    std::size_t rows() const { return y.size(); }
    std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
    FeatureMatrix subset(const std::vector<std::size_t>& idx) const;
    /// Throws ValidationError for shape mismatch, non-finite values or labels outside {0,1}.
    void validate() const;
};

enum class Algorithm { dnn_s, dnn_c, knn, tree, svm, forest, logistic, linear, bayes, zeror };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::dnn_s,  Algorithm::dnn_c,    Algorithm::knn,
                                               Algorithm::tree,   Algorithm::svm,      Algorithm::forest,
                                               Algorithm::logistic, Algorithm::linear, Algorithm::bayes};

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

using HyperParams = std::map<std::string, double>;

struct ModelSpec {
    Algorithm algorithm = Algorithm::zeror;
    HyperParams params;
};

/// Default value of every hyper-parameter an algorithm accepts.
const HyperParams& default_params(Algorithm a);
/// Spec with defaults filled in; throws ValidationError for unknown keys or
/// out-of-range values.
ModelSpec complete_spec(const ModelSpec& spec);
bool uses_standardization(Algorithm a);

/// Per-feature z-score from training rows; zero-variance columns map to 0.
struct Standardizer {
    Vector mean;
    Vector scale;  ///< standard deviation, 0 for constant columns

    static Standardizer fit(const Matrix& x);
    Matrix transform(const Matrix& x) const;
};

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    Confusion& operator+=(const Confusion& o);
    double precision() const;  ///< 0 when nothing is predicted positive
    double recall() const;     ///< 0 when there are no positives
    double f_measure() const;  ///< 0 when precision + recall is 0
    double mcc() const;        ///< 0 when any marginal is empty
    std::size_t total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth);

// Learned states.

struct KnnState {
    Matrix x;
    std::vector<int> y;
    int k = 1;
};

struct TreeNode {
    int feature = -1;  ///< -1 for leaves
    double threshold = 0.0;
    int left = -1, right = -1;
    double positive_fraction = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;  ///< nodes[0] is the root
    int predict(const double* row) const;
    int depth() const;
};

struct ForestState {
    std::vector<Tree> trees;
};

struct BayesState {
    double log_prior[2] = {0, 0};
    bool present[2] = {false, false};
    Matrix mean;  ///< 2 x d
    Matrix var;   ///< 2 x d, smoothed
};

/// Weights and bias of logistic regression, linear regression and the linear SVM.
struct LinearState {
    Vector w;
    double b = 0.0;
};

struct MlpState {
    std::vector<Matrix> weights;  ///< layer l maps width[l] -> width[l+1], stored out x in
    std::vector<Vector> biases;
};

struct EpochRecord {
    int epoch = 0;
    double dev_f = 0.0;
    bool improved = false;
    double learning_rate = 0.0;  ///< rate in effect after the epoch's update
    int consecutive_misses = 0;
};

using ModelState = std::variant<std::monostate, KnnState, Tree, ForestState, BayesState, LinearState, MlpState>;

struct TrainedModel {
    ModelSpec spec;
    std::size_t n_features = 0;
    std::optional<Standardizer> standardizer;
    ModelState state;
    bool converged = true;
    std::vector<EpochRecord> schedule;  ///< dnn_c only
};

/// Fits `spec` to `data`. Every random choice is drawn from `seed`. dnn_c
/// needs `dev` for its per-epoch F-measure test.
TrainedModel train(const ModelSpec& spec, const FeatureMatrix& data, std::uint64_t seed, const FeatureMatrix* dev = nullptr);

/// Labels for raw (unstandardized) rows. Throws ValidationError on a column mismatch.
std::vector<int> predict(const TrainedModel& model, const Matrix& x);

nlohmann::json to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);

// Building blocks, exposed for tests.

std::vector<int> knn_predict(const KnnState& s, const Matrix& x);

struct TreeParams {
    int max_depth = 0;  ///< 0 = unlimited
    int min_samples_split = 2;
    int max_features = 0;  ///< 0 = all features
};

/// CART with Gini impurity on the rows listed in `idx` (repeats allowed).
/// Candidate features are drawn from `rng` when max_features > 0.
Tree grow_tree(const Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& idx, const TreeParams& p, Rng* rng);
std::vector<std::size_t> bootstrap_sample(std::size_t n, Rng& rng);
/// Seed of tree `b` of a forest trained with `seed`.
std::uint64_t forest_tree_seed(std::uint64_t seed, std::size_t b);

/// Class posteriors P(0|x), P(1|x).
std::array<double, 2> bayes_posteriors(const BayesState& s, const double* row, std::size_t d);

struct LossGrad {
    double loss = 0.0;
    Vector grad_w;
    double grad_b = 0.0;
};

/// Mean cross-entropy plus (l2/2)||w||^2 and its gradient.
LossGrad logistic_loss_grad(const Matrix& x, const std::vector<int>& y, const Vector& w, double b, double l2);

struct MlpLossGrad {
    double loss = 0.0;
    MlpState grad;
};

MlpState init_mlp(const std::vector<int>& widths, Rng& rng);
/// Sigmoid output probabilities.
Vector mlp_forward(const MlpState& s, const Matrix& x);
/// Mean cross-entropy of the sigmoid output and its gradient by backpropagation.
MlpLossGrad mlp_loss_grad(const MlpState& s, const Matrix& x, const std::vector<int>& y);

/// Dev-set F-measure of the network after a given epoch (1-based).
using DevEvaluator = std::function<double(const TrainedModel& candidate, int epoch)>;

/// dnn_c training loop on standardized features: after every epoch the dev
/// F-measure is compared with the best so far. An improvement checkpoints the
/// network and clears the miss counter; a miss restores the checkpoint,
/// halves the learning rate and counts the miss. Training stops after 4
/// consecutive misses (or max_epochs) and returns the checkpoint.
TrainedModel train_dnn_c(const ModelSpec& spec, const FeatureMatrix& data, std::uint64_t seed, const DevEvaluator& dev_f);

}  // namespace jsvuln::ml
