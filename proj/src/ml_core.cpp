#include <cmath>

#include "jsvuln/error.hpp"
#include "jsvuln/ml.hpp"
#include "ml_internal.hpp"

namespace jsvuln::ml {

using nlohmann::json;

FeatureMatrix FeatureMatrix::subset(const std::vector<std::size_t>& idx) const {
    FeatureMatrix out;
    out.column_names = column_names;
    out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    out.y.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
        out.y.push_back(y[idx[i]]);
    }
    return out;
}

void FeatureMatrix::validate() const {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("feature rows and labels differ in length");
    if (!column_names.empty() && column_names.size() != cols()) throw ValidationError("column names do not match feature width");
    if (!x.allFinite()) throw ValidationError("feature matrix contains non-finite values");
    for (int v : y)
        if (v != 0 && v != 1) throw ValidationError("labels must be 0 or 1");
}

std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::dnn_s: return "dnn_s";
        case Algorithm::dnn_c: return "dnn_c";
        case Algorithm::knn: return "knn";
        case Algorithm::tree: return "tree";
        case Algorithm::svm: return "svm";
        case Algorithm::forest: return "forest";
        case Algorithm::logistic: return "logistic";
        case Algorithm::linear: return "linear";
        case Algorithm::bayes: return "bayes";
        case Algorithm::zeror: return "zeror";
    }
    return "zeror";
}

Algorithm parse_algorithm(std::string_view s) {
    for (Algorithm a : kAllAlgorithms)
        if (to_string(a) == s) return a;
    if (s == "zeror") return Algorithm::zeror;
    throw ValidationError("unknown algorithm: " + std::string(s));
}

const HyperParams& default_params(Algorithm a) {
    static const std::map<Algorithm, HyperParams> defaults = {
        {Algorithm::knn, {{"k", 5}}},
        {Algorithm::tree, {{"max_depth", 0}, {"min_samples_split", 2}}},
        {Algorithm::forest, {{"n_trees", 50}, {"max_depth", 0}, {"min_samples_split", 2}}},
        {Algorithm::bayes, {}},
        {Algorithm::logistic, {{"l2", 1e-3}, {"learning_rate", 0.5}, {"max_iter", 500}, {"tol", 1e-6}}},
        {Algorithm::linear, {{"ridge", 1e-8}}},
        {Algorithm::svm, {{"C", 1.0}, {"max_iter", 300}, {"eta0", 1.0}}},
        {Algorithm::dnn_s, {{"hidden1", 32}, {"hidden2", 32}, {"learning_rate", 0.05}, {"epochs", 30}, {"batch_size", 64}}},
        {Algorithm::dnn_c, {{"hidden1", 32}, {"hidden2", 32}, {"learning_rate", 0.05}, {"max_epochs", 100}, {"batch_size", 64}}},
        {Algorithm::zeror, {}},
    };
    return defaults.at(a);
}

ModelSpec complete_spec(const ModelSpec& spec) {
    ModelSpec out{spec.algorithm, default_params(spec.algorithm)};
    for (const auto& [k, v] : spec.params) {
        if (!out.params.count(k))
            throw ValidationError("hyper-parameter '" + k + "' does not belong to " + std::string(to_string(spec.algorithm)));
        if (!std::isfinite(v)) throw ValidationError("hyper-parameter '" + k + "' must be finite");
        out.params[k] = v;
    }
    auto need = [&](const char* key, double lo, bool integral) {
        const double v = out.params.at(key);
        if (v < lo || (integral && v != std::floor(v)))
            throw ValidationError("invalid value " + std::to_string(v) + " for " + key + " of " + std::string(to_string(spec.algorithm)));
    };
    switch (spec.algorithm) {
        case Algorithm::knn: need("k", 1, true); break;
        case Algorithm::tree: need("max_depth", 0, true); need("min_samples_split", 2, true); break;
        case Algorithm::forest:
            need("n_trees", 1, true);
            need("max_depth", 0, true);
            need("min_samples_split", 2, true);
            break;
        case Algorithm::logistic:
            need("l2", 0, false);
            need("max_iter", 1, true);
            need("tol", 0, false);
            if (out.params.at("learning_rate") <= 0) throw ValidationError("learning_rate must be positive");
            break;
        case Algorithm::linear: need("ridge", 0, false); break;
        case Algorithm::svm:
            need("max_iter", 1, true);
            if (out.params.at("C") <= 0 || out.params.at("eta0") <= 0) throw ValidationError("C and eta0 must be positive");
            break;
        case Algorithm::dnn_s:
        case Algorithm::dnn_c:
            need("hidden1", 1, true);
            need("hidden2", 0, true);
            need("batch_size", 1, true);
            need(spec.algorithm == Algorithm::dnn_s ? "epochs" : "max_epochs", 1, true);
            if (out.params.at("learning_rate") <= 0) throw ValidationError("learning_rate must be positive");
            break;
        case Algorithm::bayes:
        case Algorithm::zeror: break;
    }
    return out;
}

bool uses_standardization(Algorithm a) {
    switch (a) {
        case Algorithm::knn:
        case Algorithm::svm:
        case Algorithm::logistic:
        case Algorithm::linear:
        case Algorithm::dnn_s:
        case Algorithm::dnn_c: return true;
        default: return false;
    }
}

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw ValidationError("cannot standardize an empty matrix");
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Zero(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean(j)).square().mean();
        s.scale(j) = var > 0 ? std::sqrt(var) : 0.0;
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
    if (x.cols() != mean.size()) throw ValidationError("standardizer width mismatch");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (scale(j) > 0) {
            out.col(j) = (x.col(j).array() - mean(j)) / scale(j);
        } else {
            out.col(j).setZero();
        }
    }
    return out;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

double Confusion::precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
double Confusion::recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }

double Confusion::f_measure() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

double Confusion::mcc() const {
    const double a = double(tp + fp), b = double(tp + fn), c = double(tn + fp), d = double(tn + fn);
    if (a == 0 || b == 0 || c == 0 || d == 0) return 0.0;
    return (double(tp) * double(tn) - double(fp) * double(fn)) / std::sqrt(a * b * c * d);
}

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw ValidationError("prediction and label counts differ");
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] == 1) {
            (truth[i] == 1 ? c.tp : c.fp)++;
        } else {
            (truth[i] == 1 ? c.fn : c.tn)++;
        }
    }
    return c;
}

TrainedModel train(const ModelSpec& raw_spec, const FeatureMatrix& data, std::uint64_t seed, const FeatureMatrix* dev) {
    data.validate();
    if (data.rows() == 0) throw ValidationError("cannot train on an empty data set");
    const ModelSpec spec = complete_spec(raw_spec);
    if (spec.algorithm == Algorithm::dnn_c) {
        if (!dev) throw ValidationError("dnn_c needs a dev set");
        dev->validate();
        return train_dnn_c(spec, data, seed, [dev](const TrainedModel& m, int) {
            return confusion(predict(m, dev->x), dev->y).f_measure();
        });
    }
    TrainedModel m;
    m.spec = spec;
    m.n_features = data.cols();
    Matrix xs;
    const Matrix* x = &data.x;
    if (uses_standardization(spec.algorithm)) {
        m.standardizer = Standardizer::fit(data.x);
        xs = m.standardizer->transform(data.x);
        x = &xs;
    }
    detail::fit(m, *x, data.y, seed);
    return m;
}

std::vector<int> predict(const TrainedModel& m, const Matrix& raw) {
    if (static_cast<std::size_t>(raw.cols()) != m.n_features)
        throw ValidationError("expected " + std::to_string(m.n_features) + " feature columns, got " + std::to_string(raw.cols()));
    if (m.standardizer) return detail::predict_scaled(m, m.standardizer->transform(raw));
    return detail::predict_scaled(m, raw);
}

// Serialization.

namespace {

json mat_json(const Matrix& mtx) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < mtx.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < mtx.cols(); ++j) r.push_back(mtx(i, j));
        rows.push_back(r);
    }
    return {{"rows", mtx.rows()}, {"cols", mtx.cols()}, {"data", rows}};
}

Matrix json_mat(const json& j) {
    Matrix mtx(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    for (Eigen::Index i = 0; i < mtx.rows(); ++i)
        for (Eigen::Index k = 0; k < mtx.cols(); ++k) mtx(i, k) = j.at("data").at(i).at(k).get<double>();
    return mtx;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json tree_json(const Tree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.positive_fraction});
    return nodes;
}

Tree json_tree(const json& j) {
    Tree t;
    for (const auto& n : j)
        t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(), n.at(4).get<double>()});
    return t;
}

constexpr int kFormatVersion = 1;

}  // namespace

json to_json(const TrainedModel& m) {
    json j;
    j["format_version"] = kFormatVersion;
    j["algorithm"] = to_string(m.spec.algorithm);
    j["params"] = m.spec.params;
    j["n_features"] = m.n_features;
    j["converged"] = m.converged;
    if (m.standardizer) {
        j["standardizer"] = {{"mean", vec_json(m.standardizer->mean)}, {"scale", vec_json(m.standardizer->scale)}};
    } else {
        j["standardizer"] = nullptr;
    }
    json sched = json::array();
    for (const auto& e : m.schedule) sched.push_back({e.epoch, e.dev_f, e.improved, e.learning_rate, e.consecutive_misses});
    j["schedule"] = sched;
    json st;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                st = nullptr;
            } else if constexpr (std::is_same_v<T, KnnState>) {
                st = {{"k", s.k}, {"x", mat_json(s.x)}, {"y", s.y}};
            } else if constexpr (std::is_same_v<T, Tree>) {
                st = {{"nodes", tree_json(s)}};
            } else if constexpr (std::is_same_v<T, ForestState>) {
                json trees = json::array();
                for (const auto& t : s.trees) trees.push_back(tree_json(t));
                st = {{"trees", trees}};
            } else if constexpr (std::is_same_v<T, BayesState>) {
                st = {{"log_prior", {s.log_prior[0], s.log_prior[1]}},
                      {"present", {s.present[0], s.present[1]}},
                      {"mean", mat_json(s.mean)},
                      {"var", mat_json(s.var)}};
            } else if constexpr (std::is_same_v<T, LinearState>) {
                st = {{"w", vec_json(s.w)}, {"b", s.b}};
            } else if constexpr (std::is_same_v<T, MlpState>) {
                json ws = json::array(), bs = json::array();
                for (const auto& w : s.weights) ws.push_back(mat_json(w));
                for (const auto& b : s.biases) bs.push_back(vec_json(b));
                st = {{"weights", ws}, {"biases", bs}};
            }
        },
        m.state);
    j["state"] = st;
    return j;
}

TrainedModel model_from_json(const json& j) {
    TrainedModel m;
    try {
        if (j.at("format_version").get<int>() != kFormatVersion) throw ParseError("unsupported model format version");
        m.spec.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        m.spec.params = j.at("params").get<HyperParams>();
        m.n_features = j.at("n_features").get<std::size_t>();
        m.converged = j.at("converged").get<bool>();
        if (!j.at("standardizer").is_null())
            m.standardizer = Standardizer{json_vec(j["standardizer"].at("mean")), json_vec(j["standardizer"].at("scale"))};
        for (const auto& e : j.at("schedule"))
            m.schedule.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<bool>(), e.at(3).get<double>(), e.at(4).get<int>()});
        const json& st = j.at("state");
        switch (m.spec.algorithm) {
            case Algorithm::zeror: break;
            case Algorithm::knn: m.state = KnnState{json_mat(st.at("x")), st.at("y").get<std::vector<int>>(), st.at("k").get<int>()}; break;
            case Algorithm::tree: m.state = json_tree(st.at("nodes")); break;
            case Algorithm::forest: {
                ForestState f;
                for (const auto& t : st.at("trees")) f.trees.push_back(json_tree(t));
                m.state = std::move(f);
                break;
            }
            case Algorithm::bayes: {
                BayesState b;
                b.log_prior[0] = st.at("log_prior").at(0).get<double>();
                b.log_prior[1] = st.at("log_prior").at(1).get<double>();
                b.present[0] = st.at("present").at(0).get<bool>();
                b.present[1] = st.at("present").at(1).get<bool>();
                b.mean = json_mat(st.at("mean"));
                b.var = json_mat(st.at("var"));
                m.state = std::move(b);
                break;
            }
            case Algorithm::logistic:
            case Algorithm::linear:
            case Algorithm::svm: m.state = LinearState{json_vec(st.at("w")), st.at("b").get<double>()}; break;
            case Algorithm::dnn_s:
            case Algorithm::dnn_c: {
                MlpState s;
                for (const auto& w : st.at("weights")) s.weights.push_back(json_mat(w));
                for (const auto& b : st.at("biases")) s.biases.push_back(json_vec(b));
                m.state = std::move(s);
                break;
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad model file: ") + e.what());
    }
    return m;
}

}  // namespace jsvuln::ml
