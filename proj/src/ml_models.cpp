#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "jsvuln/error.hpp"
#include "jsvuln/ml.hpp"
#include "ml_internal.hpp"

namespace jsvuln::ml {

// k nearest neighbours.

std::vector<int> knn_predict(const KnnState& s, const Matrix& x) {
    if (x.cols() != s.x.cols()) throw ValidationError("knn: feature width mismatch");
    const std::size_t n = static_cast<std::size_t>(s.x.rows());
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s.k), n);
    const Eigen::Index d = x.cols();
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (Eigen::Index q = 0; q < x.rows(); ++q) {
        const double* qr = x.row(q).data();
        for (std::size_t i = 0; i < n; ++i) {
            const double* tr = s.x.row(static_cast<Eigen::Index>(i)).data();
            double acc = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = qr[j] - tr[j];
                acc += diff * diff;
            }
            dist[i] = {acc, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::size_t pos = 0;
        for (std::size_t i = 0; i < k; ++i) pos += static_cast<std::size_t>(s.y[dist[i].second]);
        int label;
        if (2 * pos > k) {
            label = 1;
        } else if (2 * pos < k) {
            label = 0;
        } else {
            label = s.y[dist[0].second];
        }
        out[static_cast<std::size_t>(q)] = label;
    }
    return out;
}

// Decision trees.

int Tree::predict(const double* row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = row[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].positive_fraction >= 0.5 ? 1 : 0;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> level(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, level[i]);
        if (nodes[i].feature >= 0) {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return best;
}

namespace {

double gini(double pos, double total) {
    if (total <= 0) return 0.0;
    const double p = pos / total;
    return 2.0 * p * (1.0 - p);
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
};

struct Grower {
    const Matrix& x;
    const std::vector<int>& y;
    const TreeParams& p;
    Rng* rng;
    Tree tree;
    std::vector<int> features;
    std::vector<std::pair<double, int>> column;

    Split best_split(const std::vector<std::size_t>& idx, std::size_t pos) {
        std::vector<int> candidates = features;
        if (p.max_features > 0 && static_cast<std::size_t>(p.max_features) < candidates.size()) {
            rng->shuffle(std::span<int>(candidates));
            candidates.resize(static_cast<std::size_t>(p.max_features));
        }
        Split best;
        const double n = static_cast<double>(idx.size());
        for (int f : candidates) {
            column.clear();
            for (std::size_t i : idx) column.emplace_back(x(static_cast<Eigen::Index>(i), f), y[i]);
            std::sort(column.begin(), column.end());
            double left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left_pos += column[i].second;
                if (column[i].first == column[i + 1].first) continue;
                const double nl = static_cast<double>(i + 1), nr = n - nl;
                const double imp = (nl * gini(left_pos, nl) + nr * gini(static_cast<double>(pos) - left_pos, nr)) / n;
                if (imp < best.impurity) {
                    best.impurity = imp;
                    best.feature = f;
                    best.threshold = column[i].first + (column[i + 1].first - column[i].first) / 2.0;
                }
            }
        }
        return best;
    }

    int grow(const std::vector<std::size_t>& idx, int depth) {
        std::size_t pos = 0;
        for (std::size_t i : idx) pos += static_cast<std::size_t>(y[i]);
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().positive_fraction = idx.empty() ? 0.0 : double(pos) / double(idx.size());
        const bool pure = pos == 0 || pos == idx.size();
        if (pure || idx.size() < static_cast<std::size_t>(p.min_samples_split) || (p.max_depth > 0 && depth >= p.max_depth))
            return id;
        const Split s = best_split(idx, pos);
        if (s.feature < 0) return id;
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) (x(static_cast<Eigen::Index>(i), s.feature) <= s.threshold ? left : right).push_back(i);
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.left = l;
        node.right = r;
        return id;
    }
};

}  // namespace

Tree grow_tree(const Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& idx, const TreeParams& p, Rng* rng) {
    if (idx.empty()) throw ValidationError("cannot grow a tree on zero rows");
    if (p.max_features > 0 && !rng) throw ValidationError("feature sampling needs a random generator");
    Grower g{x, y, p, rng, {}, {}, {}};
    g.features.resize(static_cast<std::size_t>(x.cols()));
    std::iota(g.features.begin(), g.features.end(), 0);
    g.grow(idx, 0);
    return std::move(g.tree);
}

std::vector<std::size_t> bootstrap_sample(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    return idx;
}

std::uint64_t forest_tree_seed(std::uint64_t seed, std::size_t b) { return derive_seed(seed, b); }

// Gaussian naive Bayes.

std::array<double, 2> bayes_posteriors(const BayesState& s, const double* row, std::size_t d) {
    constexpr double kLog2Pi = 1.8378770664093453;
    double logp[2];
    for (int c = 0; c < 2; ++c) {
        if (!s.present[c]) {
            logp[c] = -std::numeric_limits<double>::infinity();
            continue;
        }
        double acc = s.log_prior[c];
        for (std::size_t j = 0; j < d; ++j) {
            const double v = s.var(c, static_cast<Eigen::Index>(j));
            const double diff = row[j] - s.mean(c, static_cast<Eigen::Index>(j));
            acc -= 0.5 * (kLog2Pi + std::log(v)) + diff * diff / (2.0 * v);
        }
        logp[c] = acc;
    }
    const double top = std::max(logp[0], logp[1]);
    const double e0 = std::exp(logp[0] - top), e1 = std::exp(logp[1] - top);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

namespace {

BayesState fit_bayes(const Matrix& x, const std::vector<int>& y) {
    const Eigen::Index d = x.cols();
    BayesState s;
    s.mean = Matrix::Zero(2, d);
    s.var = Matrix::Zero(2, d);
    double max_var = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double m = x.col(j).mean();
        max_var = std::max(max_var, (x.col(j).array() - m).square().mean());
    }
    const double eps = max_var > 0 ? 1e-9 * max_var : 1e-9;
    for (int c = 0; c < 2; ++c) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
        s.present[c] = !rows.empty();
        s.log_prior[c] = rows.empty() ? 0.0 : std::log(double(rows.size()) / double(y.size()));
        for (Eigen::Index j = 0; j < d; ++j) {
            double m = 0.0;
            for (auto r : rows) m += x(r, j);
            m = rows.empty() ? 0.0 : m / double(rows.size());
            double v = 0.0;
            for (auto r : rows) v += (x(r, j) - m) * (x(r, j) - m);
            v = rows.empty() ? 0.0 : v / double(rows.size());
            s.mean(c, j) = m;
            s.var(c, j) = v + eps;
        }
    }
    return s;
}

}  // namespace

// Linear models.

LossGrad logistic_loss_grad(const Matrix& x, const std::vector<int>& y, const Vector& w, double b, double l2) {
    const double n = static_cast<double>(x.rows());
    const Vector z = (x * w).array() + b;
    Vector r(z.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double zi = z(i);
        const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
        loss += softplus - y[static_cast<std::size_t>(i)] * zi;
        const double sig = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
        r(i) = (sig - y[static_cast<std::size_t>(i)]) / n;
    }
    LossGrad g;
    g.loss = loss / n + 0.5 * l2 * w.squaredNorm();
    g.grad_w = x.transpose() * r + l2 * w;
    g.grad_b = r.sum();
    return g;
}

namespace {

LinearState fit_logistic(const ModelSpec& spec, const Matrix& x, const std::vector<int>& y, bool& converged) {
    const double l2 = spec.params.at("l2"), lr = spec.params.at("learning_rate"), tol = spec.params.at("tol");
    const int max_iter = detail::param_int(spec, "max_iter");
    LinearState s{Vector::Zero(x.cols()), 0.0};
    LinearState best = s;
    double best_loss = std::numeric_limits<double>::infinity();
    double prev = std::numeric_limits<double>::infinity();
    converged = false;
    for (int it = 0; it < max_iter; ++it) {
        const LossGrad g = logistic_loss_grad(x, y, s.w, s.b, l2);
        if (g.loss < best_loss) {
            best_loss = g.loss;
            best = s;
        }
        if (std::abs(prev - g.loss) < tol) {
            converged = true;
            break;
        }
        prev = g.loss;
        s.w -= lr * g.grad_w;
        s.b -= lr * g.grad_b;
    }
    return best;
}

LinearState fit_linear(const ModelSpec& spec, const Matrix& x, const std::vector<int>& y) {
    const Eigen::Index d = x.cols();
    Matrix a(x.rows(), d + 1);
    a.leftCols(d) = x;
    a.col(d).setOnes();
    Vector t(x.rows());
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = y[static_cast<std::size_t>(i)];
    Eigen::MatrixXd gram = a.transpose() * a;
    gram.diagonal().array() += spec.params.at("ridge");
    const Eigen::VectorXd beta = gram.ldlt().solve(a.transpose() * t);
    return {beta.head(d), beta(d)};
}

double svm_objective(const Matrix& x, const Vector& sign, const LinearState& s, double lambda) {
    const Vector margin = sign.array() * ((x * s.w).array() + s.b);
    return 0.5 * lambda * s.w.squaredNorm() + (1.0 - margin.array()).max(0.0).mean();
}

LinearState fit_svm(const ModelSpec& spec, const Matrix& x, const std::vector<int>& y) {
    const double n = static_cast<double>(x.rows());
    const double lambda = 1.0 / (spec.params.at("C") * n);
    const double eta0 = spec.params.at("eta0");
    const int max_iter = detail::param_int(spec, "max_iter");
    Vector sign(x.rows());
    for (Eigen::Index i = 0; i < sign.size(); ++i) sign(i) = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    LinearState s{Vector::Zero(x.cols()), 0.0};
    LinearState best = s;
    double best_obj = svm_objective(x, sign, s, lambda);
    for (int t = 1; t <= max_iter; ++t) {
        const Vector margin = sign.array() * ((x * s.w).array() + s.b);
        Vector coef(x.rows());
        for (Eigen::Index i = 0; i < coef.size(); ++i) coef(i) = margin(i) < 1.0 ? -sign(i) / n : 0.0;
        const Vector gw = lambda * s.w + x.transpose() * coef;
        const double gb = coef.sum();
        const double eta = eta0 / std::sqrt(double(t));
        s.w -= eta * gw;
        s.b -= eta * gb;
        const double obj = svm_objective(x, sign, s, lambda);
        if (obj < best_obj) {
            best_obj = obj;
            best = s;
        }
    }
    return best;
}

}  // namespace

// Multilayer perceptron.

MlpState init_mlp(const std::vector<int>& widths, Rng& rng) {
    if (widths.size() < 2) throw ValidationError("a network needs at least an input and an output layer");
    MlpState s;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Matrix w(widths[l + 1], widths[l]);
        const double sd = std::sqrt(2.0 / widths[l]);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = sd * rng.normal();
        s.weights.push_back(std::move(w));
        s.biases.push_back(Vector::Zero(widths[l + 1]));
    }
    return s;
}

namespace {

/// Activations per layer; the last entry holds output logits.
std::vector<Matrix> forward_layers(const MlpState& s, const Matrix& x) {
    if (s.weights.empty() || x.cols() != s.weights.front().cols()) throw ValidationError("network input width mismatch");
    std::vector<Matrix> acts;
    acts.push_back(x);
    for (std::size_t l = 0; l < s.weights.size(); ++l) {
        Matrix z = acts.back() * s.weights[l].transpose();
        z.rowwise() += s.biases[l].transpose();
        if (l + 1 < s.weights.size()) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }
    return acts;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

Vector mlp_forward(const MlpState& s, const Matrix& x) {
    const auto acts = forward_layers(s, x);
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = sigmoid(acts.back()(i, 0));
    return out;
}

MlpLossGrad mlp_loss_grad(const MlpState& s, const Matrix& x, const std::vector<int>& y) {
    const auto acts = forward_layers(s, x);
    const double n = static_cast<double>(x.rows());
    const Matrix& logits = acts.back();
    MlpLossGrad out;
    Matrix delta(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double z = logits(i, 0);
        const double yi = y[static_cast<std::size_t>(i)];
        out.loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - yi * z;
        delta(i, 0) = (sigmoid(z) - yi) / n;
    }
    out.loss /= n;
    const std::size_t layers = s.weights.size();
    out.grad.weights.resize(layers);
    out.grad.biases.resize(layers);
    for (std::size_t l = layers; l-- > 0;) {
        out.grad.weights[l] = delta.transpose() * acts[l];
        out.grad.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix prev = delta * s.weights[l];
            prev.array() *= (acts[l].array() > 0.0).cast<double>();
            delta = std::move(prev);
        }
    }
    return out;
}

namespace detail {

int param_int(const ModelSpec& spec, const char* key) { return static_cast<int>(spec.params.at(key)); }

std::vector<int> mlp_widths(const ModelSpec& spec, int inputs) {
    std::vector<int> widths{inputs, param_int(spec, "hidden1")};
    if (param_int(spec, "hidden2") > 0) widths.push_back(param_int(spec, "hidden2"));
    widths.push_back(1);
    return widths;
}

void mlp_epoch(MlpState& s, const Matrix& x, const std::vector<int>& y, int batch_size, double lr, Rng& rng) {
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        Matrix xb(static_cast<Eigen::Index>(end - start), x.cols());
        std::vector<int> yb(end - start);
        for (std::size_t i = start; i < end; ++i) {
            xb.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
            yb[i - start] = y[order[i]];
        }
        const MlpLossGrad g = mlp_loss_grad(s, xb, yb);
        for (std::size_t l = 0; l < s.weights.size(); ++l) {
            s.weights[l] -= lr * g.grad.weights[l];
            s.biases[l] -= lr * g.grad.biases[l];
        }
    }
}

void fit(TrainedModel& m, const Matrix& x, const std::vector<int>& y, std::uint64_t seed) {
    const ModelSpec& spec = m.spec;
    switch (spec.algorithm) {
        case Algorithm::zeror: m.state = std::monostate{}; break;
        case Algorithm::knn: m.state = KnnState{x, y, param_int(spec, "k")}; break;
        case Algorithm::tree: {
            std::vector<std::size_t> idx(y.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            m.state = grow_tree(x, y, idx, {param_int(spec, "max_depth"), param_int(spec, "min_samples_split"), 0}, nullptr);
            break;
        }
        case Algorithm::forest: {
            const TreeParams p{param_int(spec, "max_depth"), param_int(spec, "min_samples_split"),
                               std::max(1, static_cast<int>(std::floor(std::sqrt(double(x.cols())))))};
            ForestState f;
            const int trees = param_int(spec, "n_trees");
            for (int b = 0; b < trees; ++b) {
                Rng rng(forest_tree_seed(seed, static_cast<std::size_t>(b)));
                const auto idx = bootstrap_sample(y.size(), rng);
                f.trees.push_back(grow_tree(x, y, idx, p, &rng));
            }
            m.state = std::move(f);
            break;
        }
        case Algorithm::bayes: m.state = fit_bayes(x, y); break;
        case Algorithm::logistic: m.state = fit_logistic(spec, x, y, m.converged); break;
        case Algorithm::linear: m.state = fit_linear(spec, x, y); break;
        case Algorithm::svm: m.state = fit_svm(spec, x, y); break;
        case Algorithm::dnn_s: {
            Rng rng(seed);
            MlpState s = init_mlp(mlp_widths(spec, static_cast<int>(x.cols())), rng);
            const int epochs = param_int(spec, "epochs");
            for (int e = 0; e < epochs; ++e) mlp_epoch(s, x, y, param_int(spec, "batch_size"), spec.params.at("learning_rate"), rng);
            m.state = std::move(s);
            break;
        }
        case Algorithm::dnn_c: throw ValidationError("dnn_c is trained through train_dnn_c");
    }
}

std::vector<int> predict_scaled(const TrainedModel& m, const Matrix& x) {
    const std::size_t n = static_cast<std::size_t>(x.rows());
    std::vector<int> out(n, 1);
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, KnnState>) {
                out = knn_predict(s, x);
            } else if constexpr (std::is_same_v<T, Tree>) {
                for (std::size_t i = 0; i < n; ++i) out[i] = s.predict(x.row(static_cast<Eigen::Index>(i)).data());
            } else if constexpr (std::is_same_v<T, ForestState>) {
                for (std::size_t i = 0; i < n; ++i) {
                    std::size_t votes = 0;
                    for (const auto& t : s.trees) votes += static_cast<std::size_t>(t.predict(x.row(static_cast<Eigen::Index>(i)).data()));
                    out[i] = 2 * votes >= s.trees.size() ? 1 : 0;
                }
            } else if constexpr (std::is_same_v<T, BayesState>) {
                if (x.cols() != s.mean.cols()) throw ValidationError("bayes: feature width mismatch");
                for (std::size_t i = 0; i < n; ++i)
                    out[i] = bayes_posteriors(s, x.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(x.cols()))[1] >= 0.5;
            } else if constexpr (std::is_same_v<T, LinearState>) {
                if (x.cols() != s.w.size()) throw ValidationError("linear model: feature width mismatch");
                const Vector score = (x * s.w).array() + s.b;
                for (std::size_t i = 0; i < n; ++i) {
                    const double v = score(static_cast<Eigen::Index>(i));
                    switch (m.spec.algorithm) {
                        case Algorithm::logistic: out[i] = sigmoid(v) >= 0.5; break;
                        case Algorithm::svm: out[i] = v >= 0.0; break;
                        default: out[i] = v >= 0.5; break;
                    }
                }
            } else if constexpr (std::is_same_v<T, MlpState>) {
                const Vector p = mlp_forward(s, x);
                for (std::size_t i = 0; i < n; ++i) out[i] = p(static_cast<Eigen::Index>(i)) >= 0.5;
            }
        },
        m.state);
    return out;
}

}  // namespace detail

TrainedModel train_dnn_c(const ModelSpec& raw_spec, const FeatureMatrix& data, std::uint64_t seed, const DevEvaluator& dev_f) {
    const ModelSpec spec = complete_spec(raw_spec);
    if (spec.algorithm != Algorithm::dnn_c) throw ValidationError("train_dnn_c needs a dnn_c spec");
    data.validate();
    if (data.rows() == 0) throw ValidationError("cannot train on an empty data set");
    TrainedModel candidate;
    candidate.spec = spec;
    candidate.n_features = data.cols();
    candidate.standardizer = Standardizer::fit(data.x);
    const Matrix x = candidate.standardizer->transform(data.x);
    Rng rng(seed);
    MlpState current = init_mlp(detail::mlp_widths(spec, static_cast<int>(x.cols())), rng);
    MlpState best_state = current;
    double best_f = -1.0;
    double lr = spec.params.at("learning_rate");
    int misses = 0;
    const int max_epochs = detail::param_int(spec, "max_epochs");
    std::vector<EpochRecord> schedule;
    for (int epoch = 1; epoch <= max_epochs && misses < 4; ++epoch) {
        detail::mlp_epoch(current, x, data.y, detail::param_int(spec, "batch_size"), lr, rng);
        candidate.state = current;
        const double f = dev_f(candidate, epoch);
        const bool improved = f > best_f;
        if (improved) {
            best_f = f;
            best_state = current;
            misses = 0;
        } else {
            current = best_state;
            lr /= 2.0;
            ++misses;
        }
        schedule.push_back({epoch, f, improved, lr, misses});
    }
    candidate.state = std::move(best_state);
    candidate.schedule = std::move(schedule);
    candidate.converged = misses >= 4;
    return candidate;
}

}  // namespace jsvuln::ml
