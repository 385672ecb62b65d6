#pragma once

#include "mtdnet/common.hpp"
#include "mtdnet/marketdata.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace mtdnet {

/// Probability floor applied inside mixture log-likelihoods.
inline constexpr double kLogFloor = 1e-300;

/// Cross-series transition probabilities p^(i,j)_{hk} = P(next state of
/// series j is k | current state of series i is h), with the raw transition
/// counts they were estimated from. Stored flat, indexed (i, j, h, k).
class TransitionTensor {
public:
    TransitionTensor() = default;
    TransitionTensor(Index n, int z)
        : n_(n), z_(z),
          probs_(static_cast<std::size_t>(n * n * z * z), 0.0),
          counts_(static_cast<std::size_t>(n * n * z * z), 0) {}

    Index series() const { return n_; }
    int states() const { return z_; }

    double& prob(Index i, Index j, int h, int k) { return probs_[offset(i, j, h, k)]; }
    double prob(Index i, Index j, int h, int k) const { return probs_[offset(i, j, h, k)]; }
    long long& count(Index i, Index j, int h, int k) { return counts_[offset(i, j, h, k)]; }
    long long count(Index i, Index j, int h, int k) const { return counts_[offset(i, j, h, k)]; }

    const std::vector<double>& raw_probs() const { return probs_; }
    std::vector<double>& raw_probs() { return probs_; }

private:
    std::size_t offset(Index i, Index j, int h, int k) const {
        return static_cast<std::size_t>(((i * n_ + j) * z_ + h) * z_ + k);
    }

    Index n_ = 0;
    int z_ = 0;
    std::vector<double> probs_;
    std::vector<long long> counts_;
};

/// Column-stochastic mixing weights: lambda(i, j) is the influence of series i
/// on series j; every column lies on the probability simplex.
struct LambdaMatrix {
    MatrixXd lambda;
    VectorXd loglik;                 // achieved log-likelihood per column
    std::vector<bool> converged;     // projected-gradient stationarity reached
};

/// A probability distribution over the state space.
struct Distribution {
    VectorXd probs;
};

struct LambdaOptions {
    int max_iters = 5000;
    double tol = 1e-7;        // on the projected-gradient norm
    int restarts = 3;         // random-start count, in addition to the barycenter
    std::uint64_t seed = 0;
};

/// Counts cross-transitions {S_i(t)=h, S_j(t+1)=k} and row-normalizes after
/// adding `smoothing` pseudo-counts. With zero smoothing an unobserved row
/// falls back to the uniform distribution.
inline TransitionTensor estimate_transition_matrices(const StatePanel& states, double smoothing = 1.0) {
    const Index T = states.states.rows();
    const Index n = states.states.cols();
    const int z = states.num_states;
    if (T < 2) throw InputError("transition estimation needs at least 2 rows");
    if (smoothing < 0.0) throw InputError("smoothing must be nonnegative");

    TransitionTensor tensor(n, z);
    for (Index t = 0; t + 1 < T; ++t)
        for (Index i = 0; i < n; ++i) {
            const int h = states.states(t, i);
            for (Index j = 0; j < n; ++j) {
                const int k = states.states(t + 1, j);
                ++tensor.count(i, j, h, k);
            }
        }

    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            for (int h = 0; h < z; ++h) {
                double row_total = 0.0;
                for (int k = 0; k < z; ++k)
                    row_total += static_cast<double>(tensor.count(i, j, h, k)) + smoothing;
                if (row_total <= 0.0) {
                    for (int k = 0; k < z; ++k) tensor.prob(i, j, h, k) = 1.0 / z;
                } else {
                    for (int k = 0; k < z; ++k)
                        tensor.prob(i, j, h, k) =
                            (static_cast<double>(tensor.count(i, j, h, k)) + smoothing) / row_total;
                }
            }
    return tensor;
}

namespace detail {

/// Per-target-column likelihood table: row t holds p^(i,j)_{S_i(t), S_j(t+1)}
/// for every source i. The mixture likelihood of column j is then
/// sum_t ln(table.row(t) . lambda).
inline MatrixXd transition_table(const StatePanel& states, const TransitionTensor& P, Index j) {
    const Index T = states.states.rows();
    const Index n = states.states.cols();
    MatrixXd table(T - 1, n);
    for (Index t = 0; t + 1 < T; ++t) {
        const int k = states.states(t + 1, j);
        for (Index i = 0; i < n; ++i)
            table(t, i) = P.prob(i, j, states.states(t, i), k);
    }
    return table;
}

inline double table_log_likelihood(const MatrixXd& table, const VectorXd& lambda) {
    const VectorXd mix = table * lambda;
    double total = 0.0;
    for (Index t = 0; t < mix.size(); ++t)
        total += std::log(std::max(mix[t], kLogFloor));
    return total;
}

inline VectorXd table_gradient(const MatrixXd& table, const VectorXd& lambda) {
    const VectorXd mix = table * lambda;
    VectorXd grad = VectorXd::Zero(lambda.size());
    for (Index t = 0; t < mix.size(); ++t) {
        if (mix[t] > kLogFloor)
            grad += table.row(t).transpose() / mix[t];
        // below the floor the clipped log is locally constant
    }
    return grad;
}

struct SimplexAscentResult {
    VectorXd x;
    double value = 0.0;
    bool converged = false;
};

/// Projected gradient ascent on the simplex with backtracking line search.
/// Monotone: every accepted step does not decrease the objective.
inline SimplexAscentResult maximize_on_simplex(const MatrixXd& table, VectorXd x,
                                               int max_iters, double tol) {
    double value = table_log_likelihood(table, x);
    bool converged = false;
    double step = 1.0; // carries over between iterations; doubles after success
    for (int iter = 0; iter < max_iters; ++iter) {
        const VectorXd grad = table_gradient(table, x);
        const double pg_norm = (project_to_simplex(x + grad) - x).norm();
        if (pg_norm <= tol) {
            converged = true;
            break;
        }
        step = std::min(step * 2.0, 1e8);
        bool accepted = false;
        double gain = 0.0;
        while (step > 1e-18) {
            const VectorXd cand = project_to_simplex(x + step * grad);
            const VectorXd dir = cand - x;
            const double cand_value = table_log_likelihood(table, cand);
            if (cand_value >= value + 1e-4 * grad.dot(dir)) {
                gain = cand_value - value;
                x = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break; // no ascent direction at line-search resolution
        if (gain <= 1e-13 * (1.0 + std::abs(value))) break; // stalled short of tol
    }
    return {x, value, converged};
}

} // namespace detail

/// Mixture log-likelihood of target column j under mixing vector lambda_col:
/// sum_t ln( sum_i lambda_i * p^(i,j)_{S_i(t), S_j(t+1)} ), floored at 1e-300.
inline double mtd_log_likelihood(const StatePanel& states, const TransitionTensor& P,
                                 const VectorXd& lambda_col, Index j) {
    return detail::table_log_likelihood(detail::transition_table(states, P, j), lambda_col);
}

/// Maximum-likelihood mixing matrix, one independent simplex-constrained
/// column per target series. Multistart projected gradient: the barycenter
/// start plus `restarts` seeded random starts; the best final log-likelihood
/// wins, ties broken by lowest start index.
inline LambdaMatrix estimate_lambda(const StatePanel& states, const TransitionTensor& P,
                                    const LambdaOptions& opts = {}) {
    const Index n = states.states.cols();
    if (states.states.rows() < 2) throw InputError("lambda estimation needs at least 2 rows");

    LambdaMatrix result;
    result.lambda.resize(n, n);
    result.loglik.resize(n);
    result.converged.assign(static_cast<std::size_t>(n), false);

    for (Index j = 0; j < n; ++j) {
        const MatrixXd table = detail::transition_table(states, P, j);
        std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(j)));

        detail::SimplexAscentResult best;
        best.value = -std::numeric_limits<double>::infinity();
        for (int start = 0; start <= opts.restarts; ++start) {
            VectorXd x0 = (start == 0) ? VectorXd::Constant(n, 1.0 / static_cast<double>(n)).eval()
                                       : random_simplex_point(n, rng);
            auto res = detail::maximize_on_simplex(table, x0, opts.max_iters, opts.tol);
            if (res.value > best.value) best = res;
        }

        VectorXd col = best.x;
        col /= col.sum(); // absorb projection drift
        result.lambda.col(j) = col;
        result.loglik[j] = best.value;
        result.converged[static_cast<std::size_t>(j)] = best.converged;
    }
    return result;
}

/// One step of the mixture evolution:
/// D_j(t+1) = sum_i lambda_ij * D_i(t) * P^(i,j).
inline std::vector<Distribution> one_step_distribution(const TransitionTensor& P,
                                                       const LambdaMatrix& lambda,
                                                       const std::vector<Distribution>& current) {
    const Index n = P.series();
    const int z = P.states();
    if (static_cast<Index>(current.size()) != n)
        throw InputError("one_step_distribution: wrong number of distributions");

    std::vector<Distribution> next(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        VectorXd d = VectorXd::Zero(z);
        for (Index i = 0; i < n; ++i) {
            const VectorXd& cur = current[static_cast<std::size_t>(i)].probs;
            for (int k = 0; k < z; ++k) {
                double dot = 0.0;
                for (int h = 0; h < z; ++h) dot += cur[h] * P.prob(i, j, h, k);
                d[k] += lambda.lambda(i, j) * dot;
            }
        }
        d /= d.sum(); // drift is at the 1e-16 level; renormalize it away
        next[static_cast<std::size_t>(j)].probs = d;
    }
    return next;
}

/// Samples a state panel from the model; each next state of series j is drawn
/// from the lambda-mixture of the source-conditional transition rows.
/// Deterministic given the seed. Initial states are uniform on the state space.
inline StatePanel mtd_simulate(const TransitionTensor& P, const LambdaMatrix& lambda,
                               Index T, std::uint64_t seed,
                               const std::vector<std::string>& tickers = {}) {
    const Index n = P.series();
    const int z = P.states();
    if (T < 1) throw InputError("mtd_simulate needs T >= 1");

    StatePanel panel;
    panel.num_states = z;
    panel.scheme.kind = StateScheme::sign;
    panel.scheme.num_states = z;
    panel.states.resize(T, n);
    panel.dates.resize(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) panel.dates[static_cast<std::size_t>(t)] = std::to_string(t);
    if (!tickers.empty()) {
        panel.tickers = tickers;
    } else {
        for (Index i = 0; i < n; ++i) panel.tickers.push_back("S" + std::to_string(i + 1));
    }

    std::mt19937_64 rng(seed);
    for (Index i = 0; i < n; ++i)
        panel.states(0, i) = static_cast<int>(uniform01(rng) * z) % z;

    VectorXd mix(z);
    for (Index t = 0; t + 1 < T; ++t)
        for (Index j = 0; j < n; ++j) {
            mix.setZero();
            for (Index i = 0; i < n; ++i) {
                const int h = panel.states(t, i);
                for (int k = 0; k < z; ++k)
                    mix[k] += lambda.lambda(i, j) * P.prob(i, j, h, k);
            }
            const double u = uniform01(rng) * mix.sum();
            double cum = 0.0;
            int drawn = z - 1;
            for (int k = 0; k < z; ++k) {
                cum += mix[k];
                if (u < cum) {
                    drawn = k;
                    break;
                }
            }
            panel.states(t + 1, j) = drawn;
        }
    return panel;
}

/// Fitted model on disk: a single JSON document with row-major arrays.
struct MtdModel {
    std::vector<std::string> tickers;
    int num_states = 0;
    TransitionTensor P;
    LambdaMatrix lambda;
    double smoothing = 1.0;
};

inline nlohmann::json model_to_json(const MtdModel& model) {
    const Index n = model.lambda.lambda.rows();
    nlohmann::json j;
    j["tickers"] = model.tickers;
    j["num_states"] = model.num_states;
    std::vector<double> lam;
    lam.reserve(static_cast<std::size_t>(n * n));
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) lam.push_back(model.lambda.lambda(r, c));
    j["lambda"] = lam;
    j["probs"] = model.P.raw_probs();
    std::vector<double> ll(model.lambda.loglik.data(), model.lambda.loglik.data() + n);
    j["loglik"] = ll;
    j["smoothing"] = model.smoothing;
    return j;
}

inline MtdModel model_from_json(const nlohmann::json& j) {
    MtdModel model;
    model.tickers = j.at("tickers").get<std::vector<std::string>>();
    model.num_states = j.at("num_states").get<int>();
    model.smoothing = j.at("smoothing").get<double>();
    const Index n = static_cast<Index>(model.tickers.size());
    const int z = model.num_states;

    const auto lam = j.at("lambda").get<std::vector<double>>();
    if (lam.size() != static_cast<std::size_t>(n * n))
        throw InputError("model JSON: lambda size mismatch");
    model.lambda.lambda.resize(n, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c)
            model.lambda.lambda(r, c) = lam[static_cast<std::size_t>(r * n + c)];

    const auto probs = j.at("probs").get<std::vector<double>>();
    if (probs.size() != static_cast<std::size_t>(n * n * z * z))
        throw InputError("model JSON: probs size mismatch");
    model.P = TransitionTensor(n, z);
    model.P.raw_probs() = probs;

    const auto ll = j.at("loglik").get<std::vector<double>>();
    if (ll.size() != static_cast<std::size_t>(n))
        throw InputError("model JSON: loglik size mismatch");
    model.lambda.loglik.resize(n);
    for (Index c = 0; c < n; ++c) model.lambda.loglik[c] = ll[static_cast<std::size_t>(c)];
    model.lambda.converged.assign(static_cast<std::size_t>(n), true);
    return model;
}

inline void write_model(const MtdModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write model file: " + path);
    out << model_to_json(model).dump(2) << "\n";
}

inline MtdModel read_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed model JSON in " + path + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace mtdnet
