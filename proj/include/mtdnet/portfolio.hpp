#pragma once

#include "mtdnet/common.hpp"
#include "mtdnet/marketdata.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace mtdnet {

/// In-sample mean vector and covariance matrix, jittered to positive
/// semidefiniteness.
struct MarketMoments {
    VectorXd mu;
    MatrixXd sigma;
};

enum class PenaltyForm { weighted, simple, none };

inline std::string to_string(PenaltyForm f) {
    switch (f) {
        case PenaltyForm::weighted: return "weighted";
        case PenaltyForm::simple: return "simple";
        case PenaltyForm::none: return "none";
    }
    return "?";
}

inline PenaltyForm penalty_form_from_string(const std::string& s) {
    if (s == "weighted") return PenaltyForm::weighted;
    if (s == "simple") return PenaltyForm::simple;
    if (s == "none") return PenaltyForm::none;
    throw InputError("unknown penalty form: " + s);
}

/// Assortativity penalty: R = scale * (rho . x) for the weighted form,
/// scale * (rho . y) for the simple form.
struct PenaltySpec {
    VectorXd rho;
    PenaltyForm form = PenaltyForm::none;
    double scale = 1.0;
};

enum class PortfolioObjective { utility, sharpe };

inline std::string to_string(PortfolioObjective o) {
    return o == PortfolioObjective::utility ? "utility" : "sharpe";
}

inline PortfolioObjective objective_from_string(const std::string& s) {
    if (s == "utility") return PortfolioObjective::utility;
    if (s == "sharpe") return PortfolioObjective::sharpe;
    throw InputError("unknown objective: " + s);
}

enum class SolveStatus { optimal, heuristic, infeasible };

inline std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::heuristic: return "heuristic";
        case SolveStatus::infeasible: return "infeasible";
    }
    return "?";
}

struct PortfolioSolution {
    VectorXd x;
    VectorXi y;
    double objective = 0.0;
    double R = 0.0;
    SolveStatus status = SolveStatus::optimal;
    bool degenerate = false; // flagged when no positive-return direction exists
};

struct SolveOptions {
    bool force_exact = false;      // run branch-and-bound regardless of size
    Index exact_max_assets = 30;   // above this the drop-and-resolve heuristic runs
    long node_budget = 200000;
    double gap_tol = 1e-7;
    double tie_tol = 1e-10;
    bool stdev_denominator = false; // conventional Sharpe ratio instead of the
                                    // variance-denominator objective
};

inline double portfolio_penalty(const PenaltySpec& spec, const VectorXd& x, const VectorXi& y) {
    switch (spec.form) {
        case PenaltyForm::none: return 0.0;
        case PenaltyForm::weighted: return spec.scale * spec.rho.dot(x);
        case PenaltyForm::simple: return spec.scale * spec.rho.dot(y.cast<double>());
    }
    return 0.0;
}

/// Column means and sample covariance (T-1 denominator). A diagonal jitter of
/// max(0, 1e-10 - lambda_min) keeps the matrix positive semidefinite on
/// rank-deficient windows.
inline MarketMoments estimate_moments(const MatrixXd& returns) {
    const Index T = returns.rows();
    const Index n = returns.cols();
    if (T < 2) throw InputError("moment estimation needs at least 2 return rows");

    MarketMoments m;
    m.mu = returns.colwise().mean();
    const MatrixXd centered = returns.rowwise() - m.mu.transpose();
    m.sigma = centered.transpose() * centered / static_cast<double>(T - 1);
    m.sigma = ((m.sigma + m.sigma.transpose()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m.sigma, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double jitter = std::max(0.0, 1e-10 - lmin);
    if (jitter > 0.0) m.sigma += jitter * MatrixXd::Identity(n, n);
    return m;
}

inline MarketMoments estimate_moments(const ReturnPanel& returns) {
    return estimate_moments(returns.returns);
}

namespace detail {

/// One mixed-integer instance in solver form. The objective is
///   base(x) - lin_cost.x - sum_{i selected} sel_cost_i,
/// with base either the quadratic utility or the return/variance ratio.
struct ProblemData {
    PortfolioObjective kind = PortfolioObjective::utility;
    double delta = 1.0;
    bool stdev_denom = false;
    VectorXd mu;
    MatrixXd sigma;
    VectorXd lin_cost; // weighted-form penalty
    VectorXd sel_cost; // simple-form penalty
    Index n = 0;

    double base(const VectorXd& x) const {
        const double u = mu.dot(x);
        if (kind == PortfolioObjective::utility)
            return u - 0.5 * delta * x.dot(sigma * x);
        const double v = x.dot(sigma * x);
        return stdev_denom ? u / std::sqrt(v) : u / v;
    }

    double smooth_value(const VectorXd& x) const { return base(x) - lin_cost.dot(x); }

    VectorXd smooth_gradient(const VectorXd& x) const {
        if (kind == PortfolioObjective::utility)
            return mu - delta * (sigma * x) - lin_cost;
        const VectorXd sx = sigma * x;
        const double u = mu.dot(x);
        const double v = x.dot(sx);
        if (stdev_denom) {
            const double sv = std::sqrt(v);
            return mu / sv - (u / (sv * v)) * sx - lin_cost;
        }
        return mu / v - (2.0 * u / (v * v)) * sx - lin_cost;
    }
};

/// Euclidean projection onto {lo <= x <= hi, sum x = 1} by bisection on the
/// shift of the clamped coordinates. Requires sum lo <= 1 <= sum hi.
inline VectorXd project_box_simplex(const VectorXd& v, const VectorXd& lo, const VectorXd& hi) {
    const Index n = v.size();
    double tau_lo = (v - hi).minCoeff() - 1.0;
    double tau_hi = (v - lo).maxCoeff() + 1.0;
    VectorXd x(n);
    for (int it = 0; it < 200; ++it) {
        const double tau = 0.5 * (tau_lo + tau_hi);
        double total = 0.0;
        for (Index i = 0; i < n; ++i) total += std::clamp(v[i] - tau, lo[i], hi[i]);
        if (total > 1.0)
            tau_lo = tau;
        else
            tau_hi = tau;
        if (tau_hi - tau_lo < 1e-17 * std::max(1.0, std::abs(tau_lo))) break;
    }
    const double tau = 0.5 * (tau_lo + tau_hi);
    for (Index i = 0; i < n; ++i) x[i] = std::clamp(v[i] - tau, lo[i], hi[i]);
    // distribute the residual over coordinates that are strictly inside the box
    double residual = 1.0 - x.sum();
    if (residual != 0.0) {
        for (Index i = 0; i < n && residual != 0.0; ++i) {
            const double room = residual > 0.0 ? hi[i] - x[i] : lo[i] - x[i];
            const double take = residual > 0.0 ? std::min(residual, room) : std::max(residual, room);
            x[i] += take;
            residual -= take;
        }
    }
    return x;
}

struct AscentResult {
    VectorXd x;
    double value;
};

/// Projected gradient ascent of the smooth objective over a box-and-simplex
/// set, with backtracking line search. Globally convergent for the concave
/// utility objective; callers multistart it for the ratio objective.
inline AscentResult maximize_smooth(const ProblemData& prob, const VectorXd& lo, const VectorXd& hi,
                                    VectorXd x, int max_iters = 5000, double tol = 1e-12) {
    x = project_box_simplex(x, lo, hi);
    double value = prob.smooth_value(x);
    double step = 1.0; // carries over between iterations; doubles after success
    for (int iter = 0; iter < max_iters; ++iter) {
        const VectorXd grad = prob.smooth_gradient(x);
        if ((project_box_simplex(x + grad, lo, hi) - x).norm() <= tol) break;
        step = std::min(step * 2.0, 1e10);
        bool accepted = false;
        double gain = 0.0;
        while (step > 1e-18) {
            const VectorXd cand = project_box_simplex(x + step * grad, lo, hi);
            const VectorXd dir = cand - x;
            const double cand_value = prob.smooth_value(cand);
            if (cand_value >= value + 1e-4 * grad.dot(dir)) {
                gain = cand_value - value;
                x = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        if (gain <= 1e-15 * (1.0 + std::abs(value))) break; // stalled short of tol
    }
    return {x, value};
}

/// Greedy maximizer of a linear objective over the box-and-simplex set.
inline double maximize_linear(const VectorXd& coef, const VectorXd& lo, const VectorXd& hi) {
    const Index n = coef.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (coef[a] != coef[b]) return coef[a] > coef[b];
        return a < b;
    });
    VectorXd x = lo;
    double budget = 1.0 - lo.sum();
    for (Index idx : order) {
        if (budget <= 0.0) break;
        const double take = std::min(budget, hi[idx] - lo[idx]);
        x[idx] += take;
        budget -= take;
    }
    return coef.dot(x);
}

inline double support_barycenter_weight(Index support_size) {
    return 1.0 / static_cast<double>(support_size);
}

/// Exact continuous solve with the support fixed: box [gamma, 1] on members,
/// zero elsewhere. Multistarts cover the ratio objective's possible local
/// optima; the utility objective is concave and needs only one start.
inline AscentResult solve_support(const ProblemData& prob, const std::vector<Index>& support,
                                  double gamma) {
    const Index n = prob.n;
    VectorXd lo = VectorXd::Zero(n);
    VectorXd hi = VectorXd::Zero(n);
    for (Index i : support) {
        lo[i] = gamma;
        hi[i] = 1.0;
    }

    VectorXd start = VectorXd::Zero(n);
    for (Index i : support) start[i] = support_barycenter_weight(static_cast<Index>(support.size()));
    AscentResult best = maximize_smooth(prob, lo, hi, start);

    if (prob.kind == PortfolioObjective::sharpe && support.size() > 1) {
        for (Index k : support) {
            VectorXd corner = VectorXd::Zero(n);
            for (Index i : support) corner[i] = gamma;
            corner[k] = 1.0 - gamma * static_cast<double>(support.size() - 1);
            AscentResult res = maximize_smooth(prob, lo, hi, corner);
            if (res.value > best.value) best = res;
        }
    }
    return best;
}

inline double selection_cost(const ProblemData& prob, const std::vector<Index>& support) {
    double c = 0.0;
    for (Index i : support) c += prob.sel_cost[i];
    return c;
}

/// Tie-break order: higher objective, then smaller support, then
/// lexicographically smallest selection vector.
inline bool solution_better(double obj_a, const VectorXi& ya, double obj_b, const VectorXi& yb,
                            double tie_tol) {
    if (obj_a > obj_b + tie_tol) return true;
    if (obj_a < obj_b - tie_tol) return false;
    const int sa = ya.sum(), sb = yb.sum();
    if (sa != sb) return sa < sb;
    for (Index i = 0; i < ya.size(); ++i)
        if (ya[i] != yb[i]) return ya[i] < yb[i];
    return false;
}

inline Index max_support_size(Index n, double gamma) {
    const auto cap = static_cast<Index>(std::floor((1.0 + 1e-9) / gamma));
    return std::min(n, cap);
}

inline VectorXi support_to_y(Index n, const std::vector<Index>& support) {
    VectorXi y = VectorXi::Zero(n);
    for (Index i : support) y[i] = 1;
    return y;
}

struct Incumbent {
    bool valid = false;
    double objective = -std::numeric_limits<double>::infinity();
    VectorXd x;
    VectorXi y;
};

inline void offer_candidate(Incumbent& inc, const ProblemData& prob,
                            const std::vector<Index>& support, double gamma, double tie_tol) {
    if (support.empty()) return;
    if (gamma * static_cast<double>(support.size()) > 1.0 + 1e-12) return;
    const AscentResult res = solve_support(prob, support, gamma);
    const double obj = res.value - selection_cost(prob, support);
    const VectorXi y = support_to_y(prob.n, support);
    if (!inc.valid || solution_better(obj, y, inc.objective, inc.y, tie_tol)) {
        inc.valid = true;
        inc.objective = obj;
        inc.x = res.x;
        inc.y = y;
    }
}

/// Upper bound on the best attainable objective over a partial assignment,
/// together with the relaxation point used for branching.
struct NodeBound {
    double bound;
    VectorXd relax_x;
};

inline NodeBound node_upper_bound(const ProblemData& prob, const std::vector<int8_t>& state,
                                  double gamma) {
    const Index n = prob.n;
    VectorXd lo = VectorXd::Zero(n);
    VectorXd hi = VectorXd::Zero(n);
    double sel_slack = 0.0; // best-case simple-form selection gain
    double sel_fixed = 0.0;
    Index members = 0;
    for (Index i = 0; i < n; ++i) {
        if (state[static_cast<std::size_t>(i)] == 1) {
            lo[i] = gamma;
            hi[i] = 1.0;
            sel_fixed += prob.sel_cost[i];
            ++members;
        } else if (state[static_cast<std::size_t>(i)] == 0) {
            hi[i] = 1.0;
            sel_slack += std::max(0.0, -prob.sel_cost[i]);
            ++members;
        }
    }
    if (members == 0 || lo.sum() > 1.0 + 1e-12)
        return {-std::numeric_limits<double>::infinity(), VectorXd::Zero(n)};

    VectorXd start(n);
    for (Index i = 0; i < n; ++i) start[i] = hi[i] > 0.0 ? 1.0 : 0.0;
    start = project_box_simplex(start, lo, hi);

    if (prob.kind == PortfolioObjective::utility) {
        const AscentResult res = maximize_smooth(prob, lo, hi, start);
        return {res.value - sel_fixed + sel_slack, res.x};
    }

    // ratio objective: bound the ratio, the linear penalty, and the selection
    // terms separately; each part is maximized on its own
    ProblemData ratio_only = prob;
    ratio_only.lin_cost = VectorXd::Zero(n);
    AscentResult res = maximize_smooth(ratio_only, lo, hi, start);
    // start again from the highest-return corner in case the barycenter start
    // sits in the nonpositive-return region
    VectorXd mu_corner = VectorXd::Zero(n);
    Index best_mu = -1;
    for (Index i = 0; i < n; ++i)
        if (hi[i] > 0.0 && (best_mu < 0 || prob.mu[i] > prob.mu[best_mu])) best_mu = i;
    mu_corner[best_mu] = 1.0;
    const AscentResult res2 = maximize_smooth(ratio_only, lo, hi, project_box_simplex(mu_corner, lo, hi));
    const double ratio_bound = std::max({res.value, res2.value, 0.0});
    const double pen_bound =
        prob.lin_cost.isZero(0.0) ? 0.0 : maximize_linear(-prob.lin_cost, lo, hi);
    const VectorXd& branch_x = res2.value > res.value ? res2.x : res.x;
    return {ratio_bound + pen_bound - sel_fixed + sel_slack, branch_x};
}

struct BnbNode {
    std::vector<int8_t> state; // 0 undecided, 1 forced in, 2 forced out
    double bound;
    VectorXd relax_x;
    long id;
    int depth;
};

struct BnbNodeOrder {
    bool operator()(const BnbNode& a, const BnbNode& b) const {
        if (a.bound != b.bound) return a.bound < b.bound; // max-heap on bound
        if (a.depth != b.depth) return a.depth < b.depth; // deeper first on ties
        return a.id > b.id;
    }
};

inline std::vector<Index> state_support(const std::vector<int8_t>& state, const VectorXd& x,
                                        double gamma) {
    std::vector<Index> support;
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i] == 1)
            support.push_back(static_cast<Index>(i));
        else if (state[i] == 0 && x[static_cast<Index>(i)] >= gamma / 2.0)
            support.push_back(static_cast<Index>(i));
    }
    return support;
}

/// Exact branch-and-bound over the selection vector. Returns optimal status
/// only when the remaining gap was closed within opts.gap_tol.
inline PortfolioSolution solve_exact(const ProblemData& prob, double gamma,
                                     const SolveOptions& opts) {
    const Index n = prob.n;
    const Index max_support = max_support_size(n, gamma);

    Incumbent inc;
    std::priority_queue<BnbNode, std::vector<BnbNode>, BnbNodeOrder> queue;
    long next_id = 0;
    long pops = 0;
    bool budget_hit = false;

    BnbNode root{std::vector<int8_t>(static_cast<std::size_t>(n), 0), 0.0, VectorXd(), next_id++, 0};
    {
        const NodeBound nb = node_upper_bound(prob, root.state, gamma);
        root.bound = nb.bound;
        root.relax_x = nb.relax_x;
    }
    if (std::isfinite(root.bound)) queue.push(root);

    while (!queue.empty()) {
        if (++pops > opts.node_budget) {
            budget_hit = true;
            break;
        }
        BnbNode node = queue.top();
        queue.pop();
        if (inc.valid && node.bound <= inc.objective + 1e-12) continue;
        if (inc.valid && node.bound - inc.objective <= opts.gap_tol) break;

        Index forced_in = 0;
        std::vector<Index> undecided;
        for (Index i = 0; i < n; ++i) {
            if (node.state[static_cast<std::size_t>(i)] == 1) ++forced_in;
            if (node.state[static_cast<std::size_t>(i)] == 0) undecided.push_back(i);
        }

        // feasible rounding of the relaxation keeps the incumbent fresh
        offer_candidate(inc, prob, state_support(node.state, node.relax_x, gamma), gamma,
                        opts.tie_tol);

        if (undecided.empty()) continue; // leaf already evaluated by the rounding above

        // branch on the most fractional relaxed selection indicator
        Index branch = undecided.front();
        double best_score = -1.0;
        for (Index i : undecided) {
            const double y_rel = std::clamp(node.relax_x[i] / gamma, 0.0, 1.0);
            const double score = std::min(y_rel, 1.0 - y_rel);
            if (score > best_score + 1e-15) {
                best_score = score;
                branch = i;
            }
        }

        for (int8_t value : {static_cast<int8_t>(1), static_cast<int8_t>(2)}) {
            if (value == 1 && forced_in >= max_support) continue;
            BnbNode child;
            child.state = node.state;
            child.state[static_cast<std::size_t>(branch)] = value;
            child.depth = node.depth + 1;
            child.id = next_id++;
            const NodeBound nb = node_upper_bound(prob, child.state, gamma);
            if (!std::isfinite(nb.bound)) continue;
            if (inc.valid && nb.bound <= inc.objective + 1e-12) continue;
            child.bound = nb.bound;
            child.relax_x = nb.relax_x;
            queue.push(child);
        }
    }

    if (!inc.valid) throw InfeasibleError("no feasible portfolio exists");
    PortfolioSolution sol;
    sol.x = inc.x;
    sol.y = inc.y;
    sol.objective = inc.objective;
    sol.status = budget_hit ? SolveStatus::heuristic : SolveStatus::optimal;
    return sol;
}

/// Relax-drop-resolve heuristic for large universes: solve with the coupling
/// relaxed to [0,1], drop weights below gamma/2, repeat on the survivors to a
/// fixed point, then solve the final support exactly.
inline PortfolioSolution solve_heuristic(const ProblemData& prob, double gamma) {
    const Index n = prob.n;
    std::vector<Index> support;
    for (Index i = 0; i < n; ++i) support.push_back(i);

    for (int round = 0; round < 100; ++round) {
        VectorXd lo = VectorXd::Zero(n);
        VectorXd hi = VectorXd::Zero(n);
        for (Index i : support) hi[i] = 1.0;
        VectorXd start = VectorXd::Zero(n);
        for (Index i : support) start[i] = 1.0;
        start = project_box_simplex(start, lo, hi);
        AscentResult res = maximize_smooth(prob, lo, hi, start);
        if (prob.kind == PortfolioObjective::sharpe) {
            VectorXd corner = VectorXd::Zero(n);
            Index best_mu = support.front();
            for (Index i : support)
                if (prob.mu[i] > prob.mu[best_mu]) best_mu = i;
            corner[best_mu] = 1.0;
            const AscentResult alt = maximize_smooth(prob, lo, hi, corner);
            if (alt.value > res.value) res = alt;
        }

        std::vector<Index> kept;
        for (Index i : support)
            if (res.x[i] >= gamma / 2.0) kept.push_back(i);
        if (kept.empty()) {
            Index best = support.front();
            for (Index i : support)
                if (res.x[i] > res.x[best]) best = i;
            kept.push_back(best);
        }
        const Index cap = max_support_size(n, gamma);
        if (static_cast<Index>(kept.size()) > cap) {
            std::sort(kept.begin(), kept.end(),
                      [&](Index a, Index b) { return res.x[a] > res.x[b]; });
            kept.resize(static_cast<std::size_t>(cap));
            std::sort(kept.begin(), kept.end());
        }
        if (kept == support) break;
        support = std::move(kept);
    }

    const AscentResult res = solve_support(prob, support, gamma);
    PortfolioSolution sol;
    sol.x = res.x;
    sol.y = support_to_y(n, support);
    sol.objective = res.value - selection_cost(prob, support);
    sol.status = SolveStatus::heuristic;
    return sol;
}

inline ProblemData build_problem(const MarketMoments& m, const PenaltySpec& spec,
                                 PortfolioObjective kind, double delta,
                                 const SolveOptions& opts) {
    const Index n = m.mu.size();
    if (m.sigma.rows() != n || m.sigma.cols() != n)
        throw InputError("moment dimensions disagree");
    ProblemData prob;
    prob.kind = kind;
    prob.delta = delta;
    prob.stdev_denom = opts.stdev_denominator;
    prob.mu = m.mu;
    prob.sigma = m.sigma;
    prob.lin_cost = VectorXd::Zero(n);
    prob.sel_cost = VectorXd::Zero(n);
    prob.n = n;

    // a zero scale is exactly the unpenalized problem, so the benchmark path
    // and the scale-0 path take identical branches
    if (spec.form != PenaltyForm::none && spec.scale != 0.0) {
        if (spec.rho.size() != n) throw InputError("penalty vector length mismatch");
        if (spec.form == PenaltyForm::weighted)
            prob.lin_cost = spec.scale * spec.rho;
        else
            prob.sel_cost = spec.scale * spec.rho;
    }
    return prob;
}

inline PortfolioSolution finalize_solution(const ProblemData& prob, const PenaltySpec& spec,
                                           PortfolioSolution sol) {
    sol.R = portfolio_penalty(spec, sol.x, sol.y);
    if (prob.kind == PortfolioObjective::sharpe && spec.form == PenaltyForm::none &&
        (prob.mu.array() <= 0.0).all())
        sol.degenerate = true;
    return sol;
}

inline PortfolioSolution solve_mixed(const MarketMoments& m, const PenaltySpec& spec,
                                     PortfolioObjective kind, double delta, double gamma,
                                     const SolveOptions& opts) {
    if (gamma > 1.0) throw InfeasibleError("gamma > 1 admits no feasible selection");
    if (gamma <= 0.0) throw InputError("gamma must lie in (0, 1]");
    const ProblemData prob = build_problem(m, spec, kind, delta, opts);
    PortfolioSolution sol = (opts.force_exact || prob.n <= opts.exact_max_assets)
                                ? solve_exact(prob, gamma, opts)
                                : solve_heuristic(prob, gamma);
    return finalize_solution(prob, spec, sol);
}

} // namespace detail

/// Maximize mu.x - (delta/2) x'Sigma x - R over the budget, long-only, and
/// semi-continuous selection constraints.
inline PortfolioSolution max_quadratic_utility(const MarketMoments& m, const PenaltySpec& spec,
                                               double delta, double gamma,
                                               const SolveOptions& opts = {}) {
    if (delta <= 0.0) throw InputError("delta must be positive");
    return detail::solve_mixed(m, spec, PortfolioObjective::utility, delta, gamma, opts);
}

/// Maximize mu.x / (x'Sigma x) - R (variance denominator as printed; set
/// opts.stdev_denominator for the conventional ratio) over the same
/// constraints.
inline PortfolioSolution max_sharpe(const MarketMoments& m, const PenaltySpec& spec, double gamma,
                                    const SolveOptions& opts = {}) {
    return detail::solve_mixed(m, spec, PortfolioObjective::sharpe, 1.0, gamma, opts);
}

/// The unpenalized problem.
inline PortfolioSolution markowitz_benchmark(const MarketMoments& m, PortfolioObjective objective,
                                             double delta, double gamma,
                                             const SolveOptions& opts = {}) {
    PenaltySpec none;
    none.form = PenaltyForm::none;
    return objective == PortfolioObjective::utility
               ? max_quadratic_utility(m, none, delta, gamma, opts)
               : max_sharpe(m, none, gamma, opts);
}

/// Verification oracle: enumerates every feasible support (n <= 12), solves
/// each continuous subproblem by projected gradient from the barycenter plus
/// a pairwise grid refinement, and keeps the tie-break best. When
/// `second_best` is given it receives the best objective over all other
/// supports, so callers can measure how separated the winning support is.
inline PortfolioSolution brute_force_search(const MarketMoments& m, const PenaltySpec& spec,
                                            PortfolioObjective objective, double delta,
                                            double gamma, int resolution = 100,
                                            const SolveOptions& opts = {},
                                            double* second_best = nullptr) {
    const Index n = m.mu.size();
    if (n > 12) throw InputError("brute_force_search supports at most 12 assets");
    if (resolution < 50) throw InputError("brute_force_search needs resolution >= 50");
    if (gamma > 1.0) throw InfeasibleError("gamma > 1 admits no feasible selection");
    if (gamma <= 0.0) throw InputError("gamma must lie in (0, 1]");

    const detail::ProblemData prob = detail::build_problem(m, spec, objective, delta, opts);
    const Index max_support = detail::max_support_size(n, gamma);

    detail::Incumbent inc;
    std::vector<std::pair<double, std::uint32_t>> per_support;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<Index> support;
        for (Index i = 0; i < n; ++i)
            if (mask & (1u << i)) support.push_back(i);
        if (static_cast<Index>(support.size()) > max_support) continue;

        VectorXd lo = VectorXd::Zero(n), hi = VectorXd::Zero(n);
        for (Index i : support) {
            lo[i] = gamma;
            hi[i] = 1.0;
        }
        VectorXd x = VectorXd::Zero(n);
        for (Index i : support)
            x[i] = detail::support_barycenter_weight(static_cast<Index>(support.size()));
        detail::AscentResult res = detail::maximize_smooth(prob, lo, hi, x);

        // pairwise mass-exchange refinement, halving the step down to the
        // requested grid resolution, then a final polish
        x = res.x;
        double value = res.value;
        const double min_step = 1.0 / (static_cast<double>(resolution) * resolution);
        for (double step = 0.5; step >= min_step; step *= 0.5) {
            bool improved = true;
            while (improved) {
                improved = false;
                for (Index a : support)
                    for (Index b : support) {
                        if (a == b) continue;
                        if (x[a] + step > 1.0 + 1e-12 || x[b] - step < gamma - 1e-12) continue;
                        VectorXd cand = x;
                        cand[a] += step;
                        cand[b] -= step;
                        const double cand_value = prob.smooth_value(cand);
                        if (cand_value > value + 1e-15) {
                            x = cand;
                            value = cand_value;
                            improved = true;
                        }
                    }
            }
        }
        res = detail::maximize_smooth(prob, lo, hi, x);

        const double obj = res.value - detail::selection_cost(prob, support);
        const VectorXi y = detail::support_to_y(n, support);
        per_support.emplace_back(obj, mask);
        if (!inc.valid || detail::solution_better(obj, y, inc.objective, inc.y, opts.tie_tol)) {
            inc.valid = true;
            inc.objective = obj;
            inc.x = res.x;
            inc.y = y;
        }
    }

    if (!inc.valid) throw InfeasibleError("no feasible portfolio exists");
    if (second_best != nullptr) {
        std::uint32_t best_mask = 0;
        for (Index i = 0; i < n; ++i)
            if (inc.y[i] == 1) best_mask |= (1u << i);
        *second_best = -std::numeric_limits<double>::infinity();
        for (const auto& [obj, mask] : per_support)
            if (mask != best_mask) *second_best = std::max(*second_best, obj);
    }
    PortfolioSolution sol;
    sol.x = inc.x;
    sol.y = inc.y;
    sol.objective = inc.objective;
    sol.status = SolveStatus::optimal;
    return detail::finalize_solution(prob, spec, sol);
}

inline nlohmann::json instance_to_json(const MarketMoments& m, const PenaltySpec& spec,
                                       PortfolioObjective objective, double delta, double gamma) {
    const Index n = m.mu.size();
    nlohmann::json j;
    j["mu"] = std::vector<double>(m.mu.data(), m.mu.data() + n);
    std::vector<double> sig;
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) sig.push_back(m.sigma(r, c));
    j["sigma"] = sig;
    j["rho"] = spec.rho.size() == n
                   ? std::vector<double>(spec.rho.data(), spec.rho.data() + n)
                   : std::vector<double>(static_cast<std::size_t>(n), 0.0);
    j["form"] = to_string(spec.form);
    j["scale"] = spec.scale;
    j["delta"] = delta;
    j["gamma"] = gamma;
    j["objective"] = to_string(objective);
    return j;
}

struct PortfolioInstance {
    MarketMoments moments;
    PenaltySpec spec;
    PortfolioObjective objective = PortfolioObjective::utility;
    double delta = 1.0;
    double gamma = 0.01;
};

inline PortfolioInstance instance_from_json(const nlohmann::json& j) {
    PortfolioInstance inst;
    const auto mu = j.at("mu").get<std::vector<double>>();
    const Index n = static_cast<Index>(mu.size());
    inst.moments.mu = Eigen::Map<const VectorXd>(mu.data(), n);
    const auto sig = j.at("sigma").get<std::vector<double>>();
    if (sig.size() != static_cast<std::size_t>(n * n))
        throw InputError("instance JSON: sigma size mismatch");
    inst.moments.sigma.resize(n, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c)
            inst.moments.sigma(r, c) = sig[static_cast<std::size_t>(r * n + c)];
    if (j.contains("rho")) {
        const auto rho = j.at("rho").get<std::vector<double>>();
        if (rho.size() != static_cast<std::size_t>(n))
            throw InputError("instance JSON: rho size mismatch");
        inst.spec.rho = Eigen::Map<const VectorXd>(rho.data(), n);
    } else {
        inst.spec.rho = VectorXd::Zero(n);
    }
    inst.spec.form = penalty_form_from_string(j.value("form", "none"));
    inst.spec.scale = j.value("scale", 1.0);
    inst.objective = objective_from_string(j.value("objective", "utility"));
    inst.delta = j.value("delta", 1.0);
    inst.gamma = j.value("gamma", 0.01);
    return inst;
}

inline nlohmann::json solution_to_json(const PortfolioSolution& sol) {
    nlohmann::json j;
    j["x"] = std::vector<double>(sol.x.data(), sol.x.data() + sol.x.size());
    j["y"] = std::vector<int>(sol.y.data(), sol.y.data() + sol.y.size());
    j["objective"] = sol.objective;
    j["R"] = sol.R;
    j["status"] = to_string(sol.status);
    return j;
}

} // namespace mtdnet
