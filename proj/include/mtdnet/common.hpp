#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtdnet {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using Eigen::VectorXi;
using Index = Eigen::Index;

/// Bad or unreadable input data (files, panels, parameters). CLI exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A computation whose preconditions hold but whose result is undefined for
/// this input, e.g. zero-variance assortativity. CLI exit code 3.
class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An optimization problem with an empty feasible set. CLI exit code 4.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic uniform double in [0,1). Uses the top 53 bits of the
/// generator output, so the stream does not depend on the standard library's
/// distribution implementation.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Random point on the probability simplex via exponential spacings.
inline VectorXd random_simplex_point(Index n, std::mt19937_64& rng) {
    VectorXd v(n);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        double u = uniform01(rng);
        if (u <= 0.0) u = 0x1.0p-53;
        v[i] = -std::log(u);
        total += v[i];
    }
    return v / total;
}

/// Euclidean projection of v onto the probability simplex {x >= 0, sum x = 1}.
inline VectorXd project_to_simplex(const VectorXd& v) {
    const Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cssv = 0.0;
    double theta = 0.0;
    for (Index i = 0; i < n; ++i) {
        cssv += u[static_cast<std::size_t>(i)];
        const double t = (cssv - 1.0) / static_cast<double>(i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
    }
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

/// Formats a double with 17 significant digits; round-trips exactly through
/// strtod. Used by every CSV writer so reruns are byte-identical.
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Mixes a stream index into a base seed (splitmix-style odd multiplier).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return base ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
}

} // namespace mtdnet
