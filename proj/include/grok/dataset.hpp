// Full (a, op, b) -> c tables, seeded train/test splits, multi-task mixtures
// and label-distribution statistics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "grok/opspec.hpp"
#include "grok/rng.hpp"

namespace grok {

class EmptySplit : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DuplicateTask : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Example {
    std::uint32_t a = 0;
    std::uint32_t op_token = 0;  // in [p, p + n_op)
    std::uint32_t b = 0;
    std::uint32_t label = 0;     // residue in [0, p)

    friend bool operator==(const Example&, const Example&) = default;
};

struct DatasetSplit {
    std::vector<Example> train;
    std::vector<Example> test;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    std::uint32_t p = 0;
    std::vector<OpExpr> ops;  // ops[i] is encoded by token p + i

    std::size_t task_of(const Example& ex) const { return ex.op_token - p; }
};

struct LabelStats {
    double kl_train_test = 0.0;  // nats
    double entropy_train = 0.0;
    double entropy_test = 0.0;
    std::size_t n_seeds = 0;
};

inline void check_modulus(std::uint64_t p) {
    if (p < 3 || p >= 65536 || !is_prime(p))
        throw std::invalid_argument("modulus must be an odd prime below 2^16, got " + std::to_string(p));
}

// p^2 examples in row-major (a, b) order.
inline std::vector<Example> build_table(const OpExpr& e, std::uint32_t p, std::uint32_t op_token) {
    check_modulus(p);
    if (op_token < p) throw std::invalid_argument("op token must not collide with integer tokens");
    std::vector<Example> rows;
    rows.reserve(std::size_t{p} * p);
    for (std::uint32_t a = 0; a < p; ++a)
        for (std::uint32_t b = 0; b < p; ++b)
            rows.push_back({a, op_token, b, static_cast<std::uint32_t>(eval_op_raw(e, a, b, p))});
    return rows;
}

// floor(r * n); the 1e-9 nudge keeps decimal fractions such as 0.29 * 100
// from landing one below the intended integer.
inline std::size_t train_size(double r, std::size_t n) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
}

// Shuffles with the seeded generator and keeps the first floor(r * n) rows for
// training. `p` and `ops` are left for the caller to fill.
inline DatasetSplit split(std::vector<Example> table, double r, std::uint64_t seed) {
    if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("fraction must lie in (0, 1)");
    const std::size_t n_train = train_size(r, table.size());
    if (n_train == 0 || n_train >= table.size())
        throw EmptySplit("fraction " + std::to_string(r) + " leaves an empty train or test set for " +
                         std::to_string(table.size()) + " rows");
    seeded_shuffle(table.begin(), table.end(), seed);
    DatasetSplit out;
    out.fraction = r;
    out.seed = seed;
    out.train.assign(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(table.begin() + static_cast<std::ptrdiff_t>(n_train), table.end());
    return out;
}

inline DatasetSplit split_task(const OpExpr& e, std::uint32_t p, double r, std::uint64_t seed) {
    DatasetSplit s = split(build_table(e, p, p), r, seed);
    s.p = p;
    s.ops = {e};
    return s;
}

// Task i gets op token p + i and split seed `seed + i`.
inline DatasetSplit build_mixture(const std::vector<OpExpr>& tasks, std::uint32_t p, double r, std::uint64_t seed) {
    if (tasks.empty()) throw std::invalid_argument("mixture needs at least one task");
    for (std::size_t i = 0; i < tasks.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (render_op(tasks[i]) == render_op(tasks[j]))
                throw DuplicateTask("task '" + render_op(tasks[i]) + "' appears twice");
    DatasetSplit out;
    out.fraction = r;
    out.seed = seed;
    out.p = p;
    out.ops = tasks;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto token = static_cast<std::uint32_t>(p + i);
        DatasetSplit part = split(build_table(tasks[i], p, token), r, seed + i);
        out.train.insert(out.train.end(), part.train.begin(), part.train.end());
        out.test.insert(out.test.end(), part.test.begin(), part.test.end());
    }
    return out;
}

namespace detail {

inline std::vector<double> label_distribution(const std::vector<Example>& rows, std::uint32_t p) {
    std::vector<double> d(p, 0.0);
    for (const auto& ex : rows) d[ex.label] += 1.0;
    for (auto& v : d) v /= static_cast<double>(rows.size());
    return d;
}

inline double entropy(const std::vector<double>& d) {
    double h = 0.0;
    for (double v : d)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

}  // namespace detail

constexpr double kKlSmoothing = 1e-12;

// KL(P || Q) with zero-probability categories on either side raised to 1e-12.
inline double kl_divergence(const std::vector<double>& P, const std::vector<double>& Q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const double pi = P[i] > 0.0 ? P[i] : kKlSmoothing;
        const double qi = Q[i] > 0.0 ? Q[i] : kKlSmoothing;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

// Means over seeds 0 .. n_seeds-1.
inline LabelStats label_stats(const OpExpr& e, std::uint32_t p, double r, std::size_t n_seeds) {
    if (n_seeds == 0) throw std::invalid_argument("n_seeds must be >= 1");
    LabelStats out;
    out.n_seeds = n_seeds;
    const auto table = build_table(e, p, p);
    for (std::size_t s = 0; s < n_seeds; ++s) {
        DatasetSplit sp = split(table, r, s);
        auto dtrain = detail::label_distribution(sp.train, p);
        auto dtest = detail::label_distribution(sp.test, p);
        out.kl_train_test += std::max(0.0, kl_divergence(dtrain, dtest));
        out.entropy_train += detail::entropy(dtrain);
        out.entropy_test += detail::entropy(dtest);
    }
    const auto n = static_cast<double>(n_seeds);
    out.kl_train_test /= n;
    out.entropy_train /= n;
    out.entropy_test /= n;
    return out;
}

}  // namespace grok
