// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grok/dataset.hpp"
#include "grok/model.hpp"
#include "grok/rng.hpp"

namespace grok::testing {

inline ModelDims tiny_dims(int p = 5, int n_op = 2) {
    ModelDims d;
    d.p = p;
    d.n_op = n_op;
    d.d_emb = 8;
    d.d_mlp = 16;
    d.n_heads = 2;
    d.d_head = 4;
    return d;
}

// Every (a, op, b) triple with labels from a+b (first op) and a*b (second).
inline std::vector<Example> tiny_batch(const ModelDims& d) {
    std::vector<Example> out;
    const auto p = static_cast<std::uint32_t>(d.p);
    for (std::uint32_t t = 0; t < static_cast<std::uint32_t>(d.n_op); ++t)
        for (std::uint32_t a = 0; a < p; ++a)
            for (std::uint32_t b = 0; b < p; ++b) out.push_back({a, p + t, b, t == 0 ? (a + b) % p : (a * b) % p});
    return out;
}

// Tiny model in which every matrix has well over 100 entries.
inline ModelDims grad_check_dims() {
    ModelDims d = tiny_dims(7);
    d.d_emb = 16;
    d.d_mlp = 32;
    d.d_head = 8;
    return d;
}

struct GradCheckReport {
    std::map<std::string, double> max_rel_error;
    std::map<std::string, int> coords_checked;
    std::map<std::string, int> kinks_skipped;
    double worst() const {
        double w = 0.0;
        for (const auto& [k, v] : max_rel_error) w = std::max(w, v);
        return w;
    }
};

// Fourth-order central differences against loss_and_grads. Coordinates are
// visited in a seeded random order until `coords` of them are checked (all
// of them for small matrices). Probes that flip the sign of any ReLU
// pre-activation straddle a kink of the loss; such a coordinate is retried
// with each smaller step in `steps` and skipped if every step flips.
// Relative error is |g - fd| / max(|g|, |fd|, floor).
inline GradCheckReport grad_check(const ModelParams& params, const std::vector<Example>& batch, std::uint64_t seed,
                                  int coords = 100, std::vector<double> steps = {1e-3, 1e-4, 1e-5},
                                  double floor = 1e-6) {
    const LossAndGrads lg = loss_and_grads(params, batch);
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active = forward(params, batch).cache.pre.array() > 0.0;
    GradCheckReport rep;
    CounterRng rng(seed);
    ModelParams probe = params;
    probe.zip(lg.grads, [&](const std::string& name, Matrix& w, const Matrix& g) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(w.size()));
        for (Eigen::Index i = 0; i < w.size(); ++i) order[static_cast<std::size_t>(i)] = i;
        seeded_shuffle(order.begin(), order.end(), rng.next_u64());
        double worst = 0.0;
        int checked = 0, skipped = 0;
        for (Eigen::Index i : order) {
            if (checked >= coords) break;
            const double orig = w.data()[i];
            std::optional<double> fd;
            for (double h : steps) {
                double f[4];
                bool kink = false;
                int j = 0;
                for (double k : {-2.0, -1.0, 1.0, 2.0}) {
                    w.data()[i] = orig + k * h;
                    const ForwardResult r = forward(probe, batch);
                    f[j++] = cross_entropy(r.logits, batch);
                    kink = kink || ((r.cache.pre.array() > 0.0) != active).any();
                }
                w.data()[i] = orig;
                if (!kink) {
                    fd = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
                    break;
                }
            }
            if (!fd) {
                ++skipped;
                continue;
            }
            const double an = g.data()[i];
            worst = std::max(worst, std::abs(an - *fd) / std::max({std::abs(an), std::abs(*fd), floor}));
            ++checked;
        }
        rep.max_rel_error[name] = worst;
        rep.coords_checked[name] = checked;
        rep.kinks_skipped[name] = skipped;
    });
    return rep;
}

}  // namespace grok::testing
