// AdamW with decoupled weight decay, the full-batch training loop and grok
// detection over the evaluation trace.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grok/dataset.hpp"
#include "grok/fourier.hpp"
#include "grok/measures.hpp"
#include "grok/model.hpp"

namespace grok {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    double weight_decay = 1.0;
    std::int64_t max_steps = 300000;
    std::int64_t eval_every = 100;
    double grok_threshold = 0.99;
    double memorization_threshold = 0.99;
    int sustain_evals = 5;
    double eta = 0.5;
    bool early_stop = false;
    std::int64_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
        if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
        if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
        if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
        if (sustain_evals < 1) throw std::invalid_argument("sustain_evals must be >= 1");
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    }
};

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;

    static AdamState zeros(const ModelDims& d) { return {ModelParams::zeros(d), ModelParams::zeros(d), 0}; }
};

// One decoupled AdamW update at step `step` (1-based). Frozen tensors keep
// their values and their moments stay zero.
inline void adamw_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg,
                       std::int64_t step) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    std::vector<const Matrix*> g;
    grads.for_each([&g](const std::string&, const Matrix& w) { g.push_back(&w); });
    std::vector<Matrix*> m1, m2;
    state.m.for_each([&m1](const std::string&, Matrix& w) { m1.push_back(&w); });
    state.v.for_each([&m2](const std::string&, Matrix& w) { m2.push_back(&w); });
    std::size_t i = 0;
    params.for_each([&](const std::string& name, Matrix& theta) {
        const std::size_t k = i++;
        if (params.freeze.is_frozen(name)) return;
        Matrix& mm = *m1[k];
        Matrix& vv = *m2[k];
        const Matrix& gg = *g[k];
        mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * gg;
        vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * gg.cwiseAbs2();
        theta.array() -= cfg.lr * ((mm.array() / bc1) / ((vv.array() / bc2).sqrt() + cfg.adam_eps) +
                                   cfg.weight_decay * theta.array());
    });
    state.step = step;
}

struct ProgressPoint {
    std::int64_t step = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double ffd_embed = 0.0;
    double fcr_embed = 0.0;
    double ffd_wl = 0.0;
    double fcr_wl = 0.0;
    double weight_l2 = 0.0;
    std::vector<double> task_test_acc;  // one per task, mixtures only
};

using ProgressTrace = std::vector<ProgressPoint>;

struct GrokReport {
    std::optional<std::int64_t> memorization_step;
    std::optional<std::int64_t> grok_step;
    double final_train_acc = 0.0;
    double final_test_acc = 0.0;
    double best_test_acc = 0.0;
    // Mixtures: per-task grok steps and best accuracies.
    std::vector<std::optional<std::int64_t>> task_grok_steps;
    std::vector<double> task_best_test_acc;

    bool grokked() const { return grok_step.has_value(); }
    bool co_grokked() const {
        if (task_grok_steps.empty()) return grokked();
        for (const auto& s : task_grok_steps)
            if (!s) return false;
        return true;
    }
};

namespace detail {

// First index of a run of `sustain` consecutive values >= threshold.
inline std::optional<std::size_t> first_sustained(const std::vector<double>& xs, double threshold, int sustain) {
    int run = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        run = xs[i] >= threshold ? run + 1 : 0;
        if (run >= sustain) return i + 1 - static_cast<std::size_t>(sustain);
    }
    return std::nullopt;
}

}  // namespace detail

inline GrokReport detect_grok(const ProgressTrace& trace, const TrainConfig& cfg) {
    if (trace.empty()) throw std::invalid_argument("empty trace");
    GrokReport r;
    std::vector<double> test;
    for (const auto& pt : trace) {
        if (!r.memorization_step && pt.train_acc >= cfg.memorization_threshold) r.memorization_step = pt.step;
        test.push_back(pt.test_acc);
        r.best_test_acc = std::max(r.best_test_acc, pt.test_acc);
    }
    if (auto i = detail::first_sustained(test, cfg.grok_threshold, cfg.sustain_evals)) r.grok_step = trace[*i].step;
    r.final_train_acc = trace.back().train_acc;
    r.final_test_acc = trace.back().test_acc;
    const std::size_t n_tasks = trace.front().task_test_acc.size();
    for (std::size_t t = 0; t < n_tasks; ++t) {
        std::vector<double> xs;
        double best = 0.0;
        for (const auto& pt : trace) {
            xs.push_back(pt.task_test_acc[t]);
            best = std::max(best, pt.task_test_acc[t]);
        }
        auto i = detail::first_sustained(xs, cfg.grok_threshold, cfg.sustain_evals);
        r.task_grok_steps.push_back(i ? std::optional<std::int64_t>(trace[*i].step) : std::nullopt);
        r.task_best_test_acc.push_back(best);
    }
    return r;
}

class Diverged : public std::runtime_error {
public:
    Diverged(const std::string& what, ProgressTrace trace) : std::runtime_error(what), trace_(std::move(trace)) {}
    const ProgressTrace& trace() const noexcept { return trace_; }

private:
    ProgressTrace trace_;
};

struct TrainResult {
    ModelParams params;
    ProgressTrace trace;
    GrokReport report;
};

struct TrainHooks {
    std::function<void(const ProgressPoint&)> on_eval;
    std::function<void(std::int64_t, const ModelParams&)> on_checkpoint;
};

// Spectral progress measures of W_E (integer-token columns) and W_L.
inline void fill_measures(ProgressPoint& pt, const ModelParams& params, const FourierBasis& basis, double eta) {
    const FourierSpectrum se = embedding_spectrum(params, basis);
    const FourierSpectrum sl = neuron_logit_spectrum(params, basis);
    pt.ffd_embed = ffd(se, eta);
    pt.fcr_embed = fcr(se);
    pt.ffd_wl = ffd(sl, eta);
    pt.fcr_wl = fcr(sl);
}

inline std::vector<double> per_task_accuracy(const Matrix& logits, const std::vector<Example>& rows,
                                             const DatasetSplit& split) {
    const std::size_t n_tasks = split.ops.size();
    std::vector<std::size_t> hits(n_tasks, 0), totals(n_tasks, 0);
    for (Eigen::Index n = 0; n < logits.cols(); ++n) {
        const Example& ex = rows[static_cast<std::size_t>(n)];
        const std::size_t t = split.task_of(ex);
        Eigen::Index arg = 0;
        logits.col(n).maxCoeff(&arg);
        ++totals[t];
        if (arg == ex.label) ++hits[t];
    }
    std::vector<double> acc(n_tasks, 0.0);
    for (std::size_t t = 0; t < n_tasks; ++t)
        if (totals[t] > 0) acc[t] = static_cast<double>(hits[t]) / static_cast<double>(totals[t]);
    return acc;
}

// Full-batch training from `init`. Evaluates at step 0, every eval_every
// steps, and at the final step. With early_stop the run ends once a grok
// step is confirmed (sustain_evals evaluations after it).
inline TrainResult train(const DatasetSplit& split, ModelParams init, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
    cfg.validate();
    if (split.train.empty() || split.test.empty()) throw std::invalid_argument("split has an empty side");
    TrainResult res;
    res.params = std::move(init);
    ModelParams& params = res.params;
    const FourierBasis basis = make_basis(params.dims.p);
    AdamState state = AdamState::zeros(params.dims);
    const bool mixture = split.ops.size() > 1;

    auto evaluate = [&](std::int64_t step, double train_loss, const Matrix& train_logits) {
        ProgressPoint pt;
        pt.step = step;
        pt.train_loss = train_loss;
        pt.train_acc = accuracy(train_logits, split.train);
        const ForwardResult test = forward(params, split.test);
        pt.test_loss = cross_entropy(test.logits, split.test);
        pt.test_acc = accuracy(test.logits, split.test);
        if (mixture) pt.task_test_acc = per_task_accuracy(test.logits, split.test, split);
        fill_measures(pt, params, basis, cfg.eta);
        pt.weight_l2 = params.l2_norm();
        res.trace.push_back(pt);
        if (hooks.on_eval) hooks.on_eval(pt);
    };

    for (std::int64_t step = 0;; ++step) {
        LossAndGrads lg;
        try {
            lg = loss_and_grads(params, split.train);
        } catch (const NaNGuard& e) {
            throw Diverged(std::string("training diverged at step ") + std::to_string(step) + ": " + e.what(),
                           res.trace);
        }
        const bool last = step == cfg.max_steps;
        if (step % cfg.eval_every == 0 || last) {
            evaluate(step, lg.loss, lg.logits);
            if (cfg.early_stop && detect_grok(res.trace, cfg).co_grokked()) break;
        }
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0 && !last)
            hooks.on_checkpoint(step, params);
        if (last) break;
        adamw_step(params, lg.grads, state, cfg, step + 1);
    }
    res.report = detect_grok(res.trace, cfg);
    return res;
}

}  // namespace grok
