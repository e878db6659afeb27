// Restricted loss, per-frequency ablated loss and the key / non-key / residual
// decomposition of the logits.
//
// "Frequency" logits live on the W_L path (W_L * MLP, skip path excluded) and
// are split along the class axis with the Fourier basis; the constant class
// component is counted with the key part. The residual part is the rest of
// the raw logits, i.e. the skip contribution W_U[:p] x1. All losses use a
// softmax over the p integer classes.
#pragma once

#include <array>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "grok/fourier.hpp"
#include "grok/model.hpp"

namespace grok {

class EmptyKeySet : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

constexpr double kDependentThreshold = 1e-9;

struct LogitDecomposition {
    Matrix raw;            // p x N
    Matrix key_part;
    Matrix nonkey_part;
    Matrix residual_part;
};

struct DecompositionLosses {
    double full = 0.0;            // key + nonkey + residual (raw logits)
    double restricted = 0.0;      // key only
    double nonkey_only = 0.0;     // (a)
    double residual_only = 0.0;   // (b)
    double key_nonkey = 0.0;      // (c)
    double key_residual = 0.0;    // (d)
    double nonkey_residual = 0.0; // (e)

    struct Row {
        const char* name;
        bool key, nonkey, residual;
        double loss;
    };
    std::array<Row, 7> rows() const {
        return {{{"train_loss", true, true, true, full},
                 {"restricted_loss", true, false, false, restricted},
                 {"ablation_a", false, true, false, nonkey_only},
                 {"ablation_b", false, false, true, residual_only},
                 {"ablation_c", true, true, false, key_nonkey},
                 {"ablation_d", true, false, true, key_residual},
                 {"ablation_e", false, true, true, nonkey_residual}}};
    }
};

// Caches one forward pass over `data` so that many frequency masks can be
// scored without recomputing activations.
class FrequencyAnalyzer {
public:
    FrequencyAnalyzer(const ModelParams& m, std::vector<Example> data, const FourierBasis& basis)
        : basis_(basis), data_(std::move(data)) {
        if (m.dims.p != basis.p) throw ShapeMismatch("basis modulus differs from model modulus");
        if (data_.empty()) throw std::invalid_argument("no examples to analyze");
        const int p = m.dims.p;
        const ForwardResult fr = forward(m, data_);
        raw_ = fr.logits.topRows(p);
        readout_ = neuron_logit_map(m) * fr.cache.mlp;
        coeff_ = basis_.rows * readout_;
    }

    int n_freq() const { return basis_.n_freq(); }
    const std::vector<Example>& data() const { return data_; }

    LogitDecomposition decompose(const std::set<int>& keys) const {
        const Eigen::VectorXd mask = key_mask(keys);
        LogitDecomposition d;
        d.raw = raw_;
        if (mask.minCoeff() > 0.0) {
            // The complete basis reconstructs the readout; skip the round trip.
            d.key_part = readout_;
            d.nonkey_part = Matrix::Zero(readout_.rows(), readout_.cols());
        } else {
            d.key_part = basis_.rows.transpose() * (mask.asDiagonal() * coeff_);
            d.nonkey_part =
                basis_.rows.transpose() * ((Eigen::VectorXd::Ones(mask.size()) - mask).asDiagonal() * coeff_);
        }
        d.residual_part = raw_ - readout_;
        return d;
    }

    double base_loss() const { return cross_entropy(raw_, data_); }

    double readout_loss() const { return cross_entropy(readout_, data_); }

    double restricted_loss(const std::set<int>& keys) const {
        if (keys.empty()) throw EmptyKeySet("restricted loss needs at least one key frequency");
        check_keys(keys);
        return cross_entropy(decompose(keys).key_part, data_);
    }

    // Raw logits with frequency k removed from the W_L path.
    double ablated_loss(int k) const {
        if (k < 1 || k > n_freq()) throw std::out_of_range("frequency " + std::to_string(k) + " out of range");
        Matrix logits = raw_;
        for (int r : {FourierBasis::cos_row(k), FourierBasis::sin_row(k)})
            logits.noalias() -= basis_.rows.row(r).transpose() * coeff_.row(r);
        return cross_entropy(logits, data_);
    }

    DecompositionLosses decomposition_losses(const std::set<int>& keys) const {
        check_keys(keys);
        const LogitDecomposition d = decompose(keys);
        DecompositionLosses out;
        out.full = cross_entropy(d.raw, data_);
        out.restricted = cross_entropy(d.key_part, data_);
        out.nonkey_only = cross_entropy(d.nonkey_part, data_);
        out.residual_only = cross_entropy(d.residual_part, data_);
        out.key_nonkey = cross_entropy(d.key_part + d.nonkey_part, data_);
        out.key_residual = cross_entropy(d.key_part + d.residual_part, data_);
        out.nonkey_residual = cross_entropy(d.nonkey_part + d.residual_part, data_);
        return out;
    }

    // Non-key frequencies whose ablation raises the loss by more than 1e-9.
    std::set<int> dependent_frequencies(const std::set<int>& keys) const {
        check_keys(keys);
        const double base = base_loss();
        std::set<int> dep;
        for (int k = 1; k <= n_freq(); ++k)
            if (!keys.count(k) && ablated_loss(k) - base > kDependentThreshold) dep.insert(k);
        return dep;
    }

private:
    FourierBasis basis_;
    std::vector<Example> data_;
    Matrix raw_;
    Matrix readout_;
    Matrix coeff_;

    void check_keys(const std::set<int>& keys) const {
        for (int k : keys)
            if (k < 1 || k > n_freq()) throw std::out_of_range("key frequency " + std::to_string(k) + " out of range");
    }

    Eigen::VectorXd key_mask(const std::set<int>& keys) const {
        Eigen::VectorXd mask = Eigen::VectorXd::Zero(basis_.p);
        mask(0) = 1.0;
        for (int k : keys) {
            mask(FourierBasis::cos_row(k)) = 1.0;
            mask(FourierBasis::sin_row(k)) = 1.0;
        }
        return mask;
    }
};

inline double restricted_loss(const ModelParams& m, const std::vector<Example>& data, const std::set<int>& keys,
                              const FourierBasis& basis) {
    if (keys.empty()) throw EmptyKeySet("restricted loss needs at least one key frequency");
    return FrequencyAnalyzer(m, data, basis).restricted_loss(keys);
}

inline double ablated_loss(const ModelParams& m, const std::vector<Example>& data, int k, const FourierBasis& basis) {
    return FrequencyAnalyzer(m, data, basis).ablated_loss(k);
}

inline DecompositionLosses decomposition_losses(const ModelParams& m, const std::vector<Example>& data,
                                                const std::set<int>& keys, const FourierBasis& basis) {
    return FrequencyAnalyzer(m, data, basis).decomposition_losses(keys);
}

inline std::set<int> dependent_frequencies(const ModelParams& m, const std::vector<Example>& data,
                                           const std::set<int>& keys, const FourierBasis& basis) {
    return FrequencyAnalyzer(m, data, basis).dependent_frequencies(keys);
}

}  // namespace grok
