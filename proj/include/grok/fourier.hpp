// Real Fourier basis over Z_p and spectral views of token-indexed weights.
#pragma once

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grok/model.hpp"

namespace grok {

class EvenModulus : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
class ShapeMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class DegenerateSpectrum : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kSpectrumEps = 1e-12;

// Rows: [1/sqrt(p), cos w1, sin w1, ..., cos wK, sin wK], w_k = 2 pi k / p,
// K = p / 2, every row unit norm.
struct FourierBasis {
    int p = 0;
    Matrix rows;  // p x p

    int n_freq() const { return p / 2; }
    static int cos_row(int k) { return 2 * k - 1; }
    static int sin_row(int k) { return 2 * k; }

    // Label of basis row r in construction order: "const", "cos k", "sin k".
    static std::string row_label(int r) {
        if (r == 0) return "const";
        return (r % 2 == 1 ? "cos " : "sin ") + std::to_string((r + 1) / 2);
    }
};

inline FourierBasis make_basis(int p) {
    if (p < 3) throw std::invalid_argument("modulus must be >= 3");
    if (p % 2 == 0) throw EvenModulus("Fourier basis needs an odd modulus, got " + std::to_string(p));
    FourierBasis b;
    b.p = p;
    b.rows = Matrix::Zero(p, p);
    b.rows.row(0).setConstant(1.0 / std::sqrt(static_cast<double>(p)));
    for (int k = 1; k <= p / 2; ++k) {
        for (int t = 0; t < p; ++t) {
            // Reduce k*t mod p first so the angle stays in [0, 2 pi).
            const double w = 2.0 * std::numbers::pi * static_cast<double>((k * t) % p) / p;
            b.rows(FourierBasis::cos_row(k), t) = std::cos(w);
            b.rows(FourierBasis::sin_row(k), t) = std::sin(w);
        }
        b.rows.row(FourierBasis::cos_row(k)).normalize();
        b.rows.row(FourierBasis::sin_row(k)).normalize();
    }
    return b;
}

enum class SpectrumSource { Embedding, NeuronLogitMap, Other };

inline std::string to_string(SpectrumSource s) {
    switch (s) {
        case SpectrumSource::Embedding: return "embedding";
        case SpectrumSource::NeuronLogitMap: return "neuron_logit_map";
        case SpectrumSource::Other: return "other";
    }
    return "other";
}

// cos_norm[k-1] = ||mu_k||, sin_norm[k-1] = ||nu_k|| for k = 1..K.
struct FourierSpectrum {
    std::vector<double> cos_norm;
    std::vector<double> sin_norm;
    SpectrumSource source = SpectrumSource::Other;

    int n_freq() const { return static_cast<int>(cos_norm.size()); }
};

// `W` has the token axis on its rows (p x m). Projects every column onto the
// basis rows over the full token range and takes L2 over the other axis.
inline FourierSpectrum spectrum(const Matrix& W, const FourierBasis& basis,
                                SpectrumSource source = SpectrumSource::Other) {
    if (W.rows() != basis.p)
        throw ShapeMismatch("token axis has length " + std::to_string(W.rows()) + ", basis expects " +
                            std::to_string(basis.p));
    const Matrix coeff = basis.rows * W;
    FourierSpectrum s;
    s.source = source;
    for (int k = 1; k <= basis.n_freq(); ++k) {
        s.cos_norm.push_back(coeff.row(FourierBasis::cos_row(k)).norm());
        s.sin_norm.push_back(coeff.row(FourierBasis::sin_row(k)).norm());
    }
    return s;
}

// Squared projection norms over all p basis rows (constant row first).
inline std::vector<double> projection_energy(const Matrix& W, const FourierBasis& basis) {
    const Matrix coeff = basis.rows * W;
    std::vector<double> e(static_cast<std::size_t>(basis.p));
    for (int r = 0; r < basis.p; ++r) e[static_cast<std::size_t>(r)] = coeff.row(r).squaredNorm();
    return e;
}

inline FourierSpectrum embedding_spectrum(const ModelParams& m, const FourierBasis& basis) {
    return spectrum(m.W_E.leftCols(m.dims.p).transpose(), basis, SpectrumSource::Embedding);
}

inline FourierSpectrum neuron_logit_spectrum(const ModelParams& m, const FourierBasis& basis) {
    return spectrum(neuron_logit_map(m), basis, SpectrumSource::NeuronLogitMap);
}

// heat(i, j) = L2 over classes of sum_{a,b} B[i,a] B[j,b] L[a,b,:], where L
// are the W_L-path logits (skip path excluded) for op token `op_token`.
struct LogitHeatmap {
    Matrix grid;  // p x p, rows index the basis along a, columns along b
};

// W_L-path logits W_L * MLP(a, b) for all p^2 inputs, columns in row-major (a, b) order.
inline Matrix readout_logits_all_pairs(const ModelParams& m, std::uint32_t op_token) {
    const auto p = static_cast<std::uint32_t>(m.dims.p);
    std::vector<Example> all;
    all.reserve(std::size_t{p} * p);
    for (std::uint32_t a = 0; a < p; ++a)
        for (std::uint32_t b = 0; b < p; ++b) all.push_back({a, op_token, b, 0});
    const ForwardResult fr = forward(m, all);
    return neuron_logit_map(m) * fr.cache.mlp;
}

inline LogitHeatmap logit_heatmap(const ModelParams& m, std::uint32_t op_token, const FourierBasis& basis) {
    const int p = basis.p;
    if (m.dims.p != p) throw ShapeMismatch("basis modulus differs from model modulus");
    const Matrix L = readout_logits_all_pairs(m, op_token);  // p classes x p^2
    Matrix sq = Matrix::Zero(p, p);
    Matrix slice(p, p);
    for (int c = 0; c < p; ++c) {
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b) slice(a, b) = L(c, a * p + b);
        const Matrix f = basis.rows * slice * basis.rows.transpose();
        sq += f.cwiseAbs2();
    }
    return {sq.cwiseSqrt()};
}

// {k : max(||mu_k||, ||nu_k||) > theta * global max}.
inline std::set<int> key_frequencies(const FourierSpectrum& s, double theta_key = 0.5) {
    if (!(theta_key > 0.0 && theta_key < 1.0)) throw std::invalid_argument("theta_key must lie in (0, 1)");
    double mx = 0.0;
    for (int k = 0; k < s.n_freq(); ++k) mx = std::max({mx, s.cos_norm[k], s.sin_norm[k]});
    if (mx < kSpectrumEps) throw DegenerateSpectrum("spectrum maximum is below 1e-12");
    std::set<int> keys;
    for (int k = 0; k < s.n_freq(); ++k)
        if (std::max(s.cos_norm[k], s.sin_norm[k]) > theta_key * mx) keys.insert(k + 1);
    return keys;
}

}  // namespace grok
