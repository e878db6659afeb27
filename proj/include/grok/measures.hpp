// Fourier Frequency Density and Fourier Coefficient Ratio of a spectrum.
#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "grok/fourier.hpp"

namespace grok {

struct MeasurePoint {
    double ffd = 0.0;
    double fcr = 0.0;
    double eta = 0.5;
    SpectrumSource source = SpectrumSource::Other;
};

// Share of the 2K cos/sin norms exceeding eta times their side's maximum.
// A side whose maximum is below 1e-12 contributes nothing.
inline double ffd(const FourierSpectrum& s, double eta = 0.5) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    const int K = s.n_freq();
    if (K == 0) return 0.0;
    auto count_side = [eta](const std::vector<double>& side) {
        const double mx = *std::max_element(side.begin(), side.end());
        if (mx < kSpectrumEps) return 0;
        int n = 0;
        for (double v : side)
            if (v / mx > eta) ++n;
        return n;
    };
    return static_cast<double>(count_side(s.cos_norm) + count_side(s.sin_norm)) / (2.0 * K);
}

// Mean over k of min(mu/nu, nu/mu); a frequency with either norm below
// 1e-12 contributes 0.
inline double fcr(const FourierSpectrum& s) {
    const int K = s.n_freq();
    if (K == 0) return 0.0;
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        const double c = s.cos_norm[static_cast<std::size_t>(k)];
        const double n = s.sin_norm[static_cast<std::size_t>(k)];
        if (c < kSpectrumEps || n < kSpectrumEps) continue;
        total += std::min(c, n) / std::max(c, n);
    }
    return total / K;
}

inline MeasurePoint measure(const FourierSpectrum& s, double eta = 0.5) { return {ffd(s, eta), fcr(s), eta, s.source}; }

}  // namespace grok
