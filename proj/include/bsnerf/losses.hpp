// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <cmath>
#include <vector>

namespace bsnerf {

struct ChannelStats {
    VecX mean;  // K
    VecX std;   // K, population convention
};

struct LossWeights {
    double alpha = 0.5;  // fidelity
    double beta = 0.5;   // color
};

// Keeps the std gradient defined for constant-color batches.
constexpr double kStdEps = 1e-8;

// Population mean/std per channel. pixels: K x M (one column per pixel).
inline ChannelStats channel_stats(const MatX& pixels) {
    require(pixels.cols() >= 1, "channel_stats: empty input");
    ChannelStats st;
    st.mean = pixels.rowwise().mean();
    MatX centered = pixels.colwise() - st.mean;
    st.std = (centered.array().square().rowwise().mean()).sqrt();
    return st;
}

// L_color = (1/D) sum_d [ sum_k (mu_hat_k - mu_k^d)^2 + sum_k (std_hat_k - std_k^d)^2 ]
// computed from the generated pixel batch directly so the gradient can flow
// through both moments into every pixel.
struct ColorLossResult {
    double value = 0.0;
    MatX d_pixels;  // K x M
};

inline ColorLossResult color_loss(const MatX& generated_pixels,
                                  const std::vector<ChannelStats>& measured) {
    require(!measured.empty(), "color_loss: no measured statistics");
    const int K = static_cast<int>(generated_pixels.rows());
    const int M = static_cast<int>(generated_pixels.cols());
    const int D = static_cast<int>(measured.size());
    for (const auto& st : measured)
        require(st.mean.size() == K && st.std.size() == K, "color_loss: stats dimension mismatch");

    const VecX mean = generated_pixels.rowwise().mean();
    MatX centered = generated_pixels.colwise() - mean;
    const VecX var = centered.array().square().rowwise().mean();
    const VecX stdev = (var.array() + kStdEps).sqrt();

    ColorLossResult out;
    VecX d_mean = VecX::Zero(K), d_std = VecX::Zero(K);
    for (const auto& st : measured) {
        out.value += (mean - st.mean).squaredNorm() + (stdev - st.std).squaredNorm();
        d_mean += 2.0 * (mean - st.mean);
        d_std += 2.0 * (stdev - st.std);
    }
    out.value /= D;
    d_mean /= D;
    d_std /= D;

    // d std / d v = (v - mean) / (M * std); mean term uniform over pixels.
    out.d_pixels = centered.array().colwise() * (d_std.array() / (M * stdev.array()));
    out.d_pixels.colwise() += d_mean / M;
    return out;
}

// Mean over rays of the per-ray squared channel error.
struct FidelityLossResult {
    double value = 0.0;
    MatX d_predicted;  // K x M
};

inline FidelityLossResult fidelity_loss(const MatX& predicted, const MatX& measured) {
    require(predicted.rows() == measured.rows() && predicted.cols() == measured.cols(),
            "fidelity_loss: shape mismatch");
    require(predicted.cols() >= 1, "fidelity_loss: empty batch");
    const int M = static_cast<int>(predicted.cols());
    FidelityLossResult out;
    MatX resid = predicted - measured;
    out.value = resid.squaredNorm() / M;
    out.d_predicted = 2.0 * resid / M;
    return out;
}

inline double total_loss(double fidelity, double color, const LossWeights& w) {
    return w.alpha * fidelity + w.beta * color;
}

}  // namespace bsnerf
