// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace bsnerf {

// Coordinate MLP F: (x, dir) -> (spectrum s in [0,1]^B, density sigma >= 0).
// The density head sees only the encoded position, so opacity is
// view-independent by construction. The spectral head gets the trunk feature
// concatenated with the encoded direction.
struct FieldArch {
    int trunk_depth = 4;
    int width = 64;
    int skip = 2;          // trunk layer whose input re-injects the encoded position
    int enc_x_freqs = 6;   // L_x
    int enc_d_freqs = 4;   // L_d
    int spec_hidden = 32;
    int bins = 24;         // B

    int enc_x_dim() const { return 3 + 6 * enc_x_freqs; }
    int enc_d_dim() const { return 3 + 6 * enc_d_freqs; }

    int trunk_in(int layer) const {
        if (layer == 0) return enc_x_dim();
        if (layer == skip) return width + enc_x_dim();
        return width;
    }

    bool operator==(const FieldArch& o) const {
        return trunk_depth == o.trunk_depth && width == o.width && skip == o.skip &&
               enc_x_freqs == o.enc_x_freqs && enc_d_freqs == o.enc_d_freqs &&
               spec_hidden == o.spec_hidden && bins == o.bins;
    }
};

// Positional encoding: [v, sin(2^j pi v), cos(2^j pi v)] for j = 0..L-1.
inline MatX positional_encode(const MatX& v, int freqs) {
    const int p = static_cast<int>(v.cols());
    MatX out(3 + 6 * freqs, p);
    out.topRows(3) = v;
    double scale = M_PI;
    for (int j = 0; j < freqs; ++j) {
        out.middleRows(3 + 6 * j, 3) = (v * scale).array().sin();
        out.middleRows(3 + 6 * j + 3, 3) = (v * scale).array().cos();
        scale *= 2.0;
    }
    return out;
}

inline VecX positional_encode(const Vec3& v, int freqs) {
    MatX m(3, 1);
    m.col(0) = v;
    return positional_encode(m, freqs).col(0);
}

// dL/dv given dL/d(encoding).
inline MatX positional_encode_backward(const MatX& v, int freqs, const MatX& upstream) {
    MatX dv = upstream.topRows(3);
    double scale = M_PI;
    for (int j = 0; j < freqs; ++j) {
        dv.array() += scale * (v * scale).array().cos() *
                      upstream.middleRows(3 + 6 * j, 3).array();
        dv.array() -= scale * (v * scale).array().sin() *
                      upstream.middleRows(3 + 6 * j + 3, 3).array();
        scale *= 2.0;
    }
    return dv;
}

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct FieldOutput {
    VecX spectrum;  // B, in [0,1]
    double sigma = 0.0;
};

// Activations cached by a forward pass, consumed by the matching backward.
struct FieldCache {
    MatX x, dirs;          // 3 x P raw inputs
    MatX enc_x, enc_d;
    std::vector<MatX> trunk_pre;   // pre-activation per trunk layer
    std::vector<MatX> trunk_act;
    Eigen::RowVectorXd sigma_pre;
    MatX spec0_pre, spec0_act;
    MatX spec_pre;         // B x P
    VecX sigma;            // P
    MatX s;                // B x P
};

class FieldModel {
  public:
    FieldArch arch;
    VecX params;

    FieldModel() = default;
    explicit FieldModel(const FieldArch& a) : arch(a), params(VecX::Zero(param_count(a))) {
        build_offsets();
    }

    static int param_count(const FieldArch& a) {
        int n = 0;
        for (int l = 0; l < a.trunk_depth; ++l) n += a.width * a.trunk_in(l) + a.width;
        n += a.width + 1;                                        // sigma head
        n += a.spec_hidden * (a.width + a.enc_d_dim()) + a.spec_hidden;
        n += a.bins * a.spec_hidden + a.bins;
        return n;
    }

    // He-style fan-in uniform init, deterministic under the seed.
    void init(Rng& rng) {
        build_offsets();
        params.setZero();
        for (std::size_t i = 0; i < shapes_.size(); ++i) {
            auto W = weight(params, static_cast<int>(i));
            const double limit = std::sqrt(6.0 / W.cols());
            for (int c = 0; c < W.cols(); ++c)
                for (int r = 0; r < W.rows(); ++r) W(r, c) = rng.uniform(-limit, limit);
        }
    }

    // Batched forward over P points. x: 3 x P, dirs: 3 x P (unit columns).
    FieldCache forward(const MatX& x, const MatX& dirs) const {
        require(params.allFinite(), "field_forward: non-finite parameters");
        require(x.cols() == dirs.cols(), "field_forward: x/dir batch mismatch");
        FieldCache c;
        c.x = x;
        c.dirs = dirs;
        c.enc_x = positional_encode(x, arch.enc_x_freqs);
        c.enc_d = positional_encode(dirs, arch.enc_d_freqs);

        const int P = static_cast<int>(x.cols());
        MatX h = c.enc_x;
        c.trunk_pre.resize(arch.trunk_depth);
        c.trunk_act.resize(arch.trunk_depth);
        for (int l = 0; l < arch.trunk_depth; ++l) {
            MatX in;
            if (l == arch.skip && l != 0) {
                in.resize(arch.width + arch.enc_x_dim(), P);
                in.topRows(arch.width) = h;
                in.bottomRows(arch.enc_x_dim()) = c.enc_x;
            } else {
                in = h;
            }
            c.trunk_pre[l].noalias() = cweight(l) * in;
            c.trunk_pre[l].colwise() += cbias(l);
            c.trunk_act[l] = c.trunk_pre[l].cwiseMax(0.0);
            h = c.trunk_act[l];
        }

        const int si = sigma_idx();
        c.sigma_pre = (cweight(si) * h).row(0);
        c.sigma_pre.array() += cbias(si)[0];
        c.sigma = c.sigma_pre.transpose().unaryExpr([](double z) { return softplus(z); });

        const int s0 = spec0_idx();
        MatX spec_in(arch.width + arch.enc_d_dim(), P);
        spec_in.topRows(arch.width) = h;
        spec_in.bottomRows(arch.enc_d_dim()) = c.enc_d;
        c.spec0_pre.noalias() = cweight(s0) * spec_in;
        c.spec0_pre.colwise() += cbias(s0);
        c.spec0_act = c.spec0_pre.cwiseMax(0.0);

        const int s1 = spec1_idx();
        c.spec_pre.noalias() = cweight(s1) * c.spec0_act;
        c.spec_pre.colwise() += cbias(s1);
        c.s = c.spec_pre.unaryExpr([](double z) { return sigmoid(z); });
        return c;
    }

    FieldOutput forward_one(const Vec3& x, const Vec3& dir) const {
        MatX xm(3, 1), dm(3, 1);
        xm.col(0) = x;
        dm.col(0) = dir;
        FieldCache c = forward(xm, dm);
        return {c.s.col(0), c.sigma[0]};
    }

    // Exact reverse mode. Returns dL/dtheta; fills dL/dx and dL/ddir (3 x P).
    VecX backward(const FieldCache& c, const MatX& d_s, const VecX& d_sigma,
                  MatX* d_x = nullptr, MatX* d_dir = nullptr) const {
        const int P = static_cast<int>(c.x.cols());
        require(d_s.rows() == arch.bins && d_s.cols() == P,
                "field_backward: d_s shape mismatch");
        require(d_sigma.size() == P, "field_backward: d_sigma length mismatch");

        VecX grad = VecX::Zero(params.size());

        // spectral head
        MatX dz1 = d_s.array() * c.s.array() * (1.0 - c.s.array());
        accum(grad, spec1_idx(), dz1, c.spec0_act);
        MatX dspec0 = cweight(spec1_idx()).transpose() * dz1;
        dspec0 = (c.spec0_pre.array() > 0.0).select(dspec0, 0.0);
        MatX spec_in(arch.width + arch.enc_d_dim(), P);
        spec_in.topRows(arch.width) = c.trunk_act.back();
        spec_in.bottomRows(arch.enc_d_dim()) = c.enc_d;
        accum(grad, spec0_idx(), dspec0, spec_in);
        MatX dspec_in = cweight(spec0_idx()).transpose() * dspec0;
        MatX dh = dspec_in.topRows(arch.width);
        MatX denc_d = dspec_in.bottomRows(arch.enc_d_dim());

        // density head: softplus'(z) = sigmoid(z)
        MatX dz_sigma(1, P);
        dz_sigma.row(0) = (d_sigma.transpose().array() *
                           c.sigma_pre.array().unaryExpr([](double z) { return sigmoid(z); }));
        accum(grad, sigma_idx(), dz_sigma, c.trunk_act.back());
        dh.noalias() += cweight(sigma_idx()).transpose() * dz_sigma;

        // trunk
        MatX denc_x = MatX::Zero(arch.enc_x_dim(), P);
        for (int l = arch.trunk_depth - 1; l >= 0; --l) {
            MatX dz = (c.trunk_pre[l].array() > 0.0).select(dh, 0.0);
            MatX in;
            if (l == arch.skip && l != 0) {
                in.resize(arch.width + arch.enc_x_dim(), P);
                in.topRows(arch.width) = c.trunk_act[l - 1];
                in.bottomRows(arch.enc_x_dim()) = c.enc_x;
            } else if (l == 0) {
                in = c.enc_x;
            } else {
                in = c.trunk_act[l - 1];
            }
            accum(grad, l, dz, in);
            MatX din = cweight(l).transpose() * dz;
            if (l == arch.skip && l != 0) {
                dh = din.topRows(arch.width);
                denc_x += din.bottomRows(arch.enc_x_dim());
            } else if (l == 0) {
                denc_x += din;
            } else {
                dh = din;
            }
        }

        if (d_x) *d_x = positional_encode_backward(c.x, arch.enc_x_freqs, denc_x);
        if (d_dir) *d_dir = positional_encode_backward(c.dirs, arch.enc_d_freqs, denc_d);
        return grad;
    }

    // Parameter views. Weights are column-major (out x in), bias follows.
    Eigen::Map<MatX> weight(VecX& p, int layer) const {
        return {p.data() + offsets_[layer], shapes_[layer].first, shapes_[layer].second};
    }
    Eigen::Map<const MatX> cweight(int layer) const {
        return {params.data() + offsets_[layer], shapes_[layer].first, shapes_[layer].second};
    }
    Eigen::Map<const VecX> cbias(int layer) const {
        return {params.data() + offsets_[layer] + shapes_[layer].first * shapes_[layer].second,
                shapes_[layer].first};
    }

    int sigma_idx() const { return arch.trunk_depth; }
    int spec0_idx() const { return arch.trunk_depth + 1; }
    int spec1_idx() const { return arch.trunk_depth + 2; }

  private:
    std::vector<int> offsets_;
    std::vector<std::pair<int, int>> shapes_;  // (out, in) per layer

    void build_offsets() {
        shapes_.clear();
        offsets_.clear();
        for (int l = 0; l < arch.trunk_depth; ++l)
            shapes_.push_back({arch.width, arch.trunk_in(l)});
        shapes_.push_back({1, arch.width});
        shapes_.push_back({arch.spec_hidden, arch.width + arch.enc_d_dim()});
        shapes_.push_back({arch.bins, arch.spec_hidden});
        int off = 0;
        for (auto& sh : shapes_) {
            offsets_.push_back(off);
            off += sh.first * sh.second + sh.first;
        }
    }

    void accum(VecX& grad, int layer, const MatX& dz, const MatX& in) const {
        Eigen::Map<MatX> dW(grad.data() + offsets_[layer], shapes_[layer].first,
                            shapes_[layer].second);
        dW.noalias() += dz * in.transpose();
        Eigen::Map<VecX> db(grad.data() + offsets_[layer] +
                                shapes_[layer].first * shapes_[layer].second,
                            shapes_[layer].first);
        db += dz.rowwise().sum();
    }
};

// -------------------------------------------------------------------------
// Checkpoint format: magic "BSNFCKPT", u32 version, seven u32 architecture
// fields (trunk_depth, width, skip, enc_x_freqs, enc_d_freqs, spec_hidden,
// bins), u64 parameter count, then little-endian f64 parameters in layer
// order (weights column-major, then bias, per layer).

inline constexpr char kFieldMagic[8] = {'B', 'S', 'N', 'F', 'C', 'K', 'P', 'T'};

inline void save_field(std::ostream& out, const FieldModel& m) {
    out.write(kFieldMagic, 8);
    const std::uint32_t version = 1;
    const std::uint32_t a[7] = {
        (std::uint32_t)m.arch.trunk_depth, (std::uint32_t)m.arch.width,
        (std::uint32_t)m.arch.skip,        (std::uint32_t)m.arch.enc_x_freqs,
        (std::uint32_t)m.arch.enc_d_freqs, (std::uint32_t)m.arch.spec_hidden,
        (std::uint32_t)m.arch.bins};
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(a), sizeof(a));
    const std::uint64_t n = m.params.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(m.params.data()), n * 8);
}

inline FieldModel load_field(std::istream& in, const std::string& what) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kFieldMagic, 8) != 0)
        throw std::runtime_error("load_field: bad magic in " + what);
    std::uint32_t version = 0, a[7];
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(a), sizeof(a));
    if (version != 1) throw std::runtime_error("load_field: unsupported version in " + what);
    FieldArch arch;
    arch.trunk_depth = a[0];
    arch.width = a[1];
    arch.skip = a[2];
    arch.enc_x_freqs = a[3];
    arch.enc_d_freqs = a[4];
    arch.spec_hidden = a[5];
    arch.bins = a[6];
    FieldModel m(arch);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (n != static_cast<std::uint64_t>(m.params.size()))
        throw std::runtime_error("load_field: parameter count mismatch in " + what);
    in.read(reinterpret_cast<char*>(m.params.data()), n * 8);
    if (!in) throw std::runtime_error("load_field: truncated file " + what);
    return m;
}

}  // namespace bsnerf
