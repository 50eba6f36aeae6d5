// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"
#include "bsnerf/field.hpp"
#include "bsnerf/geometry.hpp"
#include "bsnerf/image.hpp"
#include "bsnerf/spectral.hpp"

#include <cmath>
#include <thread>
#include <vector>

namespace bsnerf {

struct QuadratureSpec {
    int samples = 64;
    bool stratified = true;
    double t_near = 0.0;
    double t_far = 1.0;

    void validate() const {
        require(samples >= 2, "QuadratureSpec: need at least 2 samples");
        require(t_near < t_far, "QuadratureSpec: t_near must precede t_far");
    }
};

// One sample per equal sub-interval; midpoints when not stratified.
inline VecX sample_ts(const QuadratureSpec& quad, Rng* rng) {
    quad.validate();
    VecX t(quad.samples);
    const double span = (quad.t_far - quad.t_near) / quad.samples;
    for (int i = 0; i < quad.samples; ++i) {
        const double u = (quad.stratified && rng) ? rng->uniform() : 0.5;
        t[i] = quad.t_near + (i + u) * span;
    }
    return t;
}

// Transmittance-weighted compositing of one ray's samples.
//   delta_i = t_{i+1} - t_i  (delta_N = t_far - t_N, finite)
//   T_i     = exp(-sum_{j<i} sigma_j delta_j)
//   w_i     = T_i (1 - exp(-sigma_i delta_i))
// Partition of unity: sum w_i + residual = 1 exactly by construction.
struct CompositeResult {
    VecX weights;
    double residual = 1.0;
};

inline CompositeResult composite(const VecX& t, double t_far, const VecX& sigma) {
    const int n = static_cast<int>(t.size());
    CompositeResult r;
    r.weights.resize(n);
    double trans = 1.0;
    for (int i = 0; i < n; ++i) {
        const double delta = (i + 1 < n ? t[i + 1] : t_far) - t[i];
        const double absorbed = 1.0 - std::exp(-sigma[i] * delta);
        r.weights[i] = trans * absorbed;
        trans *= 1.0 - absorbed;
    }
    r.residual = trans;
    return r;
}

struct RenderOutput {
    VecX spectrum;                // B
    VecX intensity;               // K (empty when no response given)
    VecX weights;                 // N
    double residual_transmittance = 1.0;
};

// ---------------------------------------------------------------------------
// Generic forward renderer over any field: field(x, dir, &sigma, &spectrum).
// Used both by the MLP path (through a lambda) and by analytic fields when
// validating the quadrature against the scene oracle.

template <typename FieldFn>
RenderOutput render_ray_field(FieldFn&& field, const Ray& ray, const VecX& t,
                              const MatX& response) {
    const int n = static_cast<int>(t.size());
    VecX sigma(n);
    MatX s;
    for (int i = 0; i < n; ++i) {
        const Vec3 x = ray.origin + t[i] * ray.direction;
        VecX spec;
        double sg = 0.0;
        field(x, ray.direction, &sg, &spec);
        if (!std::isfinite(sg) || !spec.allFinite())
            throw std::runtime_error("render_ray: non-finite field output at sample " +
                                     std::to_string(i));
        if (s.size() == 0) s.resize(spec.size(), n);
        sigma[i] = sg;
        s.col(i) = spec;
    }
    CompositeResult cr = composite(t, ray.t_far, sigma);
    RenderOutput out;
    out.spectrum.noalias() = s * cr.weights;
    out.weights = cr.weights;
    out.residual_transmittance = cr.residual;
    if (response.size() > 0) out.intensity.noalias() = response * out.spectrum;
    return out;
}

// ---------------------------------------------------------------------------
// Batched MLP path with full gradients. All samples of all rays go through
// the field in one batch; compositing and its backward run per ray.

struct RayBatchCache {
    std::vector<Ray> rays;
    MatX t;           // N x R sample positions
    FieldCache field; // P = N * R points, ray-major
    MatX weights;     // N x R
    VecX residual;    // R
    MatX spectra;     // B x R
};

inline RayBatchCache render_rays(const FieldModel& model, const std::vector<Ray>& rays,
                                 const QuadratureSpec& quad, Rng* rng) {
    const int R = static_cast<int>(rays.size());
    const int N = quad.samples;
    require(R > 0, "render_rays: empty batch");
    RayBatchCache c;
    c.rays = rays;
    c.t.resize(N, R);
    MatX x(3, (Eigen::Index)N * R), dirs(3, (Eigen::Index)N * R);
    for (int r = 0; r < R; ++r) {
        QuadratureSpec q = quad;
        q.t_near = rays[r].t_near;
        q.t_far = rays[r].t_far;
        c.t.col(r) = sample_ts(q, rng);
        for (int i = 0; i < N; ++i) {
            x.col((Eigen::Index)r * N + i) = rays[r].origin + c.t(i, r) * rays[r].direction;
            dirs.col((Eigen::Index)r * N + i) = rays[r].direction;
        }
    }
    c.field = model.forward(x, dirs);
    if (!c.field.sigma.allFinite() || !c.field.s.allFinite())
        throw std::runtime_error("render_rays: non-finite field output");

    const int B = model.arch.bins;
    c.weights.resize(N, R);
    c.residual.resize(R);
    c.spectra.resize(B, R);
    for (int r = 0; r < R; ++r) {
        CompositeResult cr = composite(c.t.col(r), rays[r].t_far, c.field.sigma.segment((Eigen::Index)r * N, N));
        c.weights.col(r) = cr.weights;
        c.residual[r] = cr.residual;
        c.spectra.col(r).noalias() = c.field.s.middleCols((Eigen::Index)r * N, N) * cr.weights;
    }
    return c;
}

// Backward from dL/dspectrum per ray. Accumulates dL/dtheta into grad_theta
// and reports per-ray gradients w.r.t. ray origin and direction.
inline void render_rays_backward(const FieldModel& model, const RayBatchCache& c,
                                 const MatX& d_spectra, VecX& grad_theta, MatX* d_origin,
                                 MatX* d_direction) {
    const int R = static_cast<int>(c.rays.size());
    const int N = static_cast<int>(c.t.rows());
    require(d_spectra.cols() == R && d_spectra.rows() == model.arch.bins,
            "render_rays_backward: upstream shape mismatch");

    const Eigen::Index P = (Eigen::Index)N * R;
    MatX d_s(model.arch.bins, P);
    VecX d_sigma(P);
    for (int r = 0; r < R; ++r) {
        const auto sigma = c.field.sigma.segment((Eigen::Index)r * N, N);
        const auto s = c.field.s.middleCols((Eigen::Index)r * N, N);
        const auto w = c.weights.col(r);
        // g_i = <dL/dspec, s_i>
        VecX g = s.transpose() * d_spectra.col(r);
        // dL/ds_i = w_i * dL/dspec
        for (int i = 0; i < N; ++i) d_s.col((Eigen::Index)r * N + i) = w[i] * d_spectra.col(r);
        // dL/dsigma_i = delta_i * (T_i e^{-sigma_i delta_i} g_i - sum_{j>i} w_j g_j)
        double suffix = 0.0;
        double trans = 1.0;  // running T_i
        std::vector<double> T(N);
        for (int i = 0; i < N; ++i) {
            T[i] = trans;
            const double delta = (i + 1 < N ? c.t(i + 1, r) : c.rays[r].t_far) - c.t(i, r);
            trans *= std::exp(-sigma[i] * delta);
        }
        for (int i = N - 1; i >= 0; --i) {
            const double delta = (i + 1 < N ? c.t(i + 1, r) : c.rays[r].t_far) - c.t(i, r);
            const double atten = std::exp(-sigma[i] * delta);
            d_sigma[(Eigen::Index)r * N + i] = delta * (T[i] * atten * g[i] - suffix);
            suffix += w[i] * g[i];
        }
    }

    MatX d_x, d_dir;
    grad_theta += model.backward(c.field, d_s, d_sigma, &d_x, &d_dir);
    if (d_origin) {
        d_origin->resize(3, R);
        d_direction->resize(3, R);
        for (int r = 0; r < R; ++r) {
            Vec3 dor = Vec3::Zero(), ddr = Vec3::Zero();
            for (int i = 0; i < N; ++i) {
                const Vec3 dx = d_x.col((Eigen::Index)r * N + i);
                dor += dx;
                ddr += c.t(i, r) * dx + Vec3(d_dir.col((Eigen::Index)r * N + i));
            }
            d_origin->col(r) = dor;
            d_direction->col(r) = ddr;
        }
    }
}

// Single-ray wrappers used by tests and point-debugging.
struct RayRenderCache {
    RayBatchCache batch;
    MatX response;  // K x B, may be empty
};

inline RenderOutput render_ray(const FieldModel& model, const Ray& ray,
                               const QuadratureSpec& quad, const MatX& response, Rng* rng,
                               RayRenderCache* cache = nullptr) {
    RayBatchCache c = render_rays(model, {ray}, quad, rng);
    RenderOutput out;
    out.spectrum = c.spectra.col(0);
    out.weights = c.weights.col(0);
    out.residual_transmittance = c.residual[0];
    if (response.size() > 0) out.intensity.noalias() = response * out.spectrum;
    if (cache) {
        cache->batch = std::move(c);
        cache->response = response;
    }
    return out;
}

struct RayBackwardResult {
    VecX d_theta;
    Vec3 d_origin;
    Vec3 d_direction;
};

inline RayBackwardResult render_ray_backward(const FieldModel& model, const RayRenderCache& cache,
                                             const VecX& d_intensity) {
    require(cache.response.size() > 0 && d_intensity.size() == cache.response.rows(),
            "render_ray_backward: upstream/response mismatch");
    MatX d_spectra = cache.response.transpose() * d_intensity;
    RayBackwardResult out;
    out.d_theta = VecX::Zero(model.params.size());
    MatX d_o, d_d;
    render_rays_backward(model, cache.batch, d_spectra, out.d_theta, &d_o, &d_d);
    out.d_origin = d_o.col(0);
    out.d_direction = d_d.col(0);
    return out;
}

// ---------------------------------------------------------------------------
// Full-frame rendering. Rows are independent; worker threads each own a
// disjoint set of rows, so the result is identical for any thread count.

inline Image render_image(const FieldModel& model, const CameraParams& cam, int view,
                          const QuadratureSpec& quad, const MatX& response,
                          std::uint64_t seed, int threads = 1) {
    cam.validate();
    require(view >= 0 && view < cam.view_count(), "render_image: view out of range");
    const int K = static_cast<int>(response.rows());
    Image img(cam.height, cam.width, K);
    auto worker = [&](int t0) {
        for (int y = t0; y < cam.height; y += std::max(1, threads)) {
            std::vector<Ray> rays(cam.width);
            for (int x = 0; x < cam.width; ++x)
                rays[x] = generate_ray(cam, view, x + 0.5, y + 0.5, quad.t_near, quad.t_far);
            Rng rng(seed + 0x9e3779b97f4a7c15ull * (std::uint64_t)(y + 1));
            Rng* rp = quad.stratified ? &rng : nullptr;
            RayBatchCache c = render_rays(model, rays, quad, rp);
            MatX in = response * c.spectra;  // K x W
            for (int x = 0; x < cam.width; ++x)
                for (int k = 0; k < K; ++k) img.at(y, x, k) = (float)in(k, x);
        }
    };
    if (threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    return img;
}

// Same, but over an arbitrary pointwise field (bypassing the MLP).
template <typename FieldFn>
Image render_image_field(FieldFn&& field, const CameraParams& cam, int view,
                         const QuadratureSpec& quad, const MatX& response, std::uint64_t seed,
                         int threads = 1) {
    cam.validate();
    const int K = static_cast<int>(response.rows());
    Image img(cam.height, cam.width, K);
    auto worker = [&](int t0) {
        for (int y = t0; y < cam.height; y += std::max(1, threads)) {
            Rng rng(seed + 0x9e3779b97f4a7c15ull * (std::uint64_t)(y + 1));
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = generate_ray(cam, view, x + 0.5, y + 0.5, quad.t_near, quad.t_far);
                QuadratureSpec q = quad;
                q.t_near = ray.t_near;
                q.t_far = ray.t_far;
                VecX t = sample_ts(q, quad.stratified ? &rng : nullptr);
                RenderOutput out = render_ray_field(field, ray, t, response);
                for (int k = 0; k < K; ++k) img.at(y, x, k) = (float)out.intensity[k];
            }
        }
    };
    if (threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    return img;
}

}  // namespace bsnerf
