// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"
#include "bsnerf/geometry.hpp"
#include "bsnerf/image.hpp"
#include "bsnerf/losses.hpp"
#include "bsnerf/spectral.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

namespace bsnerf {

// Emissive Gaussian blob: density a * exp(-|x-c|^2 / (2 r^2)) with a fixed
// per-blob emission spectrum. The scene's spectrum at a point is the
// density-weighted mixture of blob spectra.
struct Blob {
    Vec3 center = Vec3::Zero();
    double radius = 0.2;
    double density = 10.0;
    VecX spectrum;  // B values in [0,1]
};

struct SyntheticScene {
    std::vector<Blob> blobs;
    double t_near = 1.2;
    double t_far = 4.0;

    void validate() const {
        for (const auto& b : blobs) {
            require(b.radius > 0.0, "SyntheticScene: blob radius must be positive");
            require((b.spectrum.array() >= 0.0).all() && (b.spectrum.array() <= 1.0).all(),
                    "SyntheticScene: blob spectrum out of [0,1]");
        }
    }

    double density_at(const Vec3& x) const {
        double sigma = 0.0;
        for (const auto& b : blobs) {
            const double q = (x - b.center).squaredNorm() / (2.0 * b.radius * b.radius);
            sigma += b.density * std::exp(-q);
        }
        return sigma;
    }

    // (sigma, spectrum) of the blob mixture in closed form.
    void evaluate(const Vec3& x, double* sigma, VecX* spectrum) const {
        double total = 0.0;
        VecX s = VecX::Zero(blobs.empty() ? 0 : blobs[0].spectrum.size());
        for (const auto& b : blobs) {
            const double q = (x - b.center).squaredNorm() / (2.0 * b.radius * b.radius);
            const double w = b.density * std::exp(-q);
            total += w;
            s += w * b.spectrum;
        }
        *sigma = total;
        if (total > 1e-12) s /= total;
        *spectrum = s;
    }
};

// Three blobs with distinct smooth spectra inside the unit cube; strong
// spectral disambiguation pressure across the nine filters.
inline SyntheticScene default_scene(const WavelengthGrid& grid = {}) {
    SyntheticScene scene;
    const struct { Vec3 c; double r, a, peak, width; } specs[4] = {
        {{-0.04, 0.05, 0.02}, 0.22, 14.0, 472.0, 36.0},
        {{0.25, 0.22, -0.15}, 0.19, 16.0, 585.0, 30.0},
        {{0.05, -0.25, 0.18}, 0.25, 12.0, 645.0, 32.0},
        {{-0.45, -0.35, -0.12}, 0.18, 12.0, 560.0, 26.0},
    };
    for (const auto& sp : specs) {
        Blob b;
        b.center = sp.c;
        b.radius = sp.r;
        b.density = sp.a;
        b.spectrum.resize(grid.bins);
        for (int i = 0; i < grid.bins; ++i)
            b.spectrum[i] = 0.02 + 0.9 * gaussian_bump(grid.center(i), sp.peak, sp.width);
        scene.blobs.push_back(std::move(b));
    }
    return scene;
}

// 3x3 camera grid with a small baseline, all looking down -z at the scene.
inline CameraParams default_cameras(int width = 64, int height = 48) {
    CameraParams cam;
    cam.width = width;
    cam.height = height;
    cam.focal = 1.4 * width;
    for (int gy = -1; gy <= 1; ++gy)
        for (int gx = -1; gx <= 1; ++gx) {
            Pose p;
            p.translation = Vec3(0.12 * gx, 0.12 * gy, 2.5);
            cam.poses.push_back(p);
        }
    return cam;
}

// ---------------------------------------------------------------------------
// Ground-truth oracle: brute-force fine-step emission-absorption integration
// of the analytic blob mixture, independent of the renderer's quadrature.

inline Image oracle_render(const SyntheticScene& scene, const CameraParams& cam, int view,
                           const MatX& response, double step, int threads = 1) {
    cam.validate();
    scene.validate();
    require(view >= 0 && view < cam.view_count(), "oracle_render: view out of range");
    require(step > 0.0 && step <= 1e-2 * (scene.t_far - scene.t_near),
            "oracle_render: step too coarse for oracle duty");
    const int K = static_cast<int>(response.rows());
    const int steps = static_cast<int>(std::ceil((scene.t_far - scene.t_near) / step));
    Image img(cam.height, cam.width, K);
    auto worker = [&](int t0) {
        for (int y = t0; y < cam.height; y += std::max(1, threads)) {
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = generate_ray(cam, view, x + 0.5, y + 0.5, scene.t_near, scene.t_far);
                double trans = 1.0;
                VecX spec;
                VecX acc = VecX::Zero(response.cols());
                for (int i = 0; i < steps; ++i) {
                    const double t = scene.t_near + (i + 0.5) * step;
                    double sigma = 0.0;
                    scene.evaluate(ray.origin + t * ray.direction, &sigma, &spec);
                    if (sigma <= 0.0) continue;
                    const double absorbed = 1.0 - std::exp(-sigma * step);
                    acc += trans * absorbed * spec;
                    trans *= 1.0 - absorbed;
                    if (trans < 1e-9) break;
                }
                const VecX intensity = response * acc;
                for (int k = 0; k < K; ++k) img.at(y, x, k) = (float)intensity[k];
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

// ---------------------------------------------------------------------------
// Dataset: D filtered subviews + per-view channel statistics + metadata.

struct Dataset {
    std::vector<Image> views;            // D images, H x W x K
    std::vector<ChannelStats> stats;     // per view
    CameraParams cameras;                // ground truth when synthetic
    bool has_gt_poses = false;
    WavelengthGrid grid;
    std::vector<SpectralCurve> filters;  // D
    std::vector<SpectralCurve> sensor;   // K
    double t_near = 1.2, t_far = 4.0;
    double noise_std = 0.0;
    SyntheticScene scene;                // present when synthetic
    bool has_scene = false;

    int view_count() const { return static_cast<int>(views.size()); }
    ResponseMatrix response() const { return build_response(filters, sensor); }
};

inline ChannelStats image_stats(const Image& img) {
    MatX pix(img.channels, (Eigen::Index)img.height * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                pix(c, (Eigen::Index)y * img.width + x) = img.at(y, x, c);
    return channel_stats(pix);
}

inline Dataset make_dataset(const SyntheticScene& scene, const CameraParams& cam,
                            const std::vector<SpectralCurve>& filters,
                            const std::vector<SpectralCurve>& sensor, double noise_std,
                            std::uint64_t seed, double oracle_step = 2.8e-3, int threads = 1) {
    require(static_cast<int>(filters.size()) == cam.view_count(),
            "make_dataset: one filter per view required");
    Dataset ds;
    ds.cameras = cam;
    ds.has_gt_poses = true;
    ds.grid = filters[0].grid;
    ds.filters = filters;
    ds.sensor = sensor;
    ds.t_near = scene.t_near;
    ds.t_far = scene.t_far;
    ds.noise_std = noise_std;
    ds.scene = scene;
    ds.has_scene = true;
    ResponseMatrix m = build_response(filters, sensor);
    const MatX unf = sensor_response(sensor);
    Rng rng(seed);
    for (int d = 0; d < cam.view_count(); ++d) {
        Image img = oracle_render(scene, cam, d, m.view(d), oracle_step, threads);
        if (noise_std > 0.0)
            for (float& v : img.data) v = std::max(0.0, v + noise_std * rng.normal());
        // Filter-corrected statistics: each subview's channel moments are
        // rescaled by the filter's effective per-channel attenuation, so the
        // stored statistics estimate the *unfiltered* color distribution that
        // the color loss aligns generated renders against.
        ChannelStats st = image_stats(img);
        for (int k = 0; k < st.mean.size(); ++k) {
            const double denom = m.view(d).row(k).sum();
            require(denom > 0.0, "make_dataset: filter blocks an entire sensor channel");
            const double c = unf.row(k).sum() / denom;
            st.mean[k] *= c;
            st.std[k] *= c;
        }
        ds.stats.push_back(st);
        ds.views.push_back(std::move(img));
    }
    return ds;
}

// ---- on-disk layout: meta.json, filters.csv, sensor.csv, view_XX.imgf32 ----

namespace detail {
inline nlohmann::json vec_to_json(const VecX& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}
inline VecX json_to_vec(const nlohmann::json& a) {
    VecX v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
}
}  // namespace detail

inline void save_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("save_dataset: cannot create " + dir);

    save_curves(dir + "/filters.csv", ds.filters);
    save_curves(dir + "/sensor.csv", ds.sensor);

    nlohmann::json meta;
    meta["views"] = ds.view_count();
    meta["channels"] = ds.sensor.size();
    meta["bins"] = ds.grid.bins;
    meta["lambda_min"] = ds.grid.lambda_min;
    meta["lambda_max"] = ds.grid.lambda_max;
    meta["width"] = ds.cameras.width;
    meta["height"] = ds.cameras.height;
    meta["focal"] = ds.cameras.focal;
    meta["t_near"] = ds.t_near;
    meta["t_far"] = ds.t_far;
    meta["noise_std"] = ds.noise_std;
    meta["filter_file"] = "filters.csv";
    meta["sensor_file"] = "sensor.csv";
    for (int d = 0; d < ds.view_count(); ++d) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%02d.imgf32", d);
        meta["view_files"].push_back(name);
        save_imgf32(dir + "/" + name, ds.views[d]);
        meta["stats"].push_back({{"mean", detail::vec_to_json(ds.stats[d].mean)},
                                 {"std", detail::vec_to_json(ds.stats[d].std)}});
    }
    if (ds.has_gt_poses) {
        for (const auto& p : ds.cameras.poses)
            meta["gt_poses"].push_back({{"phi", detail::vec_to_json(p.rotation.phi)},
                                        {"t", detail::vec_to_json(p.translation)}});
    }
    if (ds.has_scene) {
        nlohmann::json blobs = nlohmann::json::array();
        for (const auto& b : ds.scene.blobs)
            blobs.push_back({{"center", detail::vec_to_json(b.center)},
                             {"radius", b.radius},
                             {"density", b.density},
                             {"spectrum", detail::vec_to_json(b.spectrum)}});
        meta["scene"] = {{"blobs", blobs}};
    }
    std::ofstream out(dir + "/meta.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write " + dir + "/meta.json");
    out << meta.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/meta.json");
    if (!in) throw std::runtime_error("load_dataset: cannot open " + dir + "/meta.json");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_dataset: bad meta.json in " + dir + ": " + e.what());
    }
    Dataset ds;
    ds.grid.bins = meta["bins"];
    ds.grid.lambda_min = meta["lambda_min"];
    ds.grid.lambda_max = meta["lambda_max"];
    ds.filters = load_curves(dir + "/" + meta["filter_file"].get<std::string>(), true);
    ds.sensor = load_curves(dir + "/" + meta["sensor_file"].get<std::string>(), false);
    ds.t_near = meta["t_near"];
    ds.t_far = meta["t_far"];
    ds.noise_std = meta.value("noise_std", 0.0);
    ds.cameras.width = meta["width"];
    ds.cameras.height = meta["height"];
    ds.cameras.focal = meta["focal"];

    const int D = meta["views"];
    const int K = meta["channels"];
    for (int d = 0; d < D; ++d) {
        Image img = load_imgf32(dir + "/" + meta["view_files"][d].get<std::string>());
        if (img.height != ds.cameras.height || img.width != ds.cameras.width ||
            img.channels != K)
            throw std::runtime_error("load_dataset: view " + std::to_string(d) +
                                     " dimensions disagree with meta");
        ChannelStats st;
        st.mean = detail::json_to_vec(meta["stats"][d]["mean"]);
        st.std = detail::json_to_vec(meta["stats"][d]["std"]);
        ds.stats.push_back(std::move(st));
        ds.views.push_back(std::move(img));
    }
    if (meta.contains("gt_poses")) {
        ds.has_gt_poses = true;
        for (const auto& jp : meta["gt_poses"]) {
            Pose p;
            p.rotation.phi = detail::json_to_vec(jp["phi"]);
            p.translation = detail::json_to_vec(jp["t"]);
            ds.cameras.poses.push_back(p);
        }
    } else {
        // No ground truth; start all views at identity (ring prior handled by trainer).
        ds.cameras.poses.resize(D);
    }
    if (meta.contains("scene")) {
        ds.has_scene = true;
        ds.scene.t_near = ds.t_near;
        ds.scene.t_far = ds.t_far;
        for (const auto& jb : meta["scene"]["blobs"]) {
            Blob b;
            b.center = detail::json_to_vec(jb["center"]);
            b.radius = jb["radius"];
            b.density = jb["density"];
            b.spectrum = detail::json_to_vec(jb["spectrum"]);
            ds.scene.blobs.push_back(std::move(b));
        }
    }
    return ds;
}

}  // namespace bsnerf
