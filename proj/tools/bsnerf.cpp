// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
//
// Subcommands: synth, train, render, eval.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "bsnerf/bsnerf.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace bsnerf;

namespace {

struct CommonFlags {
    std::uint64_t seed = 7;
    int threads = 1;
    bool deterministic = false;

    int effective_threads() const { return deterministic ? 1 : std::max(1, threads); }
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--seed", f.seed, "RNG seed");
    app->add_option("--threads", f.threads, "worker thread cap");
    app->add_flag("--deterministic", f.deterministic, "fixed-order reductions, single worker");
}

int run_synth(const std::string& out, const CommonFlags& common, double noise, int width,
              int height, const std::string& preset, double oracle_step) {
    WavelengthGrid grid;
    if (preset == "fullres") {
        width = 245;
        height = 154;
        logmsg(LogLevel::Info, "fullres preset: 9 subviews at 245x154 (slow path)");
    } else if (!preset.empty()) {
        throw CLI::ValidationError("--preset", "unknown preset '" + preset + "'");
    }
    SyntheticScene scene = default_scene(grid);
    CameraParams cam = default_cameras(width, height);
    auto filters = default_filter_curves(grid);
    auto sensor = default_sensor_curves(grid);
    Dataset ds = make_dataset(scene, cam, filters, sensor, noise, common.seed, oracle_step,
                              common.effective_threads());
    save_dataset(out, ds);
    std::printf("wrote %d views (%dx%d, K=%zu, B=%d) to %s\n", ds.view_count(), width, height,
                sensor.size(), grid.bins, out.c_str());
    return 0;
}

int run_train(const std::string& dataset_dir, const std::string& out, TrainConfig cfg,
              bool freeze_poses, bool no_color_loss) {
    Dataset ds = load_dataset(dataset_dir);
    cfg.optimize_poses = !freeze_poses;
    cfg.optimize_focal = !freeze_poses;
    if (no_color_loss) cfg.weights.beta = 0.0;
    cfg.out_dir = out.empty() ? dataset_dir + "/run" : out;
    TrainResult res = train(ds, cfg);
    std::printf("trained %d epochs, final loss %.6g\n", cfg.epochs, res.final_loss);
    std::printf("checkpoint: %s/checkpoint.bin\nmetrics:    %s/metrics.csv\n",
                cfg.out_dir.c_str(), cfg.out_dir.c_str());
    return 0;
}

int run_render(const std::string& checkpoint, const std::string& dataset_dir,
               const std::string& out, const CommonFlags& common, int view, int filter,
               int samples) {
    Dataset ds = load_dataset(dataset_dir);
    auto [model, cam] = load_checkpoint(checkpoint);
    if (cam.width != ds.cameras.width || cam.height != ds.cameras.height)
        throw std::runtime_error("render: checkpoint image size disagrees with dataset meta");
    ResponseMatrix resp = ds.response();
    const MatX unfiltered = sensor_response(ds.sensor);
    const int D = ds.view_count();

    QuadratureSpec quad;
    quad.samples = samples;
    quad.stratified = false;
    quad.t_near = ds.t_near;
    quad.t_far = ds.t_far;

    std::filesystem::create_directories(out);
    auto emit = [&](const Image& img, const std::string& stem) {
        save_imgf32(out + "/" + stem + ".imgf32", img);
        save_png(out + "/" + stem + ".png", img);
    };

    if (view >= D || filter >= D)
        throw std::runtime_error("render: --view/--filter index out of range");
    // --view / --filter each restrict one axis of the view x filter grid;
    // with neither given the full grid plus per-view RGB images is written.
    char stem[64];
    int written = 0;
    for (int d = 0; d < D; ++d) {
        if (view >= 0 && d != view) continue;
        for (int j = 0; j < D; ++j) {
            if (filter >= 0 && j != filter) continue;
            Image img = render_image(model, cam, d, quad, resp.view(j), common.seed,
                                     common.effective_threads());
            std::snprintf(stem, sizeof(stem), "view%02d_filter%02d", d, j);
            emit(img, stem);
            ++written;
        }
        if (filter < 0) {
            Image rgb = render_image(model, cam, d, quad, unfiltered, common.seed,
                                     common.effective_threads());
            std::snprintf(stem, sizeof(stem), "view%02d_rgb", d);
            emit(rgb, stem);
            ++written;
        }
    }
    std::printf("wrote %d images to %s\n", written, out.c_str());
    return 0;
}

struct EvalRow {
    double psnr_mean = 0.0;
    double color_dist_mean = 0.0;
    PoseErrors pose;
    bool has_pose = false;
};

EvalRow eval_checkpoint(const std::string& checkpoint, const Dataset& ds,
                        const CommonFlags& common, int samples, std::ostream& csv,
                        const std::string& label) {
    auto [model, cam] = load_checkpoint(checkpoint);
    ResponseMatrix resp = ds.response();
    const MatX unfiltered = sensor_response(ds.sensor);
    const int D = ds.view_count();

    QuadratureSpec quad;
    quad.samples = samples;
    quad.stratified = false;
    quad.t_near = ds.t_near;
    quad.t_far = ds.t_far;

    double peak = 1e-12;
    for (const auto& img : ds.views)
        for (float v : img.data) peak = std::max(peak, (double)v);

    EvalRow row;
    for (int d = 0; d < D; ++d) {
        Image pred = render_image(model, cam, d, quad, resp.view(d), common.seed,
                                  common.effective_threads());
        const double p = psnr(pred, ds.views[d], peak);

        Image rgb = render_image(model, cam, d, quad, unfiltered, common.seed,
                                 common.effective_threads());
        MatX pix(rgb.channels, (Eigen::Index)rgb.height * rgb.width);
        for (int y = 0; y < rgb.height; ++y)
            for (int x = 0; x < rgb.width; ++x)
                for (int k = 0; k < rgb.channels; ++k)
                    pix(k, (Eigen::Index)y * rgb.width + x) = rgb.at(y, x, k);
        const double cdist = color_loss(pix, ds.stats).value;

        row.psnr_mean += p / D;
        row.color_dist_mean += cdist / D;
        csv << label << "," << d << "," << p << "," << cdist << "\n";
        std::printf("%s view %d: psnr %.3f dB, color-distance %.6g\n", label.c_str(), d, p,
                    cdist);
    }
    if (ds.has_gt_poses) {
        row.has_pose = true;
        row.pose = pose_errors(cam, ds.cameras);
        std::printf("%s pose error: rot %.4f deg, trans %.6g\n", label.c_str(),
                    row.pose.mean_rot_deg, row.pose.mean_trans);
    } else {
        std::printf("%s pose error: no ground truth in dataset\n", label.c_str());
    }
    return row;
}

int run_eval(const std::string& checkpoint, const std::string& dataset_dir,
             const std::string& compare, const std::string& out, const CommonFlags& common,
             int samples) {
    Dataset ds = load_dataset(dataset_dir);
    std::ofstream csv;
    std::ostream* os = &std::cout;
    if (!out.empty()) {
        csv.open(out);
        if (!csv) throw std::runtime_error("eval: cannot write " + out);
        os = &csv;
    }
    *os << "checkpoint,view,psnr_db,color_distance\n";
    EvalRow a = eval_checkpoint(checkpoint, ds, common, samples, *os, "primary");
    std::printf("primary mean: psnr %.3f dB, color-distance %.6g\n", a.psnr_mean,
                a.color_dist_mean);
    if (!compare.empty()) {
        EvalRow b = eval_checkpoint(compare, ds, common, samples, *os, "compare");
        std::printf("compare mean: psnr %.3f dB, color-distance %.6g\n", b.psnr_mean,
                    b.color_dist_mean);
        std::printf("color-distance delta (primary - compare): %.6g\n",
                    a.color_dist_mean - b.color_dist_mean);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bsnerf: spectral radiance field training on multispectral subview stacks"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic subview dataset");
    CommonFlags synth_common;
    std::string synth_out, synth_preset;
    double synth_noise = 0.0, synth_step = 2.8e-3;
    int synth_w = 64, synth_h = 48;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--noise", synth_noise, "additive Gaussian noise std");
    synth->add_option("--width", synth_w, "image width");
    synth->add_option("--height", synth_h, "image height");
    synth->add_option("--preset", synth_preset, "'fullres' for 9 views at 245x154");
    synth->add_option("--oracle-step", synth_step, "oracle integration step");
    add_common(synth, synth_common);

    // train
    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    CommonFlags train_common;
    std::string train_ds, train_out;
    TrainConfig cfg;
    bool freeze_poses = false, no_color = false;
    tr->add_option("dataset", train_ds, "dataset directory")->required();
    tr->add_option("--out", train_out, "output directory (default <dataset>/run)");
    tr->add_option("--epochs", cfg.epochs, "training epochs");
    tr->add_option("--rays", cfg.rays_per_batch, "rays per batch");
    tr->add_option("--samples", cfg.train_samples, "quadrature samples per ray");
    tr->add_option("--alpha", cfg.weights.alpha, "fidelity loss weight");
    tr->add_option("--beta", cfg.weights.beta, "color loss weight");
    tr->add_flag("--no-color-loss", no_color, "set beta = 0");
    tr->add_flag("--freeze-poses", freeze_poses, "disable pose/focal optimization");
    tr->add_option("--perturb-rot", cfg.perturb_rot_deg, "initial pose rotation jitter (deg)");
    tr->add_option("--perturb-trans", cfg.perturb_trans_frac,
                   "initial translation jitter (fraction of scene extent)");
    tr->add_option("--checkpoint-every", cfg.checkpoint_every, "periodic checkpoint interval");
    add_common(tr, train_common);

    // render
    auto* rd = app.add_subcommand("render", "render images from a checkpoint");
    CommonFlags render_common;
    std::string rd_ckpt, rd_ds, rd_out = "renders";
    int rd_view = -1, rd_filter = -1, rd_samples = 256;
    rd->add_option("checkpoint", rd_ckpt, "checkpoint file")->required();
    rd->add_option("dataset", rd_ds, "dataset directory (curves + meta)")->required();
    rd->add_option("--out", rd_out, "output directory");
    rd->add_option("--view", rd_view, "render a single view");
    rd->add_option("--filter", rd_filter, "render a single filter response");
    rd->add_option("--samples", rd_samples, "quadrature samples per ray");
    add_common(rd, render_common);

    // eval
    auto* ev = app.add_subcommand("eval", "metrics table for one or two checkpoints");
    CommonFlags eval_common;
    std::string ev_ckpt, ev_ds, ev_compare, ev_out;
    int ev_samples = 256;
    ev->add_option("checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("dataset", ev_ds, "dataset directory")->required();
    ev->add_option("--compare", ev_compare, "second checkpoint (ablation pair)");
    ev->add_option("--out", ev_out, "CSV output path (default stdout)");
    ev->add_option("--samples", ev_samples, "quadrature samples per ray");
    add_common(ev, eval_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return run_synth(synth_out, synth_common, synth_noise, synth_w, synth_h,
                             synth_preset, synth_step);
        if (tr->parsed()) {
            cfg.seed = train_common.seed;
            return run_train(train_ds, train_out, cfg, freeze_poses, no_color);
        }
        if (rd->parsed())
            return run_render(rd_ckpt, rd_ds, rd_out, render_common, rd_view, rd_filter,
                              rd_samples);
        if (ev->parsed())
            return run_eval(ev_ckpt, ev_ds, ev_compare, ev_out, eval_common, ev_samples);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
