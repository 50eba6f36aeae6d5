// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bsnerf {

// Uniform wavelength discretization over [lambda_min, lambda_max] nm,
// midpoint rule: centers[b] = lambda_min + (b + 0.5) * delta.
struct WavelengthGrid {
    double lambda_min = 430.0;
    double lambda_max = 670.0;
    int bins = 24;

    double delta() const { return (lambda_max - lambda_min) / bins; }
    double center(int b) const { return lambda_min + (b + 0.5) * delta(); }

    bool operator==(const WavelengthGrid& o) const {
        return lambda_min == o.lambda_min && lambda_max == o.lambda_max && bins == o.bins;
    }
};

struct SpectralCurve {
    WavelengthGrid grid;
    std::string name;
    VecX values;  // one per bin, >= 0 (transmissions additionally <= 1)
};

// weights[d](k, b) = sensor[k][b] * filter[d][b] * delta, units nm.
struct ResponseMatrix {
    int views = 0;      // D
    int channels = 0;   // K
    int bins = 0;       // B
    std::vector<MatX> weights;  // per view, K x B

    const MatX& view(int d) const { return weights[d]; }
};

inline ResponseMatrix build_response(const std::vector<SpectralCurve>& filters,
                                     const std::vector<SpectralCurve>& sensor) {
    require(!filters.empty() && !sensor.empty(), "build_response: need curves");
    const WavelengthGrid& grid = filters[0].grid;
    for (const auto& c : filters) {
        require(c.grid == grid, "build_response: filter grid mismatch");
        require((c.values.array() >= 0).all(), "build_response: negative filter value");
    }
    for (const auto& c : sensor) {
        require(c.grid == grid, "build_response: sensor grid mismatch");
        require((c.values.array() >= 0).all(), "build_response: negative sensor value");
    }
    ResponseMatrix m;
    m.views = static_cast<int>(filters.size());
    m.channels = static_cast<int>(sensor.size());
    m.bins = grid.bins;
    m.weights.reserve(m.views);
    for (int d = 0; d < m.views; ++d) {
        MatX w(m.channels, m.bins);
        for (int k = 0; k < m.channels; ++k)
            w.row(k) = (sensor[k].values.array() * filters[d].values.array()).transpose() *
                       grid.delta();
        m.weights.push_back(std::move(w));
    }
    return m;
}

// Sensor-only response (filter identically 1): used to render the "generated"
// RGB image whose color statistics the color loss aligns.
inline MatX sensor_response(const std::vector<SpectralCurve>& sensor) {
    require(!sensor.empty(), "sensor_response: need curves");
    const WavelengthGrid& grid = sensor[0].grid;
    MatX w(static_cast<int>(sensor.size()), grid.bins);
    for (int k = 0; k < w.rows(); ++k)
        w.row(k) = sensor[k].values.transpose() * grid.delta();
    return w;
}

// Discrete Riemann sum of spectrum against the (view, channel) response row.
inline double integrate_spectrum(const VecX& spectrum, int d, int k, const ResponseMatrix& m) {
    require(spectrum.size() == m.bins, "integrate_spectrum: spectrum length mismatch");
    require(d >= 0 && d < m.views && k >= 0 && k < m.channels,
            "integrate_spectrum: index out of range");
    return m.weights[d].row(k).dot(spectrum);
}

// -------------------------------------------------------------------------
// Curve file I/O. CSV: header "lambda_nm,<name1>,...", one row per bin
// center in increasing order.

inline std::vector<SpectralCurve> load_curves(const std::string& path,
                                              bool transmission = true) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_curves: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_curves: empty file " + path);
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
    }
    if (names.size() < 2 || names[0] != "lambda_nm")
        throw std::runtime_error("load_curves: bad header in " + path);
    const int ncurves = static_cast<int>(names.size()) - 1;

    std::vector<double> lambdas;
    std::vector<std::vector<double>> cols(ncurves);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
        if (static_cast<int>(row.size()) != ncurves + 1)
            throw std::runtime_error("load_curves: " + path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(ncurves + 1) + " columns");
        if (!lambdas.empty() && row[0] <= lambdas.back())
            throw std::runtime_error("load_curves: " + path + ":" + std::to_string(lineno) +
                                     ": wavelengths not strictly increasing");
        for (int c = 0; c < ncurves; ++c) {
            const double v = row[c + 1];
            if (v < 0.0 || (transmission && v > 1.0))
                throw std::runtime_error("load_curves: " + path + ":" +
                                         std::to_string(lineno) + ": value " +
                                         std::to_string(v) + " out of range");
            cols[c].push_back(v);
        }
        lambdas.push_back(row[0]);
    }
    const int bins = static_cast<int>(lambdas.size());
    if (bins < 1) throw std::runtime_error("load_curves: no data rows in " + path);

    WavelengthGrid grid;
    grid.bins = bins;
    if (bins >= 2) {
        const double d = lambdas[1] - lambdas[0];
        grid.lambda_min = lambdas[0] - d / 2.0;
        grid.lambda_max = lambdas[bins - 1] + d / 2.0;
    }
    std::vector<SpectralCurve> curves(ncurves);
    for (int c = 0; c < ncurves; ++c) {
        curves[c].grid = grid;
        curves[c].name = names[c + 1];
        curves[c].values = Eigen::Map<const VecX>(cols[c].data(), bins);
    }
    return curves;
}

inline void save_curves(const std::string& path, const std::vector<SpectralCurve>& curves) {
    require(!curves.empty(), "save_curves: no curves");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_curves: cannot write " + path);
    out << "lambda_nm";
    for (const auto& c : curves) out << "," << c.name;
    out << "\n";
    const WavelengthGrid& grid = curves[0].grid;
    out.precision(12);
    for (int b = 0; b < grid.bins; ++b) {
        out << grid.center(b);
        for (const auto& c : curves) out << "," << c.values[b];
        out << "\n";
    }
}

// -------------------------------------------------------------------------
// Built-in synthetic curve banks. The real filter datasheets are not
// published; these are smooth broadband stand-ins with the same count and
// naming, each with mean transmission >= 0.2.

inline double gaussian_bump(double lambda, double center, double sigma) {
    const double z = (lambda - center) / sigma;
    return std::exp(-0.5 * z * z);
}

inline double sigmoid_edge(double lambda, double edge, double scale) {
    return 1.0 / (1.0 + std::exp(-(lambda - edge) / scale));
}

// Three Gaussian sensitivities centered 460/540/610 nm, 35 nm std, peak 1.
inline std::vector<SpectralCurve> default_sensor_curves(const WavelengthGrid& grid = {}) {
    const double centers[3] = {610.0, 540.0, 460.0};  // r, g, b
    const char* names[3] = {"red", "green", "blue"};
    std::vector<SpectralCurve> out(3);
    for (int k = 0; k < 3; ++k) {
        out[k].grid = grid;
        out[k].name = names[k];
        out[k].values.resize(grid.bins);
        for (int b = 0; b < grid.bins; ++b)
            out[k].values[b] = gaussian_bump(grid.center(b), centers[k], 35.0);
    }
    return out;
}

// Nine distinct high-throughput broadband filters. Each is near-unit
// transmission across the band with one or two smooth absorption notches at
// a filter-specific wavelength, and all nine share a common deep-blue
// absorption edge (the glass substrate). The shared edge leaves the sensor's
// blue tail unobserved by any subview, which is exactly the regime the color
// loss exists for: fidelity alone cannot pin spectra there.
inline std::vector<SpectralCurve> default_filter_curves(const WavelengthGrid& grid = {}) {
    struct Notch { double c, w, depth; };
    struct Spec { const char* name; Notch a; Notch b; };
    const Spec specs[9] = {
        {"lavender",   {585, 22, 0.16}, {0, 1, 0.0}},
        {"orange",     {495, 22, 0.16}, {0, 1, 0.0}},
        {"blue_green", {635, 24, 0.16}, {0, 1, 0.0}},
        {"red",        {515, 22, 0.14}, {0, 1, 0.0}},
        {"green",      {610, 22, 0.14}, {0, 1, 0.0}},
        {"blue",       {560, 22, 0.16}, {0, 1, 0.0}},
        {"yellow",     {480, 16, 0.14}, {660, 18, 0.10}},
        {"magenta",    {540, 20, 0.14}, {0, 1, 0.0}},
        {"cyan",       {585, 18, 0.09}, {640, 20, 0.11}},
    };
    std::vector<SpectralCurve> out(9);
    for (int d = 0; d < 9; ++d) {
        out[d].grid = grid;
        out[d].name = specs[d].name;
        out[d].values.resize(grid.bins);
        for (int b = 0; b < grid.bins; ++b) {
            const double l = grid.center(b);
            double v = 1.0 - specs[d].a.depth * gaussian_bump(l, specs[d].a.c, specs[d].a.w) -
                       specs[d].b.depth * gaussian_bump(l, specs[d].b.c, specs[d].b.w);
            v *= sigmoid_edge(l, 474.0, 6.0);  // shared substrate edge
            out[d].values[b] = std::max(0.0, std::min(1.0, v));
        }
    }
    return out;
}

}  // namespace bsnerf
