// Test-only oracles, independent of the library's implementation paths.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <cmath>
#include <functional>

namespace oracle {

// Rotation matrix from axis-angle via quaternion composition.
inline bsnerf::Mat3 quaternion_rotation(const bsnerf::Vec3& phi) {
    const double a = phi.norm();
    double w = std::cos(a / 2.0);
    bsnerf::Vec3 v = bsnerf::Vec3::Zero();
    if (a > 0.0) v = std::sin(a / 2.0) * phi / a;
    bsnerf::Mat3 r;
    const double x = v.x(), y = v.y(), z = v.z();
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Central finite difference of a scalar function of a flat parameter vector.
inline bsnerf::VecX finite_difference(const std::function<double(const bsnerf::VecX&)>& f,
                                      const bsnerf::VecX& x, double h = 1e-5) {
    bsnerf::VecX g(x.size());
    bsnerf::VecX xp = x;
    for (int i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Worst relative error between an analytic gradient and its FD estimate,
// with an absolute floor so near-zero coordinates do not blow up the ratio.
inline double max_rel_error(const bsnerf::VecX& analytic, const bsnerf::VecX& fd,
                            double floor = 1e-6) {
    double worst = 0.0;
    for (int i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / scale);
    }
    return worst;
}

}  // namespace oracle
