// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <cmath>
#include <vector>

namespace bsnerf {

// Axis-angle rotation phi = alpha * omega, alpha = |phi|.
struct AxisAngle {
    Vec3 phi = Vec3::Zero();

    double angle() const { return phi.norm(); }
};

struct Pose {
    AxisAngle rotation;
    Vec3 translation = Vec3::Zero();
};

// Pinhole cameras: square pixels, principal point at the image center, one
// shared focal length across all views. Camera looks down -z (right-handed).
struct CameraParams {
    std::vector<Pose> poses;
    double focal = 0.0;  // pixels
    int width = 0;
    int height = 0;

    int view_count() const { return static_cast<int>(poses.size()); }

    void validate() const {
        require(focal > 0.0, "CameraParams: focal must be positive");
        require(width > 0 && height > 0, "CameraParams: image size must be positive");
        require(!poses.empty(), "CameraParams: need at least one pose");
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit norm
    double t_near = 0.0;
    double t_far = 0.0;
};

inline Mat3 cross_matrix(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Below this angle the sin/cos coefficients switch to their Taylor limits.
constexpr double kSmallAngle = 1e-6;

// R = I + (sin a / a) [phi]x + ((1 - cos a) / a^2) [phi]x^2
inline Mat3 rodrigues(const AxisAngle& aa) {
    require(aa.phi.allFinite(), "rodrigues: non-finite axis-angle");
    const double a = aa.angle();
    double A, B;  // sin(a)/a, (1-cos(a))/a^2
    if (a < kSmallAngle) {
        const double a2 = a * a;
        A = 1.0 - a2 / 6.0;
        B = 0.5 - a2 / 24.0;
    } else {
        A = std::sin(a) / a;
        B = (1.0 - std::cos(a)) / (a * a);
    }
    const Mat3 K = cross_matrix(aa.phi);
    return Mat3::Identity() + A * K + B * (K * K);
}

// dL/dphi given dL/dR. Coefficient derivatives are expressed as A'(a)/a and
// B'(a)/a so the a -> 0 limit stays finite.
inline Vec3 rodrigues_backward(const AxisAngle& aa, const Mat3& upstream) {
    require(aa.phi.allFinite(), "rodrigues_backward: non-finite axis-angle");
    require(upstream.allFinite(), "rodrigues_backward: non-finite upstream");
    const double a = aa.angle();
    const double a2 = a * a;
    double A, B, Ap_over_a, Bp_over_a;
    if (a < kSmallAngle) {
        A = 1.0 - a2 / 6.0;
        B = 0.5 - a2 / 24.0;
        Ap_over_a = -1.0 / 3.0 + a2 / 30.0;
        Bp_over_a = -1.0 / 12.0 + a2 / 180.0;
    } else {
        const double s = std::sin(a), c = std::cos(a);
        A = s / a;
        B = (1.0 - c) / a2;
        Ap_over_a = (c * a - s) / (a2 * a);
        Bp_over_a = (s * a - 2.0 * (1.0 - c)) / (a2 * a2);
    }
    const Mat3 K = cross_matrix(aa.phi);
    const Mat3 K2 = K * K;
    Vec3 grad;
    for (int k = 0; k < 3; ++k) {
        const Mat3 Ek = cross_matrix(Vec3::Unit(k));
        const Mat3 dR = Ap_over_a * aa.phi[k] * K + A * Ek + Bp_over_a * aa.phi[k] * K2 +
                        B * (Ek * K + K * Ek);
        grad[k] = (upstream.array() * dR.array()).sum();
    }
    return grad;
}

// Camera-space direction of a pixel before normalization.
inline Vec3 pixel_camera_dir(const CameraParams& cam, double u, double v) {
    return Vec3((u - cam.width / 2.0) / cam.focal, -(v - cam.height / 2.0) / cam.focal, -1.0);
}

inline Ray generate_ray(const CameraParams& cam, int view, double u, double v,
                        double t_near, double t_far) {
    cam.validate();
    require(view >= 0 && view < cam.view_count(), "generate_ray: view index out of range");
    require(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height,
            "generate_ray: pixel out of range");
    const Mat3 R = rodrigues(cam.poses[view].rotation);
    Ray ray;
    ray.origin = cam.poses[view].translation;
    ray.direction = R * pixel_camera_dir(cam, u, v).normalized();
    ray.t_near = t_near;
    ray.t_far = t_far;
    return ray;
}

// Gradients of a loss through generate_ray into pose and focal parameters.
struct RayGrad {
    Vec3 d_phi = Vec3::Zero();
    Vec3 d_translation = Vec3::Zero();
    double d_focal = 0.0;
};

// d_origin / d_direction are dL/d(ray.origin), dL/d(ray.direction) for the
// ray produced by generate_ray(cam, view, u, v, ...).
inline RayGrad generate_ray_backward(const CameraParams& cam, int view, double u, double v,
                                     const Vec3& d_origin, const Vec3& d_direction) {
    const Mat3 R = rodrigues(cam.poses[view].rotation);
    const Vec3 dcam = pixel_camera_dir(cam, u, v);
    const double len = dcam.norm();
    const Vec3 n = dcam / len;

    RayGrad g;
    g.d_translation = d_origin;
    // direction = R * n
    const Mat3 dR = d_direction * n.transpose();
    g.d_phi = rodrigues_backward(cam.poses[view].rotation, dR);
    const Vec3 dn = R.transpose() * d_direction;
    const Vec3 ddcam = (dn - n * n.dot(dn)) / len;
    // d(dcam)/df = (-(u-cx)/f^2, (v-cy)/f^2, 0)
    g.d_focal = ddcam.x() * (-(u - cam.width / 2.0) / (cam.focal * cam.focal)) +
                ddcam.y() * ((v - cam.height / 2.0) / (cam.focal * cam.focal));
    return g;
}

// Angle of the relative rotation between two axis-angle poses, in degrees.
inline double rotation_error_deg(const AxisAngle& a, const AxisAngle& b) {
    const Mat3 rel = rodrigues(a) * rodrigues(b).transpose();
    double c = (rel.trace() - 1.0) / 2.0;
    c = std::min(1.0, std::max(-1.0, c));
    return std::acos(c) * 180.0 / M_PI;
}

}  // namespace bsnerf
