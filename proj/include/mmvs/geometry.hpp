#pragma once

#include "mmvs/types.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace mmvs {

// Points with camera-frame z below this are treated as behind the camera.
inline constexpr double kBehindCameraEps = 1e-6;

// Relative transform taking reference-frame points into the source frame.
// Bitwise-equal extrinsics short-circuit to the exact identity so that
// self-warps are exact.
template <typename S>
PoseT<S> relative_pose(const CameraT<S>& ref, const CameraT<S>& src) {
    if (ref.R == src.R && ref.t == src.t) return PoseT<S>::Identity();
    PoseT<S> pose;
    pose.R = src.R * ref.R.transpose();
    pose.t = src.t - pose.R * ref.t;
    return pose;
}

template <typename S>
Vector3<S> backproject(const CameraT<S>& cam, const Vector2<S>& pixel, S depth) {
    if (!(depth > S(0))) throw InvalidInput("backproject: depth must be positive");
    Vector3<S> hom(pixel.x(), pixel.y(), S(1));
    return cam.K.inverse() * (depth * hom);
}

template <typename S>
Vector2<S> project(const CameraT<S>& cam, const Vector3<S>& point) {
    Vector3<S> q = cam.K * point;
    return Vector2<S>(q.x() / q.z(), q.y() / q.z());
}

template <typename S>
struct ReprojectionT {
    Vector2<S> pixel = Vector2<S>::Zero();
    S depth = S(0);  // z in the source camera frame, before perspective division
    bool valid = false;
};

using Reprojection = ReprojectionT<double>;

// Maps a reference pixel at a given depth into the source view. A point at
// or behind the source camera plane is flagged invalid instead of throwing.
template <typename S>
ReprojectionT<S> reproject(const CameraT<S>& cam_ref, const CameraT<S>& cam_src,
                           const Vector2<S>& pixel, S depth) {
    if (!(depth > S(0))) throw InvalidInput("reproject: depth must be positive");
    PoseT<S> pose = relative_pose(cam_ref, cam_src);
    if (pose.is_identity() && cam_ref.K == cam_src.K) {
        return ReprojectionT<S>{pixel, depth, true};
    }
    Vector3<S> p_ref = backproject(cam_ref, pixel, depth);
    Vector3<S> p_src = pose.apply(p_ref);
    if (!(p_src.z() > S(kBehindCameraEps))) return ReprojectionT<S>{Vector2<S>::Zero(), p_src.z(), false};
    return ReprojectionT<S>{project(cam_src, p_src), p_src.z(), true};
}

// Homography induced by the fronto-parallel plane z = depth in the
// reference camera frame.
template <typename S>
Matrix3<S> plane_sweep_homography(const CameraT<S>& cam_ref, const CameraT<S>& cam_src, S depth) {
    if (!(depth > S(0))) throw InvalidInput("plane_sweep_homography: depth must be positive");
    PoseT<S> pose = relative_pose(cam_ref, cam_src);
    Matrix3<S> M = pose.R;
    M.col(2) += pose.t / depth;
    return cam_src.K * M * cam_ref.K.inverse();
}

struct Sample {
    Eigen::VectorXd value;
    bool valid = false;
};

struct SampleJacobian {
    Eigen::VectorXd value;
    Eigen::VectorXd ddx;  // per-channel partial w.r.t. pixel x
    Eigen::VectorXd ddy;
    bool valid = false;
};

namespace detail {

// Support corner and fractional offsets for pixel-center bilinear sampling
// on the valid domain [0, n-1]. Returns false outside the domain.
inline bool bilinear_axis(double v, Eigen::Index n, Eigen::Index& i0, double& frac) {
    if (!(v >= 0.0) || !(v <= double(n - 1))) return false;
    if (n == 1) {
        i0 = 0;
        frac = 0.0;
        return true;
    }
    i0 = static_cast<Eigen::Index>(std::floor(v));
    if (i0 > n - 2) i0 = n - 2;  // v == n-1 uses the last cell with frac 1
    frac = v - double(i0);
    return true;
}

}  // namespace detail

// 4-neighbor bilinear interpolation in the pixel-center convention.
// Out-of-domain samples yield value 0 and valid=false.
inline Sample bilinear_sample(const ImageGrid& grid, const Eigen::Vector2d& p) {
    Sample s;
    s.value = Eigen::VectorXd::Zero(grid.channels());
    Eigen::Index x0, y0;
    double fx, fy;
    if (!detail::bilinear_axis(p.x(), grid.width(), x0, fx) ||
        !detail::bilinear_axis(p.y(), grid.height(), y0, fy))
        return s;
    const Eigen::Index x1 = (grid.width() == 1) ? x0 : x0 + 1;
    const Eigen::Index y1 = (grid.height() == 1) ? y0 : y0 + 1;
    s.value = ((1.0 - fx) * (1.0 - fy)) * grid.pixel(x0, y0).matrix() +
              (fx * (1.0 - fy)) * grid.pixel(x1, y0).matrix() +
              ((1.0 - fx) * fy) * grid.pixel(x0, y1).matrix() +
              (fx * fy) * grid.pixel(x1, y1).matrix();
    s.valid = true;
    return s;
}

// Bilinear value plus its analytic partials w.r.t. the sample position.
inline SampleJacobian bilinear_sample_with_jacobian(const ImageGrid& grid,
                                                    const Eigen::Vector2d& p) {
    SampleJacobian s;
    s.value = Eigen::VectorXd::Zero(grid.channels());
    s.ddx = Eigen::VectorXd::Zero(grid.channels());
    s.ddy = Eigen::VectorXd::Zero(grid.channels());
    Eigen::Index x0, y0;
    double fx, fy;
    if (!detail::bilinear_axis(p.x(), grid.width(), x0, fx) ||
        !detail::bilinear_axis(p.y(), grid.height(), y0, fy))
        return s;
    const Eigen::Index x1 = (grid.width() == 1) ? x0 : x0 + 1;
    const Eigen::Index y1 = (grid.height() == 1) ? y0 : y0 + 1;
    Eigen::VectorXd v00 = grid.pixel(x0, y0).matrix();
    Eigen::VectorXd v10 = grid.pixel(x1, y0).matrix();
    Eigen::VectorXd v01 = grid.pixel(x0, y1).matrix();
    Eigen::VectorXd v11 = grid.pixel(x1, y1).matrix();
    s.value = (1.0 - fx) * (1.0 - fy) * v00 + fx * (1.0 - fy) * v10 +
              (1.0 - fx) * fy * v01 + fx * fy * v11;
    if (grid.width() > 1) s.ddx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    if (grid.height() > 1) s.ddy = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
    s.valid = true;
    return s;
}

struct WarpResult {
    ImageGrid image;
    Mask mask;
};

WarpResult warp_image(const ImageGrid& src, const Camera& cam_ref, const Camera& cam_src,
                      const ImageGrid& depth_map);

WarpResult warp_at_hypothesis(const ImageGrid& src, const Camera& cam_ref,
                              const Camera& cam_src, double depth_hypothesis);

// Warped values plus the per-channel derivative of each warped value with
// respect to the depth at its own pixel. Identity warps have zero derivative.
struct WarpJacobianResult {
    ImageGrid image;
    ImageGrid ddepth;
    Mask mask;
};

WarpJacobianResult warp_image_with_jacobian(const ImageGrid& src, const Camera& cam_ref,
                                            const Camera& cam_src, const ImageGrid& depth_map);

// Same camera with the pixel rows of K multiplied by s (pyramid levels).
template <typename S>
CameraT<S> scale_camera(const CameraT<S>& cam, S s) {
    CameraT<S> out = cam;
    out.K.row(0) *= s;
    out.K.row(1) *= s;
    return out;
}

// Throws InvalidInput when a camera violates its invariants (K structure,
// rotation orthonormality, depth range positivity).
void validate_camera(const Camera& cam);

}  // namespace mmvs
