#include "mmvs/geometry.hpp"

#include "mmvs/parallel.hpp"

#include <sstream>

namespace mmvs {

WarpResult warp_image(const ImageGrid& src, const Camera& cam_ref, const Camera& cam_src,
                      const ImageGrid& depth_map) {
    if (depth_map.channels() != 1)
        throw InvalidInput("warp_image: depth map must be single-channel");
    const Eigen::Index w = depth_map.width();
    const Eigen::Index h = depth_map.height();
    WarpResult out{ImageGrid(w, h, src.channels(), 0.0), Mask(w, h, false)};

    const Pose pose = relative_pose(cam_ref, cam_src);
    const bool identity = pose.is_identity() && cam_ref.K == cam_src.K;
    if (identity && !src.same_shape(out.image))
        throw InvalidInput("warp_image: identity warp requires matching dimensions");

    // x_src = a * z + b with a = K_src * R_rel * K_ref^-1 * (x, y, 1).
    const Eigen::Matrix3d A = cam_src.K * pose.R * cam_ref.K.inverse();
    const Eigen::Vector3d b = cam_src.K * pose.t;

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const double z = depth_map(x, y);
            if (!(z > 0.0)) continue;
            if (identity) {
                out.image.pixel(x, y) = src.pixel(x, y);
                out.mask.set(x, y, true);
                continue;
            }
            const Eigen::Vector3d q = A * Eigen::Vector3d(double(x), double(y), 1.0) * z + b;
            if (!(q.z() > kBehindCameraEps)) continue;
            Sample s = bilinear_sample(src, Eigen::Vector2d(q.x() / q.z(), q.y() / q.z()));
            if (!s.valid) continue;
            out.image.pixel(x, y) = s.value.array();
            out.mask.set(x, y, true);
        }
    });
    return out;
}

WarpResult warp_at_hypothesis(const ImageGrid& src, const Camera& cam_ref,
                              const Camera& cam_src, double depth_hypothesis) {
    if (!(depth_hypothesis > 0.0))
        throw InvalidInput("warp_at_hypothesis: depth must be positive");
    const Eigen::Index w = src.width();
    const Eigen::Index h = src.height();
    WarpResult out{ImageGrid(w, h, src.channels(), 0.0), Mask(w, h, false)};

    const Pose pose = relative_pose(cam_ref, cam_src);
    if (pose.is_identity() && cam_ref.K == cam_src.K) {
        out.image = src;
        out.mask = Mask(w, h, true);
        return out;
    }

    const Eigen::Matrix3d H = plane_sweep_homography(cam_ref, cam_src, depth_hypothesis);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const Eigen::Vector3d q = H * Eigen::Vector3d(double(x), double(y), 1.0);
            // q.z scales as z_src / depth, so the behind-camera test carries over.
            if (!(q.z() * depth_hypothesis > kBehindCameraEps)) continue;
            Sample s = bilinear_sample(src, Eigen::Vector2d(q.x() / q.z(), q.y() / q.z()));
            if (!s.valid) continue;
            out.image.pixel(x, y) = s.value.array();
            out.mask.set(x, y, true);
        }
    });
    return out;
}

WarpJacobianResult warp_image_with_jacobian(const ImageGrid& src, const Camera& cam_ref,
                                            const Camera& cam_src, const ImageGrid& depth_map) {
    if (depth_map.channels() != 1)
        throw InvalidInput("warp_image_with_jacobian: depth map must be single-channel");
    const Eigen::Index w = depth_map.width();
    const Eigen::Index h = depth_map.height();
    WarpJacobianResult out{ImageGrid(w, h, src.channels(), 0.0),
                           ImageGrid(w, h, src.channels(), 0.0), Mask(w, h, false)};

    const Pose pose = relative_pose(cam_ref, cam_src);
    const bool identity = pose.is_identity() && cam_ref.K == cam_src.K;
    if (identity && !src.same_shape(out.image))
        throw InvalidInput("warp_image_with_jacobian: identity warp requires matching dimensions");

    const Eigen::Matrix3d A = cam_src.K * pose.R * cam_ref.K.inverse();
    const Eigen::Vector3d b = cam_src.K * pose.t;

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const double z = depth_map(x, y);
            if (!(z > 0.0)) continue;
            if (identity) {
                out.image.pixel(x, y) = src.pixel(x, y);
                out.mask.set(x, y, true);
                continue;
            }
            const Eigen::Vector3d a = A * Eigen::Vector3d(double(x), double(y), 1.0);
            const Eigen::Vector3d q = a * z + b;
            if (!(q.z() > kBehindCameraEps)) continue;
            SampleJacobian s = bilinear_sample_with_jacobian(
                src, Eigen::Vector2d(q.x() / q.z(), q.y() / q.z()));
            if (!s.valid) continue;
            // d(q1/q3)/dz = (a1*b3 - b1*a3) / q3^2 since q_i = a_i z + b_i.
            const double inv_q3sq = 1.0 / (q.z() * q.z());
            const double dxdz = (a.x() * b.z() - b.x() * a.z()) * inv_q3sq;
            const double dydz = (a.y() * b.z() - b.y() * a.z()) * inv_q3sq;
            out.image.pixel(x, y) = s.value.array();
            out.ddepth.pixel(x, y) = (s.ddx * dxdz + s.ddy * dydz).array();
            out.mask.set(x, y, true);
        }
    });
    return out;
}

void validate_camera(const Camera& cam) {
    std::ostringstream err;
    if (!(cam.K(0, 0) > 0.0) || !(cam.K(1, 1) > 0.0)) {
        err << "intrinsic focal entries must be positive, got " << cam.K(0, 0) << ", "
            << cam.K(1, 1);
        throw InvalidInput(err.str());
    }
    if (cam.K(2, 2) != 1.0) {
        err << "intrinsic K[2][2] must be 1, got " << cam.K(2, 2);
        throw InvalidInput(err.str());
    }
    if (cam.K(1, 0) != 0.0 || cam.K(2, 0) != 0.0 || cam.K(2, 1) != 0.0) {
        throw InvalidInput("intrinsic matrix must be upper-triangular");
    }
    const double ortho = (cam.R.transpose() * cam.R - Eigen::Matrix3d::Identity()).norm();
    if (!(ortho <= 1e-6)) {
        err << "extrinsic not a rotation: ||R^T R - I|| = " << ortho;
        throw InvalidInput(err.str());
    }
    const double det = cam.R.determinant();
    if (!(std::abs(det - 1.0) <= 1e-6)) {
        err << "extrinsic not a rotation: det(R) = " << det;
        throw InvalidInput(err.str());
    }
    if (!(cam.depth_min > 0.0) || !(cam.depth_interval > 0.0) || cam.depth_count < 1) {
        err << "invalid depth range: min " << cam.depth_min << ", interval "
            << cam.depth_interval << ", count " << cam.depth_count;
        throw InvalidInput(err.str());
    }
}

}  // namespace mmvs
