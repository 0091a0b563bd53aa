#include "mmvs/fusion.hpp"

#include "mmvs/geometry.hpp"
#include "mmvs/parallel.hpp"

#include <cmath>

namespace mmvs {

namespace {

struct PairCheck {
    bool ok = false;
    Eigen::Index px = 0, py = 0;  // lookup pixel in the partner view
    double partner_depth = 0.0;
};

// Round trip: project (x, y, z) from view i into view j, read the depth at
// the nearest pixel there, project that estimate back, and compare.
PairCheck check_pair(const Camera& cam_i, const Camera& cam_j, Eigen::Index x, Eigen::Index y,
                     double z, const ImageGrid& depth_j, double pixel_tol, double depth_tol) {
    PairCheck out;
    const Reprojection fwd = reproject(cam_i, cam_j, Eigen::Vector2d(double(x), double(y)), z);
    if (!fwd.valid) return out;
    const Eigen::Index px = static_cast<Eigen::Index>(std::llround(fwd.pixel.x()));
    const Eigen::Index py = static_cast<Eigen::Index>(std::llround(fwd.pixel.y()));
    if (px < 0 || py < 0 || px >= depth_j.width() || py >= depth_j.height()) return out;
    const double zj = depth_j(px, py);
    if (!(zj > 0.0)) return out;
    const Reprojection back = reproject(cam_j, cam_i, Eigen::Vector2d(double(px), double(py)), zj);
    if (!back.valid) return out;
    const double pix_err = (back.pixel - Eigen::Vector2d(double(x), double(y))).norm();
    const double depth_err = std::abs(back.depth - z) / z;
    if (pix_err < pixel_tol && depth_err < depth_tol) {
        out.ok = true;
        out.px = px;
        out.py = py;
        out.partner_depth = zj;
    }
    return out;
}

Eigen::Vector3d to_world(const Camera& cam, Eigen::Index x, Eigen::Index y, double z) {
    const Eigen::Vector3d p_cam =
        cam.K.inverse() * (z * Eigen::Vector3d(double(x), double(y), 1.0));
    return cam.R.transpose() * (p_cam - cam.t);
}

Eigen::Vector3d sample_color(const ImageGrid& image, Eigen::Index x, Eigen::Index y) {
    if (image.channels() >= 3)
        return Eigen::Vector3d(image(x, y, 0), image(x, y, 1), image(x, y, 2));
    const double v = image(x, y, 0);
    return Eigen::Vector3d(v, v, v);
}

}  // namespace

std::vector<ImageGrid> filter_depth(const std::vector<ImageGrid>& depths,
                                    const std::vector<ImageGrid>& confidences,
                                    const std::vector<Camera>& cameras, double photo_threshold,
                                    double geo_pixel_tol, double geo_depth_tol, int min_views) {
    const std::size_t V = depths.size();
    if (V == 0) throw InvalidInput("filter_depth: no views");
    if (confidences.size() != V || cameras.size() != V)
        throw InvalidInput("filter_depth: per-view inputs have mismatched lengths");
    if (photo_threshold < 0.0 || photo_threshold > 1.0)
        throw InvalidInput("filter_depth: photo_threshold must be in [0,1]");
    if (min_views < 1) throw InvalidInput("filter_depth: min_views must be >= 1");
    for (std::size_t i = 0; i < V; ++i) {
        validate_camera(cameras[i]);
        if (!depths[i].same_shape(confidences[i]) || depths[i].channels() != 1)
            throw InvalidInput("filter_depth: depth/confidence shapes disagree");
    }

    std::vector<ImageGrid> out;
    out.reserve(V);
    for (std::size_t i = 0; i < V; ++i) {
        const ImageGrid& depth = depths[i];
        ImageGrid filtered(depth.width(), depth.height(), 1, kInvalidDepth);
        parallel_rows(depth.height(), [&](Eigen::Index y) {
            for (Eigen::Index x = 0; x < depth.width(); ++x) {
                const double z = depth(x, y);
                if (!(z > 0.0) || confidences[i](x, y) < photo_threshold) continue;
                int support = 0;
                for (std::size_t j = 0; j < V; ++j) {
                    if (j == i) continue;
                    if (check_pair(cameras[i], cameras[j], x, y, z, depths[j], geo_pixel_tol,
                                   geo_depth_tol)
                            .ok)
                        ++support;
                }
                if (support >= min_views) filtered(x, y) = z;
            }
        });
        out.push_back(std::move(filtered));
    }
    return out;
}

PointCloud fuse_to_cloud(const std::vector<ImageGrid>& filtered_depths,
                         const std::vector<Camera>& cameras,
                         const std::vector<ImageGrid>& images, double geo_pixel_tol,
                         double geo_depth_tol) {
    const std::size_t V = filtered_depths.size();
    if (cameras.size() != V || images.size() != V)
        throw InvalidInput("fuse_to_cloud: per-view inputs have mismatched lengths");

    PointCloud cloud;
    for (std::size_t i = 0; i < V; ++i) {
        const ImageGrid& depth = filtered_depths[i];
        const Eigen::Index h = depth.height(), w = depth.width();
        std::vector<std::vector<Eigen::Vector3d>> row_points(static_cast<std::size_t>(h));
        std::vector<std::vector<Eigen::Vector3d>> row_colors(static_cast<std::size_t>(h));

        parallel_rows(h, [&](Eigen::Index y) {
            auto& points = row_points[static_cast<std::size_t>(y)];
            auto& colors = row_colors[static_cast<std::size_t>(y)];
            for (Eigen::Index x = 0; x < w; ++x) {
                const double z = depth(x, y);
                if (!(z > 0.0)) continue;
                Eigen::Vector3d point = to_world(cameras[i], x, y, z);
                Eigen::Vector3d color = sample_color(images[i], x, y);
                int n = 1;
                for (std::size_t j = 0; j < V; ++j) {
                    if (j == i) continue;
                    const PairCheck pc = check_pair(cameras[i], cameras[j], x, y, z,
                                                    filtered_depths[j], geo_pixel_tol,
                                                    geo_depth_tol);
                    if (!pc.ok) continue;
                    point += to_world(cameras[j], pc.px, pc.py, pc.partner_depth);
                    color += sample_color(images[j], pc.px, pc.py);
                    ++n;
                }
                points.push_back(point / double(n));
                colors.push_back(color / double(n));
            }
        });

        for (Eigen::Index y = 0; y < h; ++y) {
            auto& points = row_points[static_cast<std::size_t>(y)];
            cloud.points.insert(cloud.points.end(), points.begin(), points.end());
            auto& colors = row_colors[static_cast<std::size_t>(y)];
            cloud.colors.insert(cloud.colors.end(), colors.begin(), colors.end());
        }
    }
    return cloud;
}

}  // namespace mmvs
