#include "mmvs/normal_depth.hpp"

#include "mmvs/geometry.hpp"
#include "mmvs/parallel.hpp"

#include <cmath>

namespace mmvs {

namespace {

// Ring of 8 neighbors, clockwise from east (y grows downward).
constexpr Eigen::Index kRing[8][2] = {{1, 0},  {1, 1},   {0, 1},  {-1, 1},
                                      {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};

}  // namespace

NormalMap normal_from_depth(const ImageGrid& depth, const Camera& camera) {
    if (depth.channels() != 1)
        throw InvalidInput("normal_from_depth: depth map must be single-channel");
    const Eigen::Index w = depth.width(), h = depth.height();
    NormalMap out(w, h);
    const Eigen::Matrix3d Kinv = camera.K.inverse();

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) continue;

            bool ok = depth(x, y) > 0.0;
            Eigen::Vector3d ring[8];
            for (int i = 0; ok && i < 8; ++i) {
                const Eigen::Index nx = x + kRing[i][0], ny = y + kRing[i][1];
                const double z = depth(nx, ny);
                if (!(z > 0.0)) {
                    ok = false;
                    break;
                }
                ring[i] = Kinv * (z * Eigen::Vector3d(double(nx), double(ny), 1.0));
            }
            if (!ok) continue;

            const Eigen::Vector3d center =
                Kinv * (depth(x, y) * Eigen::Vector3d(double(x), double(y), 1.0));
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (int i = 0; i < 8; ++i) {
                Eigen::Vector3d n = (ring[i] - center).cross(ring[(i + 1) % 8] - center);
                if (n.z() > 0.0) n = -n;  // face the camera
                mean += n;
            }
            const double norm = mean.norm();
            if (norm < 1e-12) continue;
            out.normal(x, y) = mean / norm;
            out.valid.set(x, y, true);
        }
    });
    return out;
}

ImageGrid refine_depth(const ImageGrid& depth, const NormalMap& normals, const Camera& camera,
                       const ImageGrid& ref_image, double alpha1) {
    if (depth.channels() != 1)
        throw InvalidInput("refine_depth: depth map must be single-channel");
    if (depth.width() != normals.width || depth.height() != normals.height ||
        depth.width() != ref_image.width() || depth.height() != ref_image.height())
        throw InvalidInput("refine_depth: dimensions disagree");
    if (!(alpha1 > 0.0)) throw InvalidInput("refine_depth: alpha1 must be positive");

    const Eigen::Index w = depth.width(), h = depth.height();
    const Eigen::Matrix3d Kinv = camera.K.inverse();
    ImageGrid out = depth;

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!(depth(x, y) > 0.0)) continue;
            const Eigen::Vector3d uq = Kinv * Eigen::Vector3d(double(x), double(y), 1.0);

            double proposal[8];
            double weight[8];
            int count = 0;
            double wsum = 0.0;
            for (int i = 0; i < 8; ++i) {
                const Eigen::Index nx = x + kRing[i][0], ny = y + kRing[i][1];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                if (!normals.valid(nx, ny) || !(depth(nx, ny) > 0.0)) continue;
                const Eigen::Vector3d n = normals.normal(nx, ny);
                const double denom = n.dot(uq);
                if (std::abs(denom) < kRayPlaneEps) continue;
                const Eigen::Vector3d ui = Kinv * Eigen::Vector3d(double(nx), double(ny), 1.0);
                const double z = depth(nx, ny) * n.dot(ui) / denom;
                if (!(z > 0.0)) continue;

                double grad = 0.0;
                for (Eigen::Index c = 0; c < ref_image.channels(); ++c)
                    grad += std::abs(ref_image(nx, ny, c) - ref_image(x, y, c));
                proposal[count] = z;
                weight[count] = std::exp(-alpha1 * grad);
                wsum += weight[count];
                ++count;
            }
            if (count == 0) continue;
            wsum = std::max(wsum, 1e-12);
            double refined = 0.0;
            for (int i = 0; i < count; ++i) refined += (weight[i] / wsum) * proposal[i];
            out(x, y) = refined;
        }
    });
    return out;
}

ImageGrid normal_map_to_grid(const NormalMap& normals) {
    ImageGrid out(normals.width, normals.height, 3);
    out.data() = normals.normals.array();
    return out;
}

ImageGrid normal_map_to_falsecolor(const NormalMap& normals) {
    ImageGrid out(normals.width, normals.height, 3);
    out.data() = (normals.normals.array() + 1.0) * 0.5;
    for (Eigen::Index i = 0; i < out.pixel_count(); ++i)
        if (!normals.valid.at_index(i)) out.data().col(i).setZero();
    return out;
}

}  // namespace mmvs
