#include "mmvs/evalkit.hpp"

#include "mmvs/parallel.hpp"

#include <cmath>
#include <unordered_map>

namespace mmvs {

namespace {

// Uniform hash grid over the reference points. The expanding ring search
// scans every cell that could hold a closer point before stopping, so the
// returned squared distance equals the full-scan minimum exactly.
class NearestNeighborGrid {
public:
    NearestNeighborGrid(const std::vector<Eigen::Vector3d>& points, double max_dist)
        : points_(points), max_dist_(max_dist) {
        Eigen::Vector3d lo = points.front(), hi = points.front();
        for (const auto& p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        origin_ = lo;
        const double diag = (hi - lo).norm();
        // Cell edge ~ typical point spacing, floored so degenerate clouds
        // and large clamp radii cannot force astronomically many rings.
        cell_ = std::max(diag / std::cbrt(double(points.size())), max_dist_ / 64.0);
        if (!(cell_ > 0.0) || !std::isfinite(cell_)) cell_ = 1.0;
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key_of(cell_coords(points[i]))].push_back(i);
    }

    // Distance from q to the nearest reference point, clamped at max_dist.
    double clamped_distance(const Eigen::Vector3d& q) const {
        const Eigen::Vector3i cq = cell_coords(q);
        double best_sq = std::numeric_limits<double>::infinity();
        for (long r = 0;; ++r) {
            // A cell in ring r holds no point closer than (r - 1) * cell.
            const double safe = double(r - 1) * cell_;
            if (r > 0 && best_sq <= safe * safe) break;  // no unscanned cell can win
            if (safe >= max_dist_) break;                // clamp dominates the rest
            scan_ring(cq, r, q, best_sq);
        }
        return std::min(std::sqrt(best_sq), max_dist_);
    }

private:
    Eigen::Vector3i cell_coords(const Eigen::Vector3d& p) const {
        return Eigen::Vector3i(int(std::floor((p.x() - origin_.x()) / cell_)),
                               int(std::floor((p.y() - origin_.y()) / cell_)),
                               int(std::floor((p.z() - origin_.z()) / cell_)));
    }

    static std::int64_t key_of(const Eigen::Vector3i& c) {
        const auto pack = [](int v) { return std::int64_t(v) & 0x1FFFFF; };
        return (pack(c.x()) << 42) | (pack(c.y()) << 21) | pack(c.z());
    }

    void scan_cell(const Eigen::Vector3i& c, const Eigen::Vector3d& q, double& best_sq) const {
        const auto it = cells_.find(key_of(c));
        if (it == cells_.end()) return;
        for (std::size_t i : it->second)
            best_sq = std::min(best_sq, (points_[i] - q).squaredNorm());
    }

    void scan_ring(const Eigen::Vector3i& center, long r, const Eigen::Vector3d& q,
                   double& best_sq) const {
        if (r == 0) {
            scan_cell(center, q, best_sq);
            return;
        }
        const int ri = int(r);
        for (int dx = -ri; dx <= ri; ++dx)
            for (int dy = -ri; dy <= ri; ++dy)
                for (int dz = -ri; dz <= ri; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ri) continue;
                    scan_cell(center + Eigen::Vector3i(dx, dy, dz), q, best_sq);
                }
    }

    const std::vector<Eigen::Vector3d>& points_;
    double max_dist_;
    double cell_ = 1.0;
    Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

double mean_clamped_distance(const std::vector<Eigen::Vector3d>& from,
                             const std::vector<Eigen::Vector3d>& to, double max_dist) {
    const NearestNeighborGrid grid(to, max_dist);
    std::vector<double> dist(from.size());
    parallel_rows(static_cast<Eigen::Index>(from.size()), [&](Eigen::Index i) {
        dist[static_cast<std::size_t>(i)] = grid.clamped_distance(from[static_cast<std::size_t>(i)]);
    });
    double sum = 0.0;
    for (double d : dist) sum += d;
    return sum / double(from.size());
}

}  // namespace

CloudMetrics cloud_metrics(const PointCloud& reconstructed, const PointCloud& reference,
                           double max_dist) {
    if (reconstructed.points.empty() || reference.points.empty())
        throw InvalidInput("cloud_metrics: clouds must be non-empty");
    if (!(max_dist > 0.0)) throw InvalidInput("cloud_metrics: max_dist must be positive");
    CloudMetrics m;
    m.acc = mean_clamped_distance(reconstructed.points, reference.points, max_dist);
    m.comp = mean_clamped_distance(reference.points, reconstructed.points, max_dist);
    m.overall = (m.acc + m.comp) / 2.0;
    return m;
}

std::vector<double> depth_metrics(const ImageGrid& estimated, const ImageGrid& ground_truth,
                                  const std::vector<double>& thresholds) {
    if (!estimated.same_shape(ground_truth) || estimated.channels() != 1)
        throw InvalidInput("depth_metrics: depth maps must be single-channel and same size");
    if (thresholds.empty()) throw InvalidInput("depth_metrics: no thresholds given");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1]))
            throw InvalidInput("depth_metrics: thresholds must be strictly increasing");

    Eigen::Index valid = 0;
    std::vector<Eigen::Index> hits(thresholds.size(), 0);
    for (Eigen::Index i = 0; i < estimated.pixel_count(); ++i) {
        const double e = estimated.data()(0, i);
        const double g = ground_truth.data()(0, i);
        if (!(e > 0.0) || !(g > 0.0)) continue;
        ++valid;
        const double err = std::abs(e - g);
        for (std::size_t t = 0; t < thresholds.size(); ++t)
            if (err < thresholds[t]) ++hits[t];
    }
    if (valid == 0) throw InvalidInput("depth_metrics: no commonly valid pixels");

    std::vector<double> out(thresholds.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t)
        out[t] = 100.0 * double(hits[t]) / double(valid);
    return out;
}

}  // namespace mmvs
