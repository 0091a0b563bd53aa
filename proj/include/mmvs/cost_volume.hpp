#pragma once

#include "mmvs/types.hpp"

#include <filesystem>
#include <vector>

namespace mmvs {

// Plane-sweep matching costs, one row per depth hypothesis, one column per
// pixel in row-major order. Lower cost = better match; all costs finite, >= 0.
struct CostVolume {
    std::vector<double> hypotheses;  // strictly increasing
    Eigen::Index width = 0;
    Eigen::Index height = 0;
    Eigen::ArrayXXd data;  // depth_count x (width*height)

    Eigen::Index depth_count() const { return static_cast<Eigen::Index>(hypotheses.size()); }
    Eigen::Index index(Eigen::Index x, Eigen::Index y) const { return y * width + x; }
};

// Per-pixel softmax over hypotheses; columns sum to 1.
struct ProbabilityVolume {
    Eigen::Index width = 0;
    Eigen::Index height = 0;
    Eigen::ArrayXXd data;

    Eigen::Index index(Eigen::Index x, Eigen::Index y) const { return y * width + x; }
};

struct DepthRegression {
    ImageGrid depth;
    ProbabilityVolume prob;
    ImageGrid confidence;  // probability mass on the 4 hypotheses around the regressed depth
};

// Warps every source feature map to the reference at each hypothesis of
// cam_ref's depth range; cost = mean over channels of the across-view
// variance of the valid samples (reference always included). Pixels with no
// valid source sample receive the volume's maximum finite cost.
CostVolume build_variance_volume(const ImageGrid& ref_feat, const Camera& cam_ref,
                                 const std::vector<ImageGrid>& src_feats,
                                 const std::vector<Camera>& src_cams);

// Separable 3x3x3 binomial smoothing ([1,2,1]/4 per axis) with replicated
// borders along depth, width, and height.
CostVolume regularize_volume(const CostVolume& cv);

DepthRegression soft_argmin(const CostVolume& cv, double temperature);

// Debug dump: the volume as a depth_count-channel float container.
void save_cost_volume(const CostVolume& cv, const std::filesystem::path& path);

}  // namespace mmvs
