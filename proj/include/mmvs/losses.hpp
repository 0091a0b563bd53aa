#pragma once

#include "mmvs/feature_pyramid.hpp"
#include "mmvs/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mmvs {

struct LossWeights {
    double gamma1 = 1.0;   // pixel-wise term
    double gamma2 = 1.0;   // feature-wise term
    double alpha1 = 0.1;   // depth-refinement gradient falloff
    double alpha2 = 0.5;   // first-order smoothness edge weight
    double alpha3 = 0.5;   // second-order smoothness edge weight
    double lambda1 = 0.8;  // photometric
    double lambda2 = 0.2;  // structure similarity
    double lambda3 = 0.067;  // smoothness
    double beta1 = 0.2;    // feature scale 1/2
    double beta2 = 0.8;    // feature scale 1/4
    double beta3 = 0.4;    // feature scale 1/8
    double beta4 = 0.0;    // feature scale 1/16, off by default
};

// Throws InvalidInput on negative weights or gamma1 = gamma2 = 0.
void validate(const LossWeights& weights);

double beta_for_scale(const LossWeights& weights, double scale);

// A masked average: value = sum / m with m the number of contributing
// pixels; m = 0 marks a degenerate (empty-mask) evaluation with value 0.
struct LossTerm {
    double value = 0.0;
    Eigen::Index m = 0;

    bool degenerate() const { return m == 0; }
};

struct FeatureLossResult {
    double total = 0.0;
    std::vector<std::pair<double, LossTerm>> per_scale;  // (scale, view-averaged loss)
};

struct LossBreakdown {
    double photo = 0.0;
    double ssim = 0.0;
    double smooth = 0.0;
    double pixel_total = 0.0;
    std::vector<std::pair<double, double>> feature_per_scale;
    double feature_total = 0.0;
    double total = 0.0;
    Eigen::Index m = 0;  // valid photometric pixels summed over source views
    Eigen::Index n = 0;  // pixels in the reference image
    bool degenerate = false;  // every source view had an empty mask
};

struct ScenePyramids {
    FeaturePyramid reference;
    std::vector<FeaturePyramid> sources;
};

ScenePyramids build_scene_pyramids(const Scene& scene, const std::vector<double>& scales);

// Mean over valid pixels of |ref - warped| summed over channels, plus the
// matching L1 difference of forward-difference gradients wherever both
// pixels of the difference are valid.
LossTerm photometric_loss(const ImageGrid& ref, const ImageGrid& warped, const Mask& mask);

// Mean over fully valid 3x3 windows of (1 - SSIM)/2, SSIM averaged over
// channels, C1 = 0.01^2, C2 = 0.03^2 for intensities in [0,1]. Windows
// touching the border or any masked-out pixel are excluded.
LossTerm ssim_loss(const ImageGrid& ref, const ImageGrid& warped, const Mask& mask);

// Edge-aware first- plus second-order depth smoothness averaged over all
// pixels. First differences are forward, one-sided at the far border;
// the Laplacian is the 5-point stencil, zero at borders. Image gradient
// magnitudes are summed over channels inside the exponential weights.
double smoothness_loss(const ImageGrid& depth, const ImageGrid& ref, double alpha2,
                       double alpha3);

// Per pyramid scale: valid-aware depth downsampling, K scaled by the level
// scale, source features warped to the reference, mean-over-channels L1 on
// valid pixels, averaged over source views, then beta-weighted across scales.
FeatureLossResult feature_loss(const FeaturePyramid& ref_pyr,
                               const std::vector<FeaturePyramid>& src_pyrs,
                               const Camera& cam_ref, const std::vector<Camera>& src_cams,
                               const ImageGrid& depth, const LossWeights& weights);

// Full objective: view-averaged pixel-wise terms plus the feature term.
LossBreakdown total_loss(const Scene& scene, const ImageGrid& depth,
                         const ScenePyramids& pyramids, const LossWeights& weights);

// Analytic d(term)/dZ per pixel. photo/ssim/smooth/feature are the raw
// view-averaged term gradients; total combines them with the weights.
struct LossGradients {
    ImageGrid photo;
    ImageGrid ssim;
    ImageGrid smooth;
    ImageGrid feature;
    ImageGrid total;
};

LossGradients loss_gradient_terms(const Scene& scene, const ImageGrid& depth,
                                  const ScenePyramids& pyramids, const LossWeights& weights);

ImageGrid loss_gradient(const Scene& scene, const ImageGrid& depth,
                        const ScenePyramids& pyramids, const LossWeights& weights);

// 2x2 block mean of the valid (positive) entries per cell; cells with no
// valid entry get the invalid sentinel.
ImageGrid downsample_depth_half(const ImageGrid& depth);

// Flat key=value report (photo, ssim, smooth, pixel, feat_*, feature,
// total, m, n).
std::string loss_report(const LossBreakdown& breakdown);

// Finite-difference agreement of one analytic term gradient. Samples where
// forward and backward differences disagree badly straddle a kink of the
// piecewise-smooth objective and are excluded rather than counted.
struct TermAudit {
    std::string name;
    int checked = 0;
    int passed = 0;
    int excluded = 0;

    double pass_fraction() const { return checked == 0 ? 1.0 : double(passed) / checked; }
};

struct GradientAudit {
    std::vector<TermAudit> terms;
    int samples = 0;

    double worst_fraction() const;
};

// Compares analytic per-term gradients against central differences of the
// full objective at `samples` seeded random pixels, step 1e-3 * interval.
GradientAudit audit_loss_gradients(const Scene& scene, const ImageGrid& depth,
                                   const ScenePyramids& pyramids, const LossWeights& weights,
                                   int samples, unsigned seed);

std::string audit_report(const GradientAudit& audit);

}  // namespace mmvs
