#include "mmvs/solver.hpp"

#include "mmvs/feature_pyramid.hpp"
#include "mmvs/geometry.hpp"
#include "mmvs/normal_depth.hpp"
#include "mmvs/parallel.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace mmvs {

namespace {

ImageGrid matching_features(const ImageGrid& image) {
    ImageGrid feat = handcrafted_features(image);
    standardize_channels(feat);
    return feat;
}

void clamp_depth(ImageGrid& depth, double lo, double hi) {
    depth.data() = depth.data().max(lo).min(hi);
}

}  // namespace

SolveReport solve_depth(const Scene& scene, const SolverConfig& config) {
    if (scene.sources.empty()) throw InvalidInput("solve_depth: scene needs a source view");
    validate_camera(scene.reference.camera);
    for (const auto& view : scene.sources) validate_camera(view.camera);
    validate(config.weights);
    if (config.max_iters < 0) throw InvalidInput("solve_depth: max_iters must be >= 0");
    if (!(config.step_decay > 0.0) || config.step_decay > 1.0)
        throw InvalidInput("solve_depth: step_decay must be in (0, 1]");
    if (config.nd_every < 1) throw InvalidInput("solve_depth: nd_every must be >= 1");

    const Camera& cam = scene.reference.camera;
    const double depth_lo = cam.depth_min;
    const double depth_hi = cam.depth_max();

    // Plane-sweep initialization on full-resolution matching features.
    const ImageGrid ref_feat = matching_features(scene.reference.image);
    std::vector<ImageGrid> src_feats;
    std::vector<Camera> src_cams;
    for (const auto& view : scene.sources) {
        src_feats.push_back(matching_features(view.image));
        src_cams.push_back(view.camera);
    }
    CostVolume cv = build_variance_volume(ref_feat, cam, src_feats, src_cams);
    cv = regularize_volume(cv);
    const DepthRegression init = soft_argmin(cv, config.temperature);

    SolveReport report;
    report.initial_depth = init.depth;
    report.confidence = init.confidence;
    report.depth = init.depth;

    const ScenePyramids pyramids = build_scene_pyramids(scene, config.scales);
    LossBreakdown current = total_loss(scene, report.depth, pyramids, config.weights);
    if (current.degenerate)
        throw InvalidInput("solve_depth: degenerate scene, no source view overlaps the reference");
    report.trace.push_back(current);

    double step = config.step_size > 0.0 ? config.step_size : 0.5 * cam.depth_interval;
    const double step_floor = 1e-12 * cam.depth_interval;
    std::deque<double> window{current.total};
    bool depth_changed = true;
    ImageGrid grad;

    for (int iter = 1; iter <= config.max_iters; ++iter) {
        if (depth_changed) {
            grad = loss_gradient(scene, report.depth, pyramids, config.weights);
            depth_changed = false;
        }
        const double gmax = grad.data().abs().maxCoeff();
        if (gmax == 0.0) break;

        ImageGrid candidate = report.depth;
        candidate.data() -= (step / gmax) * grad.data();
        clamp_depth(candidate, depth_lo, depth_hi);
        const LossBreakdown candidate_loss = total_loss(scene, candidate, pyramids, config.weights);

        bool accepted = false;
        if (candidate_loss.total <= current.total) {
            report.depth = std::move(candidate);
            current = candidate_loss;
            report.trace.push_back(current);
            ++report.accepted_steps;
            depth_changed = true;
            accepted = true;
        } else {
            step *= config.step_decay;
            ++report.rejected_steps;
            if (step < step_floor) break;
        }

        if (iter % config.nd_every == 0 && config.nd_passes > 0) {
            ImageGrid refined = report.depth;
            for (int pass = 0; pass < config.nd_passes; ++pass) {
                const NormalMap normals = normal_from_depth(refined, cam);
                refined = refine_depth(refined, normals, cam, scene.reference.image,
                                       config.weights.alpha1);
            }
            clamp_depth(refined, depth_lo, depth_hi);
            const LossBreakdown refined_loss = total_loss(scene, refined, pyramids, config.weights);
            if (refined_loss.total <= current.total) {
                report.depth = std::move(refined);
                current = refined_loss;
                report.trace.push_back(current);
                ++report.accepted_steps;
                depth_changed = true;
                accepted = true;
            }
        }

        // Plateau detection over accepted totals only; rejections shrink the
        // step and get another chance until the step floor.
        if (accepted) {
            window.push_back(current.total);
            if (window.size() > 6) window.pop_front();
            if (window.size() == 6) {
                const double base = std::max(std::abs(window.front()), 1e-30);
                if (std::abs(window.front() - window.back()) / base < 1e-5) break;
            }
        }
    }

    report.normals = normal_from_depth(report.depth, cam);
    return report;
}

std::string trace_csv(const std::vector<LossBreakdown>& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,photo,ssim,smooth,feature,total\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << "," << trace[i].photo << "," << trace[i].ssim << "," << trace[i].smooth
            << "," << trace[i].feature_total << "," << trace[i].total << "\n";
    return out.str();
}

}  // namespace mmvs
