#pragma once

#include "mmvs/cost_volume.hpp"
#include "mmvs/losses.hpp"
#include "mmvs/types.hpp"

#include <string>
#include <vector>

namespace mmvs {

struct SolverConfig {
    int max_iters = 200;
    double step_size = 0.0;  // scene units per step; 0 picks 0.5 * depth_interval
    double step_decay = 0.5;
    int nd_passes = 1;   // refinement passes per consistency round
    int nd_every = 25;   // iterations between consistency rounds
    double temperature = 1.0;
    std::vector<double> scales = {0.5, 0.25, 0.125};
    LossWeights weights;
    unsigned seed = 0;
};

struct SolveReport {
    std::vector<LossBreakdown> trace;  // initial state plus each accepted step
    ImageGrid depth;
    ImageGrid initial_depth;
    NormalMap normals;
    ImageGrid confidence;
    int accepted_steps = 0;
    int rejected_steps = 0;
};

// Plane-sweep initialization followed by projected gradient descent on the
// multi-metric loss, with depth-normal consistency rounds. The trace of
// accepted totals is non-increasing; rejected steps shrink the step size.
SolveReport solve_depth(const Scene& scene, const SolverConfig& config);

// CSV with header iter,photo,ssim,smooth,feature,total.
std::string trace_csv(const std::vector<LossBreakdown>& trace);

}  // namespace mmvs
