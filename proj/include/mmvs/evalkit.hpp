#pragma once

#include "mmvs/types.hpp"

#include <vector>

namespace mmvs {

struct CloudMetrics {
    double acc = 0.0;      // mean clamped distance, reconstruction -> reference
    double comp = 0.0;     // mean clamped distance, reference -> reconstruction
    double overall = 0.0;  // (acc + comp) / 2
};

// Exact nearest-neighbor distances (grid-accelerated, identical to a full
// scan), clamped at max_dist before averaging.
CloudMetrics cloud_metrics(const PointCloud& reconstructed, const PointCloud& reference,
                           double max_dist);

// Percentage of commonly valid pixels with |est - gt| < threshold, one
// entry per threshold. Thresholds must be strictly increasing.
std::vector<double> depth_metrics(const ImageGrid& estimated, const ImageGrid& ground_truth,
                                  const std::vector<double>& thresholds);

}  // namespace mmvs
