#pragma once

#include "mmvs/types.hpp"

#include <vector>

namespace mmvs {

// A pixel survives when its confidence reaches photo_threshold and its
// depth round-trips consistently (pixel error < geo_pixel_tol, relative
// depth error < geo_depth_tol) through at least min_views other views.
// Failing pixels are set to the invalid sentinel. The geometric check reads
// the unfiltered input depths, so the result is independent of view order.
std::vector<ImageGrid> filter_depth(const std::vector<ImageGrid>& depths,
                                    const std::vector<ImageGrid>& confidences,
                                    const std::vector<Camera>& cameras, double photo_threshold,
                                    double geo_pixel_tol, double geo_depth_tol, int min_views);

// Backprojects every surviving pixel and averages it with the world points
// its consistent partners induce in the other views; colors averaged the
// same way. Merging is keyed by view index order, independent of traversal.
PointCloud fuse_to_cloud(const std::vector<ImageGrid>& filtered_depths,
                         const std::vector<Camera>& cameras,
                         const std::vector<ImageGrid>& images, double geo_pixel_tol,
                         double geo_depth_tol);

}  // namespace mmvs
