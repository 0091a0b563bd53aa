#pragma once

#include "mmvs/types.hpp"

namespace mmvs {

// Proposals whose ray is nearly parallel to the neighbor's tangent plane
// are dropped below this dot-product magnitude.
inline constexpr double kRayPlaneEps = 1e-9;

// Per-pixel normals as the normalized mean of the eight cross products of
// consecutive backprojected ring neighbors, each flipped to face the camera.
// Border pixels and pixels with invalid-depth support are flagged invalid.
NormalMap normal_from_depth(const ImageGrid& depth, const Camera& camera);

// One synchronous refinement pass: each pixel is replaced by the weighted
// mean of the depths its eight neighbors' tangent planes induce along its
// ray, weighted by exp(-alpha1 * directional image gradient). Pixels with
// no valid proposal (or invalid input depth) keep their input value.
ImageGrid refine_depth(const ImageGrid& depth, const NormalMap& normals, const Camera& camera,
                       const ImageGrid& ref_image, double alpha1);

// 3-channel grid of normal components (invalid pixels are zero), for the
// float-container format.
ImageGrid normal_map_to_grid(const NormalMap& normals);

// False-color rendering with the (n+1)/2 mapping into [0,1].
ImageGrid normal_map_to_falsecolor(const NormalMap& normals);

}  // namespace mmvs
