#pragma once

#include "mmvs/types.hpp"

#include <filesystem>
#include <vector>

namespace mmvs {

// Channels emitted per pyramid level: intensity, horizontal gradient,
// vertical gradient, gradient magnitude, and four orientation census means.
inline constexpr Eigen::Index kHandcraftedChannels = 8;

struct PyramidLevel {
    double scale = 1.0;
    ImageGrid grid;
};

// Multi-scale feature maps, scales strictly decreasing.
struct FeaturePyramid {
    std::vector<PyramidLevel> levels;

    const PyramidLevel* find(double scale) const {
        for (const auto& level : levels)
            if (level.scale == scale) return &level;
        return nullptr;
    }
};

// Separable Gaussian blur with replicated borders; constant images are
// preserved exactly.
ImageGrid gaussian_blur(const ImageGrid& image, double sigma);

// Keeps every second pixel starting at (0,0); output is ceil(dim/2).
ImageGrid decimate_half(const ImageGrid& image);

// Raw 8-channel feature grid, before standardization.
ImageGrid handcrafted_features(const ImageGrid& image);

// Shifts each channel to zero mean, unit variance over the image
// (variance floored at 1e-8).
void standardize_channels(ImageGrid& grid);

// Blur(sigma=1) + 2x decimation per octave down to each requested scale,
// then standardized handcrafted features. Scales must be a strictly
// decreasing subset of {1/2, 1/4, 1/8, 1/16}.
FeaturePyramid build_handcrafted_pyramid(const ImageGrid& image,
                                         const std::vector<double>& scales);

// Loads precomputed per-scale feature maps, validating each level's
// dimensions as ceil(base_dim * scale).
FeaturePyramid attach_external_pyramid(const std::vector<std::filesystem::path>& paths,
                                       const std::vector<double>& scales,
                                       Eigen::Index base_width, Eigen::Index base_height);

}  // namespace mmvs
