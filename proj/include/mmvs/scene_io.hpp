#pragma once

#include "mmvs/types.hpp"

#include <filesystem>
#include <string>

namespace mmvs {

// Camera text file: "extrinsic" + 4x4 [R|t; 0 0 0 1], blank line,
// "intrinsic" + 3x3 K, blank line, "depth_min depth_interval depth_count".
Camera load_camera(const std::filesystem::path& path);
void save_camera(const Camera& cam, const std::filesystem::path& path);

// 8-bit rasters (PNG, PGM, PPM by extension); intensities mapped to [0,1].
ImageGrid load_image(const std::filesystem::path& path);
void save_image(const ImageGrid& grid, const std::filesystem::path& path);

// Single-channel float32 PFM, bottom-up scanlines, little-endian scale < 0.
ImageGrid load_depth_pfm(const std::filesystem::path& path);
void save_depth_pfm(const ImageGrid& grid, const std::filesystem::path& path);

// Multi-channel float32 container: "PFC", "width height channels", scale,
// then row-major channel-interleaved bottom-up payload.
ImageGrid load_feature_map(const std::filesystem::path& path);
void save_feature_map(const ImageGrid& grid, const std::filesystem::path& path);

// Binary little-endian PLY with float x,y,z and optional uchar r,g,b.
PointCloud load_pointcloud_ply(const std::filesystem::path& path);
void save_pointcloud_ply(const PointCloud& cloud, const std::filesystem::path& path);

// Writes `content` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mmvs
