#pragma once

#include "mmvs/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mmvs {

// Lambertian test scene: a textured plane, sphere, or axis-aligned box seen
// by pinhole cameras spaced along the x axis (R = I, centered on the scene).
struct SceneSpec {
    std::string geometry = "plane";  // plane | sphere | box
    Eigen::Index width = 128;
    Eigen::Index height = 128;
    int views = 3;
    double baseline = 40.0;  // camera spacing, scene units
    double focal = 150.0;
    unsigned texture_seed = 7;
    double wavelength_min = 80.0;  // albedo sinusoid wavelengths, scene units
    double wavelength_max = 200.0;
    double depth_min = 425.0;
    double depth_interval = 2.65;
    int depth_count = 192;

    Eigen::Vector3d plane_point{0.0, 0.0, 600.0};
    Eigen::Vector3d plane_normal{0.0, 0.0, -1.0};

    Eigen::Vector3d sphere_center{0.0, 0.0, 650.0};
    double sphere_radius = 120.0;

    Eigen::Vector3d box_min{-80.0, -80.0, 560.0};
    Eigen::Vector3d box_max{80.0, 80.0, 720.0};
};

SceneSpec parse_scene_spec(const std::filesystem::path& path);

struct RenderedScene {
    std::vector<View> views;
    std::vector<ImageGrid> gt_depths;  // invalid sentinel where rays miss

    // Reference view ref_index, all other views as sources.
    Scene scene_for(std::size_t ref_index) const;
};

RenderedScene render_synthetic_scene(const SceneSpec& spec);

// Ray-traced depth of the spec geometry at one pixel of one camera;
// 0 when the ray misses. Shared by the renderer and its tests.
double trace_depth(const SceneSpec& spec, const Camera& camera, double x, double y);

}  // namespace mmvs
