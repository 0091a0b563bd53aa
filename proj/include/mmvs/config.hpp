#pragma once

#include "mmvs/solver.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mmvs {

// Flat key=value run configuration. Unknown keys are errors.
struct Config {
    SolverConfig solver;

    double photo_threshold = 0.6;
    double geo_pixel_tol = 1.0;
    double geo_depth_tol = 0.01;
    int min_views = 2;

    double max_dist = 20.0;
    std::vector<double> thresholds = {2.0, 4.0, 8.0};

    int gradcheck_samples = 500;
    int threads = 0;  // 0 keeps the runtime default
};

Config parse_config_text(const std::string& text, const std::string& origin);
Config load_config(const std::filesystem::path& path);

// The full key set with defaults, as parseable text.
std::string default_config_text();

}  // namespace mmvs
