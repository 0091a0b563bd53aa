#include "mmvs/synth.hpp"

#include "mmvs/geometry.hpp"
#include "mmvs/parallel.hpp"
#include "mmvs/scene_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mmvs {

namespace {

struct Hit {
    double t = 0.0;  // camera-frame depth (rays use unit z direction)
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    bool valid = false;
};

Hit intersect(const SceneSpec& spec, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    Hit hit;
    if (spec.geometry == "plane") {
        const double denom = dir.dot(spec.plane_normal);
        if (std::abs(denom) < 1e-12) return hit;
        const double t = (spec.plane_point - origin).dot(spec.plane_normal) / denom;
        if (t <= 0.0) return hit;
        hit.t = t;
        hit.point = origin + t * dir;
        hit.normal = spec.plane_normal.normalized();
        hit.valid = true;
    } else if (spec.geometry == "sphere") {
        const Eigen::Vector3d oc = origin - spec.sphere_center;
        const double a = dir.squaredNorm();
        const double b = 2.0 * oc.dot(dir);
        const double cc = oc.squaredNorm() - spec.sphere_radius * spec.sphere_radius;
        const double disc = b * b - 4.0 * a * cc;
        if (disc < 0.0) return hit;
        const double t = (-b - std::sqrt(disc)) / (2.0 * a);
        if (t <= 0.0) return hit;
        hit.t = t;
        hit.point = origin + t * dir;
        hit.normal = (hit.point - spec.sphere_center) / spec.sphere_radius;
        hit.valid = true;
    } else if (spec.geometry == "box") {
        double t_enter = -std::numeric_limits<double>::infinity();
        double t_exit = std::numeric_limits<double>::infinity();
        int enter_axis = -1;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(dir[a]) < 1e-15) {
                if (origin[a] < spec.box_min[a] || origin[a] > spec.box_max[a]) return hit;
                continue;
            }
            double t0 = (spec.box_min[a] - origin[a]) / dir[a];
            double t1 = (spec.box_max[a] - origin[a]) / dir[a];
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > t_enter) {
                t_enter = t0;
                enter_axis = a;
            }
            t_exit = std::min(t_exit, t1);
        }
        if (enter_axis < 0 || t_enter > t_exit || t_enter <= 0.0) return hit;
        hit.t = t_enter;
        hit.point = origin + t_enter * dir;
        hit.normal = Eigen::Vector3d::Zero();
        hit.normal[enter_axis] = dir[enter_axis] > 0.0 ? -1.0 : 1.0;
        hit.valid = true;
    } else {
        throw InvalidInput("unknown scene geometry '" + spec.geometry + "'");
    }
    return hit;
}

// Smooth seeded albedo: a sum of low-frequency sinusoids over world
// coordinates, one independent set per color channel.
struct Texture {
    struct Wave {
        Eigen::Vector3d dir;
        double freq;
        double phase;
    };
    std::array<std::vector<Wave>, 3> channels;

    Texture(unsigned seed, double wavelength_min, double wavelength_max) {
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        std::uniform_real_distribution<double> wavelength(wavelength_min, wavelength_max);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
        for (auto& waves : channels)
            for (int j = 0; j < 5; ++j) {
                Eigen::Vector3d d(unit(rng), unit(rng), unit(rng));
                if (d.norm() < 1e-3) d = Eigen::Vector3d(1, 0, 0);
                waves.push_back({d.normalized(), 2.0 * M_PI / wavelength(rng), phase(rng)});
            }
    }

    double albedo(int channel, const Eigen::Vector3d& p) const {
        double v = 0.55;
        for (const auto& w : channels[static_cast<std::size_t>(channel)])
            v += 0.08 * std::sin(w.freq * w.dir.dot(p) + w.phase);
        return std::clamp(v, 0.0, 1.0);
    }
};

const Eigen::Vector3d kLightDir = Eigen::Vector3d(0.25, -0.35, -0.9).normalized();

double shade(const Eigen::Vector3d& normal) {
    return 0.35 + 0.65 * std::max(0.0, normal.dot(kLightDir));
}

}  // namespace

double trace_depth(const SceneSpec& spec, const Camera& camera, double x, double y) {
    const Eigen::Vector3d dir_cam = camera.K.inverse() * Eigen::Vector3d(x, y, 1.0);
    const Eigen::Vector3d origin = camera.center();
    const Eigen::Vector3d dir = camera.R.transpose() * dir_cam;
    const Hit hit = intersect(spec, origin, dir);
    // dir has unit camera-frame z, so the ray parameter is the depth.
    return hit.valid ? hit.t : kInvalidDepth;
}

RenderedScene render_synthetic_scene(const SceneSpec& spec) {
    if (spec.views < 2) throw InvalidInput("synthetic scene needs at least 2 views");
    if (spec.width < 2 || spec.height < 2)
        throw InvalidInput("synthetic scene needs at least 2x2 images");
    if (!(spec.focal > 0.0) || !(spec.depth_min > 0.0) || !(spec.depth_interval > 0.0) ||
        spec.depth_count < 1)
        throw InvalidInput("synthetic scene has invalid camera parameters");
    if (!(spec.wavelength_min > 0.0) || spec.wavelength_max < spec.wavelength_min)
        throw InvalidInput("texture wavelength range must satisfy 0 < min <= max");

    const Texture texture(spec.texture_seed, spec.wavelength_min, spec.wavelength_max);
    RenderedScene out;

    for (int v = 0; v < spec.views; ++v) {
        Camera cam;
        cam.K << spec.focal, 0.0, double(spec.width - 1) / 2.0,
                 0.0, spec.focal, double(spec.height - 1) / 2.0,
                 0.0, 0.0, 1.0;
        cam.R = Eigen::Matrix3d::Identity();
        const double cx = (double(v) - double(spec.views - 1) / 2.0) * spec.baseline;
        cam.t = -Eigen::Vector3d(cx, 0.0, 0.0);
        cam.depth_min = spec.depth_min;
        cam.depth_interval = spec.depth_interval;
        cam.depth_count = spec.depth_count;

        ImageGrid image(spec.width, spec.height, 3, 0.0);
        ImageGrid depth(spec.width, spec.height, 1, kInvalidDepth);
        const Eigen::Vector3d origin = cam.center();
        const Eigen::Matrix3d Kinv = cam.K.inverse();

        parallel_rows(spec.height, [&](Eigen::Index y) {
            for (Eigen::Index x = 0; x < spec.width; ++x) {
                const Eigen::Vector3d dir = Kinv * Eigen::Vector3d(double(x), double(y), 1.0);
                const Hit hit = intersect(spec, origin, dir);
                if (!hit.valid) continue;
                depth(x, y) = hit.t;
                Eigen::Vector3d n = hit.normal;
                if (n.dot(dir) > 0.0) n = -n;  // shade the visible side
                const double light = shade(n);
                for (int c = 0; c < 3; ++c)
                    image(x, y, c) = std::clamp(texture.albedo(c, hit.point) * light, 0.0, 1.0);
            }
        });

        out.views.push_back({std::move(image), cam});
        out.gt_depths.push_back(std::move(depth));
    }
    return out;
}

Scene RenderedScene::scene_for(std::size_t ref_index) const {
    if (ref_index >= views.size())
        throw InvalidInput("scene_for: reference index out of range");
    Scene scene;
    scene.reference = views[ref_index];
    for (std::size_t i = 0; i < views.size(); ++i)
        if (i != ref_index) scene.sources.push_back(views[i]);
    return scene;
}

SceneSpec parse_scene_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    SceneSpec spec;

    auto parse_num = [&](const std::string& value, const std::string& key) {
        double v = 0.0;
        const char* begin = value.data();
        auto [ptr, ec] = std::from_chars(begin, begin + value.size(), v);
        if (ec != std::errc() || ptr != begin + value.size())
            throw InvalidInput(path.string() + ": cannot parse value for '" + key + "'");
        return v;
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::istringstream check(line);
            std::string tok;
            if (check >> tok)
                throw InvalidInput(path.string() + ":" + std::to_string(line_no) +
                                   ": expected key=value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "geometry") spec.geometry = value;
        else if (key == "width") spec.width = Eigen::Index(parse_num(value, key));
        else if (key == "height") spec.height = Eigen::Index(parse_num(value, key));
        else if (key == "views") spec.views = int(parse_num(value, key));
        else if (key == "baseline") spec.baseline = parse_num(value, key);
        else if (key == "focal") spec.focal = parse_num(value, key);
        else if (key == "texture_seed") spec.texture_seed = unsigned(parse_num(value, key));
        else if (key == "wavelength_min") spec.wavelength_min = parse_num(value, key);
        else if (key == "wavelength_max") spec.wavelength_max = parse_num(value, key);
        else if (key == "depth_min") spec.depth_min = parse_num(value, key);
        else if (key == "depth_interval") spec.depth_interval = parse_num(value, key);
        else if (key == "depth_count") spec.depth_count = int(parse_num(value, key));
        else if (key == "plane_x") spec.plane_point.x() = parse_num(value, key);
        else if (key == "plane_y") spec.plane_point.y() = parse_num(value, key);
        else if (key == "plane_z") spec.plane_point.z() = parse_num(value, key);
        else if (key == "plane_nx") spec.plane_normal.x() = parse_num(value, key);
        else if (key == "plane_ny") spec.plane_normal.y() = parse_num(value, key);
        else if (key == "plane_nz") spec.plane_normal.z() = parse_num(value, key);
        else if (key == "sphere_x") spec.sphere_center.x() = parse_num(value, key);
        else if (key == "sphere_y") spec.sphere_center.y() = parse_num(value, key);
        else if (key == "sphere_z") spec.sphere_center.z() = parse_num(value, key);
        else if (key == "sphere_radius") spec.sphere_radius = parse_num(value, key);
        else if (key == "box_min_x") spec.box_min.x() = parse_num(value, key);
        else if (key == "box_min_y") spec.box_min.y() = parse_num(value, key);
        else if (key == "box_min_z") spec.box_min.z() = parse_num(value, key);
        else if (key == "box_max_x") spec.box_max.x() = parse_num(value, key);
        else if (key == "box_max_y") spec.box_max.y() = parse_num(value, key);
        else if (key == "box_max_z") spec.box_max.z() = parse_num(value, key);
        else
            throw InvalidInput(path.string() + ":" + std::to_string(line_no) +
                               ": unknown scene key '" + key + "'");
    }

    if (spec.geometry != "plane" && spec.geometry != "sphere" && spec.geometry != "box")
        throw InvalidInput("unknown scene geometry '" + spec.geometry + "'");
    if (spec.plane_normal.norm() < 1e-12) throw InvalidInput("plane normal must be nonzero");
    if (!(spec.sphere_radius > 0.0)) throw InvalidInput("sphere radius must be positive");
    if (!((spec.box_min.array() < spec.box_max.array()).all()))
        throw InvalidInput("box_min must be strictly below box_max");
    return spec;
}

}  // namespace mmvs
