#include "mmvs/normal_depth.hpp"

#include "mmvs/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace mmvs;

namespace {

Camera make_camera(double focal, double cx, double cy) {
    Camera cam;
    cam.K << focal, 0, cx, 0, focal, cy, 0, 0, 1;
    cam.depth_min = 1.0;
    cam.depth_interval = 1.0;
    cam.depth_count = 100;
    return cam;
}

// Depth of the plane through p0 with unit normal n along each pixel ray.
ImageGrid plane_depth(const Camera& cam, Eigen::Index w, Eigen::Index h,
                      const Eigen::Vector3d& p0, const Eigen::Vector3d& n) {
    const Eigen::Matrix3d Kinv = cam.K.inverse();
    ImageGrid depth(w, h, 1);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
            depth(x, y) = n.dot(p0) / n.dot(Kinv * Eigen::Vector3d(double(x), double(y), 1.0));
    return depth;
}

NormalMap constant_normals(Eigen::Index w, Eigen::Index h, const Eigen::Vector3d& n) {
    NormalMap nm(w, h);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x) {
            nm.normal(x, y) = n;
            nm.valid.set(x, y, true);
        }
    return nm;
}

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("fronto-parallel depth yields camera-facing normals") {
    const Camera cam = make_camera(120, 15.5, 15.5);
    const ImageGrid depth(32, 32, 1, 600.0);
    const NormalMap nm = normal_from_depth(depth, cam);

    const Eigen::Vector3d expected(0, 0, -1);
    for (Eigen::Index y = 1; y < 31; ++y)
        for (Eigen::Index x = 1; x < 31; ++x) {
            REQUIRE(nm.valid(x, y));
            CHECK((nm.normal(x, y) - expected).norm() < 1e-12);
        }
    // Borders carry no estimate.
    CHECK_FALSE(nm.valid(0, 5));
    CHECK_FALSE(nm.valid(31, 5));
    CHECK_FALSE(nm.valid(5, 0));
    CHECK_FALSE(nm.valid(5, 31));
}

TEST_CASE("a 30-degree slanted plane is recovered to a fraction of a degree") {
    const Camera cam = make_camera(120, 15.5, 15.5);
    const Eigen::Vector3d n = Eigen::Vector3d(0.5, 0.0, -std::sqrt(3.0) / 2.0).normalized();
    const ImageGrid depth = plane_depth(cam, 32, 32, Eigen::Vector3d(0, 0, 600), n);
    const NormalMap nm = normal_from_depth(depth, cam);

    int good = 0, total = 0;
    for (Eigen::Index y = 1; y < 31; ++y)
        for (Eigen::Index x = 1; x < 31; ++x) {
            REQUIRE(nm.valid(x, y));
            ++total;
            if (angle_deg(nm.normal(x, y), n) < 0.5) ++good;
        }
    CHECK(double(good) / double(total) > 0.99);
}

TEST_CASE("sphere normals match the analytic surface direction") {
    SceneSpec spec;
    spec.geometry = "sphere";
    const Camera cam = make_camera(300, 15.5, 15.5);

    ImageGrid depth(32, 32, 1, 0.0);
    for (Eigen::Index y = 0; y < 32; ++y)
        for (Eigen::Index x = 0; x < 32; ++x)
            depth(x, y) = trace_depth(spec, cam, double(x), double(y));
    REQUIRE((depth.data() > 0.0).any());

    const NormalMap nm = normal_from_depth(depth, cam);
    const Eigen::Matrix3d Kinv = cam.K.inverse();
    std::vector<double> errors;
    for (Eigen::Index y = 1; y < 31; ++y)
        for (Eigen::Index x = 1; x < 31; ++x) {
            if (!nm.valid(x, y)) continue;
            const Eigen::Vector3d P =
                Kinv * (depth(x, y) * Eigen::Vector3d(double(x), double(y), 1.0));
            const Eigen::Vector3d truth = (P - spec.sphere_center).normalized();
            errors.push_back(angle_deg(nm.normal(x, y), truth));
        }
    REQUIRE(errors.size() > 200);
    std::sort(errors.begin(), errors.end());
    CHECK(errors[errors.size() / 2] < 1.0);
}

TEST_CASE("a depth hole invalidates its full 8-neighborhood") {
    const Camera cam = make_camera(50, 7.5, 7.5);
    ImageGrid depth(16, 16, 1, 100.0);
    depth(5, 5) = 0.0;
    const NormalMap nm = normal_from_depth(depth, cam);

    for (Eigen::Index y = 4; y <= 6; ++y)
        for (Eigen::Index x = 4; x <= 6; ++x) CHECK_FALSE(nm.valid(x, y));
    CHECK(nm.valid(7, 5));
    CHECK(nm.valid(3, 5));
    CHECK(nm.normal(5, 5) == Eigen::Vector3d::Zero());
}

TEST_CASE("normal_from_depth requires a single-channel map") {
    CHECK_THROWS_AS(normal_from_depth(ImageGrid(4, 4, 3, 1.0), make_camera(10, 1.5, 1.5)),
                    InvalidInput);
}

TEST_CASE("planar depth maps are fixed points of the refinement") {
    const Camera cam = make_camera(120, 15.5, 15.5);
    const ImageGrid image(32, 32, 1, 0.5);

    SUBCASE("fronto-parallel") {
        const Eigen::Vector3d n(0, 0, -1);
        const ImageGrid depth = plane_depth(cam, 32, 32, Eigen::Vector3d(0, 0, 600), n);
        const ImageGrid refined = refine_depth(depth, constant_normals(32, 32, n), cam, image, 0.1);
        CHECK(((refined.data() - depth.data()) / 600.0).abs().maxCoeff() < 1e-6);
    }
    SUBCASE("slanted") {
        const Eigen::Vector3d n = Eigen::Vector3d(0.4, -0.2, -0.8).normalized();
        const ImageGrid depth = plane_depth(cam, 32, 32, Eigen::Vector3d(0, 0, 600), n);
        const ImageGrid refined = refine_depth(depth, constant_normals(32, 32, n), cam, image, 0.1);
        CHECK(((refined.data() - depth.data()) / depth.data()).abs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("a depth spike is flattened back onto the neighbors' plane") {
    const Camera cam = make_camera(120, 15.5, 15.5);
    const Eigen::Vector3d n(0, 0, -1);
    ImageGrid depth = plane_depth(cam, 32, 32, Eigen::Vector3d(0, 0, 600), n);
    const double truth = depth(16, 16);
    depth(16, 16) *= 1.1;

    const ImageGrid refined =
        refine_depth(depth, constant_normals(32, 32, n), cam, ImageGrid(32, 32, 1, 0.5), 0.1);
    CHECK(std::abs(refined(16, 16) - truth) < 1e-9);
    // Neighbors absorb at most one bad proposal of their eight.
    CHECK((refined.data() - 600.0).abs().maxCoeff() <= 0.1 * 600.0 / 8.0 + 1e-9);
}

TEST_CASE("with a uniform image the edge weight has no effect") {
    const Camera cam = make_camera(120, 15.5, 15.5);
    const Eigen::Vector3d n = Eigen::Vector3d(0.3, 0.1, -0.9).normalized();
    ImageGrid depth = plane_depth(cam, 16, 16, Eigen::Vector3d(0, 0, 500), n);
    depth(7, 7) *= 1.05;
    const NormalMap nm = constant_normals(16, 16, n);
    const ImageGrid image(16, 16, 1, 0.25);

    const ImageGrid a = refine_depth(depth, nm, cam, image, 0.01);
    const ImageGrid b = refine_depth(depth, nm, cam, image, 10.0);
    CHECK((a.data() == b.data()).all());
}

TEST_CASE("refinement only reads the 8-neighborhood") {
    const Camera cam = make_camera(120, 7.5, 7.5);
    const Eigen::Vector3d n(0, 0, -1);
    const NormalMap nm = constant_normals(16, 16, n);
    const ImageGrid image(16, 16, 1, 0.5);
    ImageGrid depth = plane_depth(cam, 16, 16, Eigen::Vector3d(0, 0, 600), n);

    const ImageGrid before = refine_depth(depth, nm, cam, image, 0.5);
    depth(12, 12) *= 2.0;
    const ImageGrid after = refine_depth(depth, nm, cam, image, 0.5);
    CHECK(after(3, 3) == before(3, 3));
    CHECK(after(12, 10) == before(12, 10));
    CHECK(after(12, 11) != before(12, 11));
}

TEST_CASE("rays parallel to the neighbor planes contribute no proposal") {
    // Normals point along +x; at the principal column the center ray is
    // perpendicular to them, so every proposal is rejected there.
    const Camera cam = make_camera(10, 3.0, 2.0);
    const NormalMap nm = constant_normals(7, 5, Eigen::Vector3d(1, 0, 0));
    const ImageGrid depth(7, 5, 1, 50.0);
    const ImageGrid refined = refine_depth(depth, nm, cam, ImageGrid(7, 5, 1, 0.5), 0.1);
    for (Eigen::Index y = 0; y < 5; ++y) CHECK(refined(3, y) == 50.0);
}

TEST_CASE("refinement validates its inputs") {
    const Camera cam = make_camera(10, 1.5, 1.5);
    const NormalMap nm = constant_normals(4, 4, Eigen::Vector3d(0, 0, -1));
    const ImageGrid depth(4, 4, 1, 10.0);
    const ImageGrid image(4, 4, 1, 0.5);
    CHECK_THROWS_AS(refine_depth(ImageGrid(4, 4, 2, 1.0), nm, cam, image, 0.1), InvalidInput);
    CHECK_THROWS_AS(refine_depth(ImageGrid(5, 4, 1, 1.0), nm, cam, image, 0.1), InvalidInput);
    CHECK_THROWS_AS(refine_depth(depth, nm, cam, ImageGrid(4, 5, 1, 0.5), 0.1), InvalidInput);
    CHECK_THROWS_AS(refine_depth(depth, nm, cam, image, 0.0), InvalidInput);
}

TEST_CASE("normal maps export to grids and false color") {
    NormalMap nm(2, 1);
    nm.normal(0, 0) = Eigen::Vector3d(0, 0, -1);
    nm.valid.set(0, 0, true);

    const ImageGrid grid = normal_map_to_grid(nm);
    CHECK(grid.channels() == 3);
    CHECK(grid(0, 0, 2) == -1.0);

    const ImageGrid color = normal_map_to_falsecolor(nm);
    CHECK(color(0, 0, 0) == 0.5);
    CHECK(color(0, 0, 1) == 0.5);
    CHECK(color(0, 0, 2) == 0.0);
    // Invalid pixels are black, not mid-gray.
    CHECK(color(1, 0, 0) == 0.0);
    CHECK(color(1, 0, 1) == 0.0);
    CHECK(color(1, 0, 2) == 0.0);
}
