#include "mmvs/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mmvs;

namespace {

Camera make_camera(double fx, double fy, double cx, double cy) {
    Camera cam;
    cam.K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    cam.R = Eigen::Matrix3d::Identity();
    cam.t = Eigen::Vector3d::Zero();
    cam.depth_min = 1.0;
    cam.depth_interval = 1.0;
    cam.depth_count = 8;
    return cam;
}

Eigen::Matrix3d random_rotation(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    while (q.norm() < 1e-3) q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng));
    return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("backproject inverts the intrinsics") {
    const Camera eye = make_camera(1, 1, 0, 0);
    const Eigen::Vector3d p = backproject(eye, Eigen::Vector2d(0, 0), 5.0);
    CHECK(p.isApprox(Eigen::Vector3d(0, 0, 5), 1e-14));

    const Camera cam = make_camera(2, 2, 1, 1);
    const Eigen::Vector3d q = backproject(cam, Eigen::Vector2d(1, 1), 4.0);
    CHECK(q.isApprox(Eigen::Vector3d(0, 0, 4), 1e-14));

    CHECK_THROWS_AS(backproject(cam, Eigen::Vector2d(1, 1), 0.0), InvalidInput);
}

TEST_CASE("project composed with backproject is the identity") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> pix(0.0, 64.0);
    std::uniform_real_distribution<double> dep(0.5, 900.0);
    std::uniform_real_distribution<double> foc(50.0, 200.0);
    for (int i = 0; i < 2000; ++i) {
        const Camera cam = make_camera(foc(rng), foc(rng), pix(rng), pix(rng));
        const Eigen::Vector2d p(pix(rng), pix(rng));
        const double d = dep(rng);
        const Eigen::Vector2d back = project(cam, backproject(cam, p, d));
        CHECK((back - p).norm() < 1e-9);
    }
}

TEST_CASE("reproject with identical cameras returns the input pixel exactly") {
    const Camera cam = make_camera(100, 100, 32, 32);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 63.0);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector2d p(u(rng), u(rng));
        const double d = 1.0 + u(rng);
        const Reprojection r = reproject(cam, cam, p, d);
        CHECK(r.valid);
        CHECK(r.pixel.x() == p.x());
        CHECK(r.pixel.y() == p.y());
        CHECK(r.depth == d);
    }
}

TEST_CASE("reproject matches hand arithmetic for a pure translation") {
    const Camera ref = make_camera(1, 1, 0, 0);
    Camera src = ref;
    src.t = Eigen::Vector3d(0, 0, -1);

    const Reprojection r = reproject(ref, src, Eigen::Vector2d(2, 3), 4.0);
    REQUIRE(r.valid);
    CHECK(r.pixel.x() == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
    CHECK(r.pixel.y() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.depth == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("reproject flags points at or behind the source camera") {
    const Camera ref = make_camera(1, 1, 0, 0);
    Camera src = ref;
    src.t = Eigen::Vector3d(0, 0, -4);  // moves a depth-4 point onto the camera plane
    const Reprojection r = reproject(ref, src, Eigen::Vector2d(2, 3), 4.0);
    CHECK_FALSE(r.valid);
}

TEST_CASE("relative pose agrees with chaining the extrinsics") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 50; ++i) {
        Camera a = make_camera(100, 100, 16, 16);
        a.R = random_rotation(rng);
        a.t = Eigen::Vector3d(u(rng), u(rng), u(rng));
        Camera b = a;
        b.R = random_rotation(rng);
        b.t = Eigen::Vector3d(u(rng), u(rng), u(rng));
        const Pose rel = relative_pose(a, b);
        const Eigen::Vector3d world(u(rng), u(rng), u(rng));
        const Eigen::Vector3d in_a = a.R * world + a.t;
        const Eigen::Vector3d in_b = b.R * world + b.t;
        CHECK((rel.apply(in_a) - in_b).norm() < 1e-10);
    }
}

TEST_CASE("bilinear sampling fixtures") {
    ImageGrid grid(4, 3, 1);
    for (Eigen::Index y = 0; y < 3; ++y)
        for (Eigen::Index x = 0; x < 4; ++x) grid(x, y) = double(10 * (y * 4 + x));

    SUBCASE("integer coordinates return stored values") {
        const Sample s = bilinear_sample(grid, {3.0, 2.0});
        CHECK(s.valid);
        CHECK(s.value(0) == grid(3, 2));
    }
    SUBCASE("midpoint between 10 and 20 is 15") {
        ImageGrid row(2, 1, 1);
        row(0, 0) = 10.0;
        row(1, 0) = 20.0;
        const Sample s = bilinear_sample(row, {0.5, 0.0});
        CHECK(s.valid);
        CHECK(s.value(0) == 15.0);
    }
    SUBCASE("outside the domain is masked with value zero") {
        const Sample s = bilinear_sample(grid, {-0.01, 5.0});
        CHECK_FALSE(s.valid);
        CHECK(s.value(0) == 0.0);
    }
    SUBCASE("the far corner uses the last cell with fraction one") {
        const Sample s = bilinear_sample(grid, {3.0, 2.0});
        CHECK(s.valid);
        CHECK(s.value(0) == grid(3, 2));
    }
}

TEST_CASE("bilinear jacobian matches central differences away from creases") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    ImageGrid grid(8, 8, 2);
    for (Eigen::Index i = 0; i < grid.data().size(); ++i) *(grid.data().data() + i) = val(rng);

    std::uniform_real_distribution<double> pos(0.1, 6.9);
    const double h = 1e-3;
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector2d p(pos(rng), pos(rng));
        const double dist_x = std::abs(p.x() - std::round(p.x()));
        const double dist_y = std::abs(p.y() - std::round(p.y()));
        if (dist_x < 2 * h || dist_y < 2 * h) continue;  // crease guard
        const SampleJacobian j = bilinear_sample_with_jacobian(grid, p);
        REQUIRE(j.valid);
        const Eigen::VectorXd fdx = (bilinear_sample(grid, {p.x() + h, p.y()}).value -
                                     bilinear_sample(grid, {p.x() - h, p.y()}).value) /
                                    (2 * h);
        const Eigen::VectorXd fdy = (bilinear_sample(grid, {p.x(), p.y() + h}).value -
                                     bilinear_sample(grid, {p.x(), p.y() - h}).value) /
                                    (2 * h);
        CHECK((j.ddx - fdx).cwiseAbs().maxCoeff() < 1e-4);
        CHECK((j.ddy - fdy).cwiseAbs().maxCoeff() < 1e-4);
        ++checked;
    }
    CHECK(checked > 300);
}

TEST_CASE("warp with the reference camera is the exact identity") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    ImageGrid src(6, 5, 3);
    for (Eigen::Index i = 0; i < src.data().size(); ++i) *(src.data().data() + i) = val(rng);
    const Camera cam = make_camera(100, 100, 2.5, 2.0);

    ImageGrid depth(6, 5, 1, 7.0);
    const WarpResult w = warp_image(src, cam, cam, depth);
    CHECK(w.mask.all());
    CHECK((w.image.data() == src.data()).all());
}

TEST_CASE("warp with an all-invalid depth map masks everything") {
    ImageGrid src(4, 4, 1, 0.5);
    const Camera cam = make_camera(10, 10, 1.5, 1.5);
    ImageGrid depth(4, 4, 1, kInvalidDepth);
    const WarpResult w = warp_image(src, cam, cam, depth);
    CHECK(w.mask.none());
    CHECK((w.image.data() == 0.0).all());
}

TEST_CASE("valid warp samples keep all bilinear support inside the grid") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    ImageGrid src(9, 7, 1);
    for (Eigen::Index i = 0; i < src.data().size(); ++i) *(src.data().data() + i) = val(rng);

    const Camera ref = make_camera(20, 20, 4, 3);
    Camera src_cam = ref;
    src_cam.t = Eigen::Vector3d(0.8, -0.3, 0.1);

    ImageGrid depth(9, 7, 1);
    std::uniform_real_distribution<double> dep(3.0, 9.0);
    for (Eigen::Index i = 0; i < depth.data().size(); ++i) *(depth.data().data() + i) = dep(rng);

    const WarpResult w = warp_image(src, ref, src_cam, depth);
    for (Eigen::Index y = 0; y < 7; ++y)
        for (Eigen::Index x = 0; x < 9; ++x) {
            if (!w.mask(x, y)) continue;
            const Reprojection r =
                reproject(ref, src_cam, Eigen::Vector2d(double(x), double(y)), depth(x, y));
            REQUIRE(r.valid);
            CHECK(r.pixel.x() >= 0.0);
            CHECK(r.pixel.x() <= 8.0);
            CHECK(r.pixel.y() >= 0.0);
            CHECK(r.pixel.y() <= 6.0);
        }
}

TEST_CASE("hypothesis warp equals the constant-depth per-pixel warp") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    ImageGrid src(12, 10, 2);
    for (Eigen::Index i = 0; i < src.data().size(); ++i) *(src.data().data() + i) = val(rng);

    Camera ref = make_camera(30, 30, 5.5, 4.5);
    Camera cam_src = ref;
    cam_src.R = Eigen::AngleAxisd(0.05, Eigen::Vector3d(0, 1, 0).normalized()).toRotationMatrix();
    cam_src.t = Eigen::Vector3d(1.0, 0.2, -0.1);

    for (double d : {4.0, 7.5, 20.0}) {
        const WarpResult per_pixel = warp_image(src, ref, cam_src, ImageGrid(12, 10, 1, d));
        const WarpResult homography = warp_at_hypothesis(src, ref, cam_src, d);
        REQUIRE(per_pixel.mask.count() == homography.mask.count());
        for (Eigen::Index i = 0; i < per_pixel.image.data().size(); ++i)
            CHECK(std::abs(*(per_pixel.image.data().data() + i) -
                           *(homography.image.data().data() + i)) < 1e-6);
    }
}

TEST_CASE("plane sweep homography reproduces reprojection at the plane depth") {
    Camera ref = make_camera(100, 100, 32, 32);
    Camera src = ref;
    src.R = Eigen::AngleAxisd(0.1, Eigen::Vector3d(1, 2, 0).normalized()).toRotationMatrix();
    src.t = Eigen::Vector3d(2, -1, 0.5);

    const double d = 12.0;
    const Eigen::Matrix3d H = plane_sweep_homography(ref, src, d);
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u(0.0, 63.0);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector2d p(u(rng), u(rng));
        const Eigen::Vector3d q = H * Eigen::Vector3d(p.x(), p.y(), 1.0);
        const Reprojection r = reproject(ref, src, p, d);
        REQUIRE(r.valid);
        CHECK((Eigen::Vector2d(q.x() / q.z(), q.y() / q.z()) - r.pixel).norm() < 1e-9);
    }
}

TEST_CASE("warp jacobian tracks the finite-difference depth sensitivity") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    ImageGrid src(24, 18, 1);
    for (Eigen::Index i = 0; i < src.data().size(); ++i) *(src.data().data() + i) = val(rng);

    Camera ref = make_camera(40, 40, 7.5, 6.5);
    Camera cam_src = ref;
    cam_src.t = Eigen::Vector3d(1.5, 0.5, 0.0);

    ImageGrid depth(24, 18, 1, 8.0);
    const WarpJacobianResult wj = warp_image_with_jacobian(src, ref, cam_src, depth);
    const double h = 1e-5;
    int agreements = 0, total = 0;
    for (Eigen::Index y = 0; y < 18; ++y)
        for (Eigen::Index x = 0; x < 24; ++x) {
            if (!wj.mask(x, y)) continue;
            ImageGrid dp = depth, dm = depth;
            dp(x, y) += h;
            dm(x, y) -= h;
            const WarpResult wp = warp_image(src, ref, cam_src, dp);
            const WarpResult wm = warp_image(src, ref, cam_src, dm);
            if (!wp.mask(x, y) || !wm.mask(x, y)) continue;
            const double fd = (wp.image(x, y) - wm.image(x, y)) / (2 * h);
            ++total;
            if (std::abs(fd - wj.ddepth(x, y)) <
                1e-3 * std::max({1.0, std::abs(fd), std::abs(wj.ddepth(x, y))}))
                ++agreements;
        }
    REQUIRE(total > 100);
    // Bilinear creases make a few samples disagree; the bulk must match.
    CHECK(double(agreements) / double(total) > 0.9);
}

TEST_CASE("identity warp jacobian is exactly zero") {
    ImageGrid src(5, 5, 1, 0.3);
    const Camera cam = make_camera(25, 25, 2, 2);
    const WarpJacobianResult wj = warp_image_with_jacobian(src, cam, cam, ImageGrid(5, 5, 1, 3.0));
    CHECK(wj.mask.all());
    CHECK((wj.ddepth.data() == 0.0).all());
}

TEST_CASE("camera validation rejects broken inputs") {
    Camera cam = make_camera(100, 100, 32, 32);
    CHECK_NOTHROW(validate_camera(cam));

    SUBCASE("reflection extrinsic") {
        Camera bad = cam;
        bad.R = Eigen::Matrix3d::Identity();
        bad.R(0, 0) = -1.0;  // determinant -1
        CHECK_THROWS_WITH_AS(validate_camera(bad),
                             doctest::Contains("extrinsic not a rotation"), InvalidInput);
    }
    SUBCASE("non-orthonormal extrinsic") {
        Camera bad = cam;
        bad.R(0, 1) = 0.5;
        CHECK_THROWS_AS(validate_camera(bad), InvalidInput);
    }
    SUBCASE("negative focal length") {
        Camera bad = cam;
        bad.K(0, 0) = -1.0;
        CHECK_THROWS_AS(validate_camera(bad), InvalidInput);
    }
    SUBCASE("lower-triangular intrinsics") {
        Camera bad = cam;
        bad.K(1, 0) = 2.0;
        CHECK_THROWS_AS(validate_camera(bad), InvalidInput);
    }
    SUBCASE("non-positive depth range") {
        Camera bad = cam;
        bad.depth_min = 0.0;
        CHECK_THROWS_AS(validate_camera(bad), InvalidInput);
    }
}

TEST_CASE("scaled cameras scale projections") {
    const Camera cam = make_camera(100, 100, 31.5, 23.5);
    const Camera half = scale_camera(cam, 0.5);
    const Eigen::Vector3d P(3.0, -2.0, 10.0);
    const Eigen::Vector2d p = project(cam, P);
    const Eigen::Vector2d q = project(half, P);
    CHECK((q - 0.5 * p).norm() < 1e-12);
}
