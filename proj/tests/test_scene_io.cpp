#include "mmvs/scene_io.hpp"

#include <doctest.h>

#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

using namespace mmvs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("mmvs_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

const char* kCameraText =
    "extrinsic\n"
    "1 0 0 0\n"
    "0 1 0 0\n"
    "0 0 1 0\n"
    "0 0 0 1\n"
    "\n"
    "intrinsic\n"
    "100 0 32\n"
    "0 100 32\n"
    "0 0 1\n"
    "\n"
    "425 2.65 192\n";

}  // namespace

TEST_CASE("camera file parsing extracts all blocks") {
    TempDir dir;
    const fs::path p = dir.path / "cam.txt";
    write_text(p, kCameraText);

    const Camera cam = load_camera(p);
    CHECK(cam.K(0, 0) == 100.0);
    CHECK(cam.K(0, 2) == 32.0);
    CHECK(cam.K(1, 2) == 32.0);
    CHECK(cam.R == Eigen::Matrix3d::Identity());
    CHECK(cam.t == Eigen::Vector3d::Zero());
    CHECK(cam.depth_min == 425.0);
    CHECK(cam.depth_interval == 2.65);
    CHECK(cam.depth_count == 192);
    CHECK(cam.depth_max() == doctest::Approx(425.0 + 2.65 * 191).epsilon(1e-14));
}

TEST_CASE("identity camera file round trips") {
    TempDir dir;
    const fs::path p = dir.path / "cam.txt";
    write_text(p,
               "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\n"
               "intrinsic\n1 0 0\n0 1 0\n0 0 1\n\n1 1 1\n");
    const Camera cam = load_camera(p);
    CHECK(cam.K == Eigen::Matrix3d::Identity());
    CHECK(cam.depth_count == 1);

    const fs::path q = dir.path / "roundtrip.txt";
    save_camera(cam, q);
    const Camera again = load_camera(q);
    CHECK(again.K == cam.K);
    CHECK(again.R == cam.R);
    CHECK(again.t == cam.t);
    CHECK(again.depth_min == cam.depth_min);
    CHECK(again.depth_interval == cam.depth_interval);
    CHECK(again.depth_count == cam.depth_count);
}

TEST_CASE("camera with a reflection extrinsic is rejected") {
    TempDir dir;
    const fs::path p = dir.path / "cam.txt";
    write_text(p,
               "extrinsic\n-1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\n"
               "intrinsic\n100 0 32\n0 100 32\n0 0 1\n\n425 2.65 192\n");
    CHECK_THROWS_WITH_AS(load_camera(p), doctest::Contains("extrinsic not a rotation"),
                         InvalidInput);
}

TEST_CASE("camera files with malformed numbers name the offending line") {
    TempDir dir;
    const fs::path p = dir.path / "cam.txt";
    write_text(p,
               "extrinsic\n1 0 0 0\n0 1 0 zero\n0 0 1 0\n0 0 0 1\n\n"
               "intrinsic\n1 0 0\n0 1 0\n0 0 1\n\n1 1 1\n");
    CHECK_THROWS_WITH_AS(load_camera(p), doctest::Contains(":3"), IoError);
}

TEST_CASE("8-bit images map to [0,1] and round trip within 1/255") {
    TempDir dir;

    SUBCASE("all-black and all-white PNG") {
        ImageGrid black(4, 4, 3, 0.0);
        const fs::path p = dir.path / "black.png";
        save_image(black, p);
        CHECK((load_image(p).data() == 0.0).all());

        ImageGrid white(4, 4, 1, 1.0);
        const fs::path q = dir.path / "white.png";
        save_image(white, q);
        CHECK((load_image(q).data() == 1.0).all());
    }

    SUBCASE("a 256-step ramp loads as k/255") {
        std::string pgm = "P5\n256 1\n255\n";
        for (int k = 0; k < 256; ++k) pgm.push_back(char(k));
        const fs::path p = dir.path / "ramp.pgm";
        write_text(p, pgm);
        const ImageGrid ramp = load_image(p);
        REQUIRE(ramp.width() == 256);
        for (int k = 0; k < 256; ++k) CHECK(ramp(k, 0) == double(k) / 255.0);
    }

    SUBCASE("random color image round trips through PNG and PPM") {
        std::mt19937 rng(99);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ImageGrid img(13, 9, 3);
        for (Eigen::Index i = 0; i < img.data().size(); ++i) *(img.data().data() + i) = u(rng);
        for (const char* name : {"rt.png", "rt.ppm"}) {
            const fs::path p = dir.path / name;
            save_image(img, p);
            const ImageGrid back = load_image(p);
            REQUIRE(back.same_shape(img));
            CHECK((back.data() - img.data()).abs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
        }
    }

    SUBCASE("unsupported extension errors") {
        CHECK_THROWS_AS(save_image(ImageGrid(2, 2, 1, 0.0), dir.path / "img.tiff"), IoError);
    }
}

TEST_CASE("depth PFM round trips bit-exactly") {
    TempDir dir;
    ImageGrid grid(2, 2, 1);
    grid(0, 0) = 1.0;
    grid(1, 0) = 2.0;
    grid(0, 1) = 3.0;
    grid(1, 1) = 4.0;
    const fs::path p = dir.path / "depth.pfm";
    save_depth_pfm(grid, p);
    const ImageGrid back = load_depth_pfm(p);
    REQUIRE(back.same_shape(grid));
    CHECK((back.data() == grid.data()).all());
}

TEST_CASE("PFM headers and scanline order follow the format") {
    TempDir dir;
    const fs::path p = dir.path / "const.pfm";
    save_depth_pfm(ImageGrid(160, 128, 1, 425.0), p);

    std::ifstream in(p, std::ios::binary);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l1 == "Pf");
    CHECK(l2 == "160 128");
    double scale = 0;
    in >> scale;
    CHECK(scale < 0.0);  // little-endian marker

    // Bottom-up payload: the first stored scanline is the bottom image row.
    ImageGrid two_rows(1, 2, 1);
    two_rows(0, 0) = 7.0;  // top row (y = 0)
    two_rows(0, 1) = 9.0;  // bottom row
    const fs::path q = dir.path / "rows.pfm";
    save_depth_pfm(two_rows, q);
    std::ifstream rin(q, std::ios::binary);
    std::string skip;
    std::getline(rin, skip);
    std::getline(rin, skip);
    std::getline(rin, skip);
    float first = 0;
    rin.read(reinterpret_cast<char*>(&first), 4);
    CHECK(first == 9.0f);
}

TEST_CASE("PFM rejects NaN on save and truncated payloads on load") {
    TempDir dir;
    ImageGrid bad(2, 2, 1, 1.0);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(save_depth_pfm(bad, dir.path / "nan.pfm"), InvalidInput);

    const fs::path p = dir.path / "trunc.pfm";
    std::string body = "Pf\n4 4\n-1.0\n";
    body.append(2 * sizeof(float), '\0');  // 2 of the 16 declared floats
    write_text(p, body);
    CHECK_THROWS_AS(load_depth_pfm(p), IoError);
}

TEST_CASE("multi-channel float container round trips bit-exactly") {
    TempDir dir;

    SUBCASE("all-zero 4x4x8") {
        const fs::path p = dir.path / "zero.pfc";
        save_feature_map(ImageGrid(4, 4, 8, 0.0), p);
        const ImageGrid back = load_feature_map(p);
        REQUIRE(back.channels() == 8);
        CHECK((back.data() == 0.0).all());
    }

    SUBCASE("random 16x16x32") {
        std::mt19937 rng(123);
        std::normal_distribution<double> n(0.0, 3.0);
        ImageGrid grid(16, 16, 32);
        for (Eigen::Index i = 0; i < grid.data().size(); ++i)
            *(grid.data().data() + i) = double(float(n(rng)));
        const fs::path p = dir.path / "rand.pfc";
        save_feature_map(grid, p);
        const ImageGrid back = load_feature_map(p);
        REQUIRE(back.same_shape(grid));
        CHECK((back.data() == grid.data()).all());
    }

    SUBCASE("payload shorter than the declared channel count errors") {
        std::string body = "PFC\n2 1 8\n-1.0\n";
        body.append(2 * 7 * 4, '\0');  // 7 of 8 channels present
        const fs::path p = dir.path / "short.pfc";
        write_text(p, body);
        CHECK_THROWS_AS(load_feature_map(p), IoError);
    }
}

TEST_CASE("point clouds round trip through binary PLY") {
    TempDir dir;

    SUBCASE("empty cloud") {
        const fs::path p = dir.path / "empty.ply";
        save_pointcloud_ply(PointCloud{}, p);
        std::ifstream in(p, std::ios::binary);
        std::string header((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
        CHECK(header.find("element vertex 0") != std::string::npos);
        CHECK(load_pointcloud_ply(p).size() == 0);
    }

    SUBCASE("one colored point") {
        PointCloud cloud;
        cloud.points.push_back(Eigen::Vector3d(1, 2, 3));
        cloud.colors.push_back(Eigen::Vector3d(1.0, 0.0, 0.0));
        const fs::path p = dir.path / "one.ply";
        save_pointcloud_ply(cloud, p);
        const PointCloud back = load_pointcloud_ply(p);
        REQUIRE(back.size() == 1);
        REQUIRE(back.has_colors());
        CHECK(back.points[0] == Eigen::Vector3d(1, 2, 3));
        CHECK(back.colors[0] == Eigen::Vector3d(1.0, 0.0, 0.0));
    }

    SUBCASE("1000 random points round trip with float32 fidelity") {
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> u(-100.0, 100.0);
        PointCloud cloud;
        for (int i = 0; i < 1000; ++i) {
            // float-representable coordinates make the round trip bit-exact
            cloud.points.push_back(Eigen::Vector3d(double(float(u(rng))), double(float(u(rng))),
                                                   double(float(u(rng)))));
        }
        const fs::path p = dir.path / "rand.ply";
        save_pointcloud_ply(cloud, p);
        const PointCloud back = load_pointcloud_ply(p);
        REQUIRE(back.size() == cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(back.points[i] == cloud.points[i]);
    }

    SUBCASE("truncated vertex data errors") {
        PointCloud cloud;
        cloud.points.push_back(Eigen::Vector3d(1, 2, 3));
        cloud.points.push_back(Eigen::Vector3d(4, 5, 6));
        const fs::path p = dir.path / "full.ply";
        save_pointcloud_ply(cloud, p);
        std::ifstream in(p, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const fs::path q = dir.path / "cut.ply";
        write_text(q, bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(load_pointcloud_ply(q), IoError);
    }

    SUBCASE("ascii PLY is rejected") {
        const fs::path p = dir.path / "ascii.ply";
        write_text(p,
                   "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float "
                   "y\nproperty float z\nend_header\n1 2 3\n");
        CHECK_THROWS_AS(load_pointcloud_ply(p), IoError);
    }
}

TEST_CASE("atomic writes leave no temporary files behind") {
    TempDir dir;
    const fs::path p = dir.path / "report.txt";
    write_file_atomic(p, "total=1\n");
    write_file_atomic(p, "total=2\n");  // overwrite through rename

    std::ifstream in(p);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "total=2\n");

    int entries = 0;
    for (const auto& e : fs::directory_iterator(dir.path)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
}
