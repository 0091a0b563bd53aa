#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmvs {

// Thrown when a file cannot be read/written or its contents are malformed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when an input violates a documented precondition or invariant.
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Depth value marking "no estimate".
inline constexpr double kInvalidDepth = 0.0;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

// Pinhole camera with a world-to-camera extrinsic and a plane-sweep
// depth range [depth_min, depth_min + (depth_count-1) * depth_interval].
template <typename Scalar>
struct CameraT {
    Matrix3<Scalar> K = Matrix3<Scalar>::Identity();
    Matrix3<Scalar> R = Matrix3<Scalar>::Identity();
    Vector3<Scalar> t = Vector3<Scalar>::Zero();
    Scalar depth_min = Scalar(1);
    Scalar depth_interval = Scalar(1);
    int depth_count = 1;

    Scalar depth_max() const { return depth_min + Scalar(depth_count - 1) * depth_interval; }
    Scalar hypothesis(int k) const { return depth_min + Scalar(k) * depth_interval; }

    // Camera center in world coordinates.
    Vector3<Scalar> center() const { return -(R.transpose() * t); }
};

using Camera = CameraT<double>;

// Relative rigid transform between two camera frames.
template <typename Scalar>
struct PoseT {
    Matrix3<Scalar> R = Matrix3<Scalar>::Identity();
    Vector3<Scalar> t = Vector3<Scalar>::Zero();

    static PoseT Identity() { return PoseT{}; }

    bool is_identity() const {
        return R == Matrix3<Scalar>::Identity() && t == Vector3<Scalar>::Zero();
    }

    PoseT inverse() const { return PoseT{R.transpose(), -(R.transpose() * t)}; }

    PoseT compose(const PoseT& rhs) const {
        return PoseT{R * rhs.R, R * rhs.t + t};
    }

    Vector3<Scalar> apply(const Vector3<Scalar>& p) const { return R * p + t; }
};

using Pose = PoseT<double>;

// Row-major pixel raster with interleaved channels. Internally a
// channels x (width*height) array whose columns are per-pixel vectors;
// column-major Eigen storage makes the memory layout exactly the
// row-major, channel-interleaved order the file formats use.
template <typename Scalar>
class ImageGridT {
public:
    using Index = Eigen::Index;
    using Data = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    ImageGridT() = default;

    ImageGridT(Index width, Index height, Index channels = 1, Scalar fill = Scalar(0))
        : width_(width), height_(height), channels_(channels),
          data_(Data::Constant(channels, width * height, fill)) {
        if (width <= 0 || height <= 0 || channels <= 0)
            throw InvalidInput("ImageGrid dimensions must be positive");
    }

    Index width() const { return width_; }
    Index height() const { return height_; }
    Index channels() const { return channels_; }
    Index pixel_count() const { return width_ * height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    bool same_shape(const ImageGridT& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    Index index(Index x, Index y) const { return y * width_ + x; }

    Scalar& operator()(Index x, Index y, Index c = 0) { return data_(c, index(x, y)); }
    Scalar operator()(Index x, Index y, Index c = 0) const { return data_(c, index(x, y)); }

    auto pixel(Index x, Index y) { return data_.col(index(x, y)); }
    auto pixel(Index x, Index y) const { return data_.col(index(x, y)); }

    // Channel plane as a 1 x pixel_count row expression.
    auto channel(Index c) { return data_.row(c); }
    auto channel(Index c) const { return data_.row(c); }

    Data& data() { return data_; }
    const Data& data() const { return data_; }

    void setConstant(Scalar v) { data_.setConstant(v); }

    template <typename Other>
    ImageGridT<Other> cast() const {
        ImageGridT<Other> out(width_, height_, channels_);
        out.data() = data_.template cast<Other>();
        return out;
    }

private:
    Index width_ = 0;
    Index height_ = 0;
    Index channels_ = 0;
    Data data_;
};

using ImageGrid = ImageGridT<double>;
using ImageGridf = ImageGridT<float>;

// Per-pixel validity flags tied to an ImageGrid of the same dimensions.
class Mask {
public:
    using Index = Eigen::Index;

    Mask() = default;
    Mask(Index width, Index height, bool fill = false)
        : width_(width), height_(height),
          data_(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(width * height, fill)) {}

    Index width() const { return width_; }
    Index height() const { return height_; }
    Index size() const { return width_ * height_; }

    bool operator()(Index x, Index y) const { return data_[y * width_ + x]; }
    void set(Index x, Index y, bool v) { data_[y * width_ + x] = v; }

    bool at_index(Index i) const { return data_[i]; }
    void set_index(Index i, bool v) { data_[i] = v; }

    Index count() const { return data_.count(); }
    bool all() const { return data_.all(); }
    bool none() const { return !data_.any(); }

private:
    Index width_ = 0;
    Index height_ = 0;
    Eigen::Array<bool, Eigen::Dynamic, 1> data_;
};

// Unit normals per pixel; invalid pixels carry (0,0,0).
struct NormalMap {
    Eigen::Index width = 0;
    Eigen::Index height = 0;
    Eigen::Matrix<double, 3, Eigen::Dynamic> normals;  // column per pixel
    Mask valid;

    NormalMap() = default;
    NormalMap(Eigen::Index w, Eigen::Index h)
        : width(w), height(h),
          normals(Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, w * h)),
          valid(w, h, false) {}

    Eigen::Index index(Eigen::Index x, Eigen::Index y) const { return y * width + x; }
    auto normal(Eigen::Index x, Eigen::Index y) { return normals.col(index(x, y)); }
    auto normal(Eigen::Index x, Eigen::Index y) const { return normals.col(index(x, y)); }
};

struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> colors;  // empty, or one RGB triple in [0,1] per point

    bool has_colors() const { return !colors.empty(); }
    std::size_t size() const { return points.size(); }
};

struct View {
    ImageGrid image;
    Camera camera;
};

// One reference view plus its source views.
struct Scene {
    View reference;
    std::vector<View> sources;
};

}  // namespace mmvs
