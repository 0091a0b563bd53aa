#include "mmvs/feature_pyramid.hpp"

#include "mmvs/parallel.hpp"
#include "mmvs/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mmvs {

namespace {

constexpr Eigen::Index kBlurRadius = 3;

Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) {
    return std::clamp<Eigen::Index>(i, 0, n - 1);
}

std::array<double, 2 * kBlurRadius + 1> gaussian_kernel(double sigma) {
    std::array<double, 2 * kBlurRadius + 1> k{};
    double sum = 0.0;
    for (Eigen::Index i = -kBlurRadius; i <= kBlurRadius; ++i) {
        const double w = std::exp(-0.5 * double(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + kBlurRadius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

// Mean over channels; single-channel images pass through.
ImageGrid to_intensity(const ImageGrid& image) {
    ImageGrid out(image.width(), image.height(), 1);
    for (Eigen::Index i = 0; i < image.pixel_count(); ++i)
        out.data()(0, i) = image.data().col(i).mean();
    return out;
}

}  // namespace

ImageGrid gaussian_blur(const ImageGrid& image, double sigma) {
    if (!(sigma > 0.0)) throw InvalidInput("gaussian_blur: sigma must be positive");
    const auto k = gaussian_kernel(sigma);
    const Eigen::Index w = image.width(), h = image.height(), c = image.channels();

    ImageGrid horiz(w, h, c);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            for (Eigen::Index ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (Eigen::Index i = -kBlurRadius; i <= kBlurRadius; ++i)
                    acc += k[static_cast<std::size_t>(i + kBlurRadius)] *
                           image(clamp_index(x + i, w), y, ch);
                horiz(x, y, ch) = acc;
            }
        }
    });

    ImageGrid out(w, h, c);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            for (Eigen::Index ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (Eigen::Index i = -kBlurRadius; i <= kBlurRadius; ++i)
                    acc += k[static_cast<std::size_t>(i + kBlurRadius)] *
                           horiz(x, clamp_index(y + i, h), ch);
                out(x, y, ch) = acc;
            }
        }
    });
    return out;
}

ImageGrid decimate_half(const ImageGrid& image) {
    const Eigen::Index w = (image.width() + 1) / 2;
    const Eigen::Index h = (image.height() + 1) / 2;
    ImageGrid out(w, h, image.channels());
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x)
            out.pixel(x, y) = image.pixel(2 * x, 2 * y);
    });
    return out;
}

ImageGrid handcrafted_features(const ImageGrid& image) {
    if (image.channels() != 1 && image.channels() != 3)
        throw InvalidInput("handcrafted_features: image must have 1 or 3 channels");
    const ImageGrid gray = to_intensity(image);
    const Eigen::Index w = gray.width(), h = gray.height();
    ImageGrid out(w, h, kHandcraftedChannels);

    auto at = [&](Eigen::Index x, Eigen::Index y) {
        return gray(clamp_index(x, w), clamp_index(y, h));
    };

    // Orientation axes for the census comparisons: E, NE, N, NW.
    constexpr Eigen::Index dirs[4][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1}};

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const double gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            const double gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            out(x, y, 0) = gray(x, y);
            out(x, y, 1) = gx;
            out(x, y, 2) = gy;
            out(x, y, 3) = std::hypot(gx, gy);
        }
    });

    // Census bit per orientation, then a 3x3 mean to make the channel
    // piecewise-smooth.
    ImageGrid census(w, h, 4);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x)
            for (int o = 0; o < 4; ++o) {
                const Eigen::Index dx = dirs[o][0], dy = dirs[o][1];
                census(x, y, o) = at(x + dx, y + dy) > at(x - dx, y - dy) ? 1.0 : 0.0;
            }
    });
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x)
            for (int o = 0; o < 4; ++o) {
                double acc = 0.0;
                for (Eigen::Index dy = -1; dy <= 1; ++dy)
                    for (Eigen::Index dx = -1; dx <= 1; ++dx)
                        acc += census(clamp_index(x + dx, w), clamp_index(y + dy, h), o);
                out(x, y, 4 + o) = acc / 9.0;
            }
    });
    return out;
}

void standardize_channels(ImageGrid& grid) {
    const double n = double(grid.pixel_count());
    for (Eigen::Index c = 0; c < grid.channels(); ++c) {
        const double mean = grid.channel(c).mean();
        const double var = (grid.channel(c) - mean).square().sum() / n;
        const double sigma = std::sqrt(std::max(var, 1e-8));
        grid.channel(c) = (grid.channel(c) - mean) / sigma;
    }
}

namespace {

void validate_scales(const std::vector<double>& scales) {
    if (scales.empty()) throw InvalidInput("pyramid scales list is empty");
    const std::vector<double> allowed = {0.5, 0.25, 0.125, 0.0625};
    double prev = 1.0;
    for (double s : scales) {
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::ostringstream err;
            err << "unsupported pyramid scale " << s << " (use 1/2, 1/4, 1/8, 1/16)";
            throw InvalidInput(err.str());
        }
        if (!(s < prev)) throw InvalidInput("pyramid scales must be strictly decreasing");
        prev = s;
    }
}

int octaves_for(double scale) {
    return static_cast<int>(std::lround(std::log2(1.0 / scale)));
}

}  // namespace

FeaturePyramid build_handcrafted_pyramid(const ImageGrid& image,
                                         const std::vector<double>& scales) {
    validate_scales(scales);
    FeaturePyramid pyr;
    ImageGrid current = image;
    int current_octave = 0;
    for (double s : scales) {
        const int target = octaves_for(s);
        while (current_octave < target) {
            current = decimate_half(gaussian_blur(current, 1.0));
            ++current_octave;
        }
        ImageGrid feat = handcrafted_features(current);
        standardize_channels(feat);
        pyr.levels.push_back({s, std::move(feat)});
    }
    return pyr;
}

FeaturePyramid attach_external_pyramid(const std::vector<std::filesystem::path>& paths,
                                       const std::vector<double>& scales,
                                       Eigen::Index base_width, Eigen::Index base_height) {
    validate_scales(scales);
    if (paths.size() != scales.size())
        throw InvalidInput("attach_external_pyramid: one file per scale required");
    FeaturePyramid pyr;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        ImageGrid grid = load_feature_map(paths[i]);
        const auto expect_w =
            static_cast<Eigen::Index>(std::ceil(double(base_width) * scales[i]));
        const auto expect_h =
            static_cast<Eigen::Index>(std::ceil(double(base_height) * scales[i]));
        if (grid.width() != expect_w || grid.height() != expect_h) {
            std::ostringstream err;
            err << paths[i].string() << ": level at scale " << scales[i] << " must be "
                << expect_w << "x" << expect_h << ", got " << grid.width() << "x"
                << grid.height();
            throw InvalidInput(err.str());
        }
        pyr.levels.push_back({scales[i], std::move(grid)});
    }
    return pyr;
}

}  // namespace mmvs
