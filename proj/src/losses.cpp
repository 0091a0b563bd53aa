#include "mmvs/losses.hpp"

#include "mmvs/geometry.hpp"
#include "mmvs/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace mmvs {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Subgradient of |.| with sign(0) = 0.
double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where) {
    if (!a.same_shape(b)) throw InvalidInput(std::string(where) + ": dimensions disagree");
}

// One-sided forward difference: value(a) - value(b), backward at the far
// border so ramps keep their slope everywhere.
void diff_pair(Eigen::Index i, Eigen::Index n, Eigen::Index& a, Eigen::Index& b) {
    if (i < n - 1) {
        a = i + 1;
        b = i;
    } else {
        a = i;
        b = i - 1;
    }
}

}  // namespace

void validate(const LossWeights& w) {
    const double all[] = {w.gamma1, w.gamma2, w.alpha1,  w.alpha2, w.alpha3, w.lambda1,
                          w.lambda2, w.lambda3, w.beta1, w.beta2,  w.beta3,  w.beta4};
    for (double v : all)
        if (v < 0.0) throw InvalidInput("loss weights must be non-negative");
    if (w.gamma1 == 0.0 && w.gamma2 == 0.0)
        throw InvalidInput("at least one of gamma1, gamma2 must be positive");
}

double beta_for_scale(const LossWeights& w, double scale) {
    if (scale == 0.5) return w.beta1;
    if (scale == 0.25) return w.beta2;
    if (scale == 0.125) return w.beta3;
    if (scale == 0.0625) return w.beta4;
    std::ostringstream err;
    err << "no feature weight for scale " << scale;
    throw InvalidInput(err.str());
}

ScenePyramids build_scene_pyramids(const Scene& scene, const std::vector<double>& scales) {
    ScenePyramids out;
    out.reference = build_handcrafted_pyramid(scene.reference.image, scales);
    out.sources.reserve(scene.sources.size());
    for (const auto& view : scene.sources)
        out.sources.push_back(build_handcrafted_pyramid(view.image, scales));
    return out;
}

// ---------------------------------------------------------------------------
// Photometric

LossTerm photometric_loss(const ImageGrid& ref, const ImageGrid& warped, const Mask& mask) {
    check_same_shape(ref, warped, "photometric_loss");
    const Eigen::Index w = ref.width(), h = ref.height(), c = ref.channels();
    const Eigen::Index m = mask.count();
    if (m == 0) return {0.0, 0};

    const double sum = parallel_row_sum(h, [&](Eigen::Index y) {
        double acc = 0.0;
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!mask(x, y)) continue;
            for (Eigen::Index ch = 0; ch < c; ++ch)
                acc += std::abs(ref(x, y, ch) - warped(x, y, ch));
            if (x + 1 < w && mask(x + 1, y))
                for (Eigen::Index ch = 0; ch < c; ++ch)
                    acc += std::abs((ref(x + 1, y, ch) - ref(x, y, ch)) -
                                    (warped(x + 1, y, ch) - warped(x, y, ch)));
            if (y + 1 < h && mask(x, y + 1))
                for (Eigen::Index ch = 0; ch < c; ++ch)
                    acc += std::abs((ref(x, y + 1, ch) - ref(x, y, ch)) -
                                    (warped(x, y + 1, ch) - warped(x, y, ch)));
        }
        return acc;
    });
    return {sum / double(m), m};
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

// Per-pixel 3x3 window statistics; valid only for interior windows whose
// nine pixels are all mask-valid.
struct SsimStats {
    ImageGrid mu_x, mu_y, var_x, var_y, cov;
    Mask valid;
    Eigen::Index m = 0;
};

SsimStats ssim_stats(const ImageGrid& ref, const ImageGrid& warped, const Mask& mask) {
    const Eigen::Index w = ref.width(), h = ref.height(), c = ref.channels();
    SsimStats s{ImageGrid(w, h, c), ImageGrid(w, h, c), ImageGrid(w, h, c),
                ImageGrid(w, h, c), ImageGrid(w, h, c), Mask(w, h, false), 0};

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) continue;
            bool ok = true;
            for (Eigen::Index dy = -1; ok && dy <= 1; ++dy)
                for (Eigen::Index dx = -1; dx <= 1; ++dx)
                    if (!mask(x + dx, y + dy)) {
                        ok = false;
                        break;
                    }
            if (!ok) continue;
            s.valid.set(x, y, true);
            for (Eigen::Index ch = 0; ch < c; ++ch) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (Eigen::Index dy = -1; dy <= 1; ++dy)
                    for (Eigen::Index dx = -1; dx <= 1; ++dx) {
                        const double a = ref(x + dx, y + dy, ch);
                        const double b = warped(x + dx, y + dy, ch);
                        sx += a;
                        sy += b;
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                const double mx = sx / 9.0, my = sy / 9.0;
                s.mu_x(x, y, ch) = mx;
                s.mu_y(x, y, ch) = my;
                s.var_x(x, y, ch) = sxx / 9.0 - mx * mx;
                s.var_y(x, y, ch) = syy / 9.0 - my * my;
                s.cov(x, y, ch) = sxy / 9.0 - mx * my;
            }
        }
    });
    s.m = s.valid.count();
    return s;
}

double ssim_value(const SsimStats& s, Eigen::Index x, Eigen::Index y, Eigen::Index ch) {
    const double mx = s.mu_x(x, y, ch), my = s.mu_y(x, y, ch);
    const double n1 = 2.0 * mx * my + kC1;
    const double d1 = mx * mx + my * my + kC1;
    const double n2 = 2.0 * s.cov(x, y, ch) + kC2;
    const double d2 = s.var_x(x, y, ch) + s.var_y(x, y, ch) + kC2;
    return (n1 * n2) / (d1 * d2);
}

}  // namespace

LossTerm ssim_loss(const ImageGrid& ref, const ImageGrid& warped, const Mask& mask) {
    check_same_shape(ref, warped, "ssim_loss");
    const SsimStats stats = ssim_stats(ref, warped, mask);
    if (stats.m == 0) return {0.0, 0};
    const Eigen::Index w = ref.width(), h = ref.height(), c = ref.channels();

    const double sum = parallel_row_sum(h, [&](Eigen::Index y) {
        double acc = 0.0;
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!stats.valid(x, y)) continue;
            double mean_s = 0.0;
            for (Eigen::Index ch = 0; ch < c; ++ch) mean_s += ssim_value(stats, x, y, ch);
            acc += (1.0 - mean_s / double(c)) / 2.0;
        }
        return acc;
    });
    return {sum / double(stats.m), stats.m};
}

// ---------------------------------------------------------------------------
// Smoothness

namespace {

double image_diff_mag(const ImageGrid& img, Eigen::Index ax, Eigen::Index bx, Eigen::Index ay,
                      Eigen::Index by) {
    double g = 0.0;
    for (Eigen::Index ch = 0; ch < img.channels(); ++ch)
        g += std::abs(img(ax, ay, ch) - img(bx, by, ch));
    return g;
}

double image_laplacian_mag(const ImageGrid& img, Eigen::Index x, Eigen::Index y) {
    double g = 0.0;
    for (Eigen::Index ch = 0; ch < img.channels(); ++ch)
        g += std::abs(img(x + 1, y, ch) + img(x - 1, y, ch) + img(x, y + 1, ch) +
                      img(x, y - 1, ch) - 4.0 * img(x, y, ch));
    return g;
}

double depth_laplacian(const ImageGrid& z, Eigen::Index x, Eigen::Index y) {
    return z(x + 1, y) + z(x - 1, y) + z(x, y + 1) + z(x, y - 1) - 4.0 * z(x, y);
}

}  // namespace

double smoothness_loss(const ImageGrid& depth, const ImageGrid& ref, double alpha2,
                       double alpha3) {
    if (depth.channels() != 1) throw InvalidInput("smoothness_loss: depth must be single-channel");
    if (depth.width() != ref.width() || depth.height() != ref.height())
        throw InvalidInput("smoothness_loss: dimensions disagree");
    const Eigen::Index w = depth.width(), h = depth.height();

    const double sum = parallel_row_sum(h, [&](Eigen::Index y) {
        double acc = 0.0;
        for (Eigen::Index x = 0; x < w; ++x) {
            if (w > 1) {
                Eigen::Index a, b;
                diff_pair(x, w, a, b);
                acc += std::exp(-alpha2 * image_diff_mag(ref, a, b, y, y)) *
                       std::abs(depth(a, y) - depth(b, y));
            }
            if (h > 1) {
                Eigen::Index a, b;
                diff_pair(y, h, a, b);
                acc += std::exp(-alpha2 * image_diff_mag(ref, x, x, a, b)) *
                       std::abs(depth(x, a) - depth(x, b));
            }
            if (x > 0 && y > 0 && x < w - 1 && y < h - 1)
                acc += std::exp(-alpha3 * image_laplacian_mag(ref, x, y)) *
                       std::abs(depth_laplacian(depth, x, y));
        }
        return acc;
    });
    return sum / double(depth.pixel_count());
}

// ---------------------------------------------------------------------------
// Feature loss

ImageGrid downsample_depth_half(const ImageGrid& depth) {
    if (depth.channels() != 1)
        throw InvalidInput("downsample_depth_half: depth must be single-channel");
    const Eigen::Index w2 = (depth.width() + 1) / 2;
    const Eigen::Index h2 = (depth.height() + 1) / 2;
    ImageGrid out(w2, h2, 1, kInvalidDepth);
    parallel_rows(h2, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w2; ++x) {
            double sum = 0.0;
            int n = 0;
            for (Eigen::Index dy = 0; dy < 2; ++dy)
                for (Eigen::Index dx = 0; dx < 2; ++dx) {
                    const Eigen::Index sx = 2 * x + dx, sy = 2 * y + dy;
                    if (sx >= depth.width() || sy >= depth.height()) continue;
                    const double z = depth(sx, sy);
                    if (z > 0.0) {
                        sum += z;
                        ++n;
                    }
                }
            if (n > 0) out(x, y) = sum / double(n);
        }
    });
    return out;
}

namespace {

int octaves_for_scale(double scale) {
    return static_cast<int>(std::lround(std::log2(1.0 / scale)));
}

// Depth downsampled once per octave, with the valid-entry count of each
// cell kept for distributing gradients back to the base resolution.
struct DepthChain {
    std::vector<ImageGrid> levels;  // levels[0] = base
    std::vector<ImageGrid> counts;  // counts[o]: valid entries per cell of levels[o], o >= 1
};

DepthChain build_depth_chain(const ImageGrid& depth, int max_octaves) {
    DepthChain chain;
    chain.levels.push_back(depth);
    chain.counts.emplace_back();  // unused slot for octave 0
    for (int o = 1; o <= max_octaves; ++o) {
        const ImageGrid& fine = chain.levels.back();
        ImageGrid coarse = downsample_depth_half(fine);
        ImageGrid count(coarse.width(), coarse.height(), 1, 0.0);
        for (Eigen::Index y = 0; y < coarse.height(); ++y)
            for (Eigen::Index x = 0; x < coarse.width(); ++x) {
                int n = 0;
                for (Eigen::Index dy = 0; dy < 2; ++dy)
                    for (Eigen::Index dx = 0; dx < 2; ++dx) {
                        const Eigen::Index sx = 2 * x + dx, sy = 2 * y + dy;
                        if (sx < fine.width() && sy < fine.height() && fine(sx, sy) > 0.0) ++n;
                    }
                count(x, y) = double(n);
            }
        chain.counts.push_back(std::move(count));
        chain.levels.push_back(std::move(coarse));
    }
    return chain;
}

// Pulls a gradient at chain octave `octave` back to the base resolution:
// each cell's gradient splits equally among the valid entries of its block.
ImageGrid backprop_depth_chain(const DepthChain& chain, const ImageGrid& grad, int octave) {
    ImageGrid g = grad;
    for (int o = octave; o >= 1; --o) {
        const ImageGrid& fine = chain.levels[static_cast<std::size_t>(o - 1)];
        const ImageGrid& count = chain.counts[static_cast<std::size_t>(o)];
        ImageGrid gf(fine.width(), fine.height(), 1, 0.0);
        const ImageGrid& gc = g;
        parallel_rows(fine.height(), [&](Eigen::Index y) {
            for (Eigen::Index x = 0; x < fine.width(); ++x) {
                if (!(fine(x, y) > 0.0)) continue;
                const Eigen::Index cx = x / 2, cy = y / 2;
                const double n = count(cx, cy);
                if (n > 0.0) gf(x, y) = gc(cx, cy) / n;
            }
        });
        g = std::move(gf);
    }
    return g;
}

void check_scale_sets(const FeaturePyramid& ref_pyr,
                      const std::vector<FeaturePyramid>& src_pyrs) {
    for (const auto& src : src_pyrs) {
        if (src.levels.size() != ref_pyr.levels.size())
            throw InvalidInput("feature pyramids have mismatched scale sets");
        for (std::size_t i = 0; i < src.levels.size(); ++i)
            if (src.levels[i].scale != ref_pyr.levels[i].scale)
                throw InvalidInput("feature pyramids have mismatched scale sets");
    }
}

}  // namespace

FeatureLossResult feature_loss(const FeaturePyramid& ref_pyr,
                               const std::vector<FeaturePyramid>& src_pyrs,
                               const Camera& cam_ref, const std::vector<Camera>& src_cams,
                               const ImageGrid& depth, const LossWeights& weights) {
    if (src_pyrs.empty()) throw InvalidInput("feature_loss: no source pyramids");
    if (src_pyrs.size() != src_cams.size())
        throw InvalidInput("feature_loss: one camera per source pyramid required");
    check_scale_sets(ref_pyr, src_pyrs);

    int max_oct = 0;
    for (const auto& level : ref_pyr.levels)
        max_oct = std::max(max_oct, octaves_for_scale(level.scale));
    const DepthChain chain = build_depth_chain(depth, max_oct);
    const double V = double(src_pyrs.size());

    FeatureLossResult out;
    for (std::size_t li = 0; li < ref_pyr.levels.size(); ++li) {
        const auto& level = ref_pyr.levels[li];
        const int oct = octaves_for_scale(level.scale);
        const ImageGrid& depth_s = chain.levels[static_cast<std::size_t>(oct)];
        const Camera ref_s = scale_camera(cam_ref, level.scale);
        const Eigen::Index c = level.grid.channels();

        double view_sum = 0.0;
        Eigen::Index m_total = 0;
        for (std::size_t v = 0; v < src_pyrs.size(); ++v) {
            const Camera src_s = scale_camera(src_cams[v], level.scale);
            const WarpResult wr =
                warp_image(src_pyrs[v].levels[li].grid, ref_s, src_s, depth_s);
            const Eigen::Index m = wr.mask.count();
            if (m == 0) continue;
            const double sum = parallel_row_sum(depth_s.height(), [&](Eigen::Index y) {
                double acc = 0.0;
                for (Eigen::Index x = 0; x < depth_s.width(); ++x) {
                    if (!wr.mask(x, y)) continue;
                    double diff = 0.0;
                    for (Eigen::Index ch = 0; ch < c; ++ch)
                        diff += std::abs(level.grid(x, y, ch) - wr.image(x, y, ch));
                    acc += diff / double(c);
                }
                return acc;
            });
            view_sum += sum / double(m);
            m_total += m;
        }
        const double level_loss = view_sum / V;
        out.per_scale.emplace_back(level.scale, LossTerm{level_loss, m_total});
        out.total += beta_for_scale(weights, level.scale) * level_loss;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Total loss

LossBreakdown total_loss(const Scene& scene, const ImageGrid& depth,
                         const ScenePyramids& pyramids, const LossWeights& weights) {
    validate(weights);
    if (scene.sources.empty()) throw InvalidInput("total_loss: scene has no source views");
    if (depth.channels() != 1) throw InvalidInput("total_loss: depth must be single-channel");

    LossBreakdown bd;
    bd.n = depth.pixel_count();
    const double V = double(scene.sources.size());

    bool any_valid = false;
    std::vector<Camera> src_cams;
    for (const auto& view : scene.sources) {
        const WarpResult wr = warp_image(view.image, scene.reference.camera, view.camera, depth);
        const LossTerm pt = photometric_loss(scene.reference.image, wr.image, wr.mask);
        const LossTerm st = ssim_loss(scene.reference.image, wr.image, wr.mask);
        bd.photo += pt.value / V;
        bd.ssim += st.value / V;
        bd.m += pt.m;
        if (pt.m > 0) any_valid = true;
        src_cams.push_back(view.camera);
    }
    bd.degenerate = !any_valid;

    bd.smooth = smoothness_loss(depth, scene.reference.image, weights.alpha2, weights.alpha3);

    const FeatureLossResult fl = feature_loss(pyramids.reference, pyramids.sources,
                                              scene.reference.camera, src_cams, depth, weights);
    for (const auto& [scale, term] : fl.per_scale)
        bd.feature_per_scale.emplace_back(scale, term.value);
    bd.feature_total = fl.total;

    bd.pixel_total =
        weights.lambda1 * bd.photo + weights.lambda2 * bd.ssim + weights.lambda3 * bd.smooth;
    bd.total = weights.gamma1 * bd.pixel_total + weights.gamma2 * bd.feature_total;
    return bd;
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

// d(photometric)/dZ for one view, gathered per pixel (scaled by 1/(m*V)).
void add_photometric_gradient(const ImageGrid& ref, const WarpJacobianResult& wj,
                              double scale_factor, ImageGrid& grad) {
    const Eigen::Index w = ref.width(), h = ref.height(), c = ref.channels();
    constexpr Eigen::Index dirs[2][2] = {{1, 0}, {0, 1}};

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!wj.mask(x, y)) continue;
            double acc = 0.0;
            for (Eigen::Index ch = 0; ch < c; ++ch) {
                const double jac = wj.ddepth(x, y, ch);
                if (jac == 0.0) continue;
                double dw = -sgn(ref(x, y, ch) - wj.image(x, y, ch));
                for (const auto& d : dirs) {
                    const Eigen::Index nx = x + d[0], ny = y + d[1];
                    if (nx < w && ny < h && wj.mask(nx, ny)) {
                        const double s =
                            sgn((ref(nx, ny, ch) - ref(x, y, ch)) -
                                (wj.image(nx, ny, ch) - wj.image(x, y, ch)));
                        dw += s;
                    }
                    const Eigen::Index px = x - d[0], py = y - d[1];
                    if (px >= 0 && py >= 0 && wj.mask(px, py)) {
                        const double s =
                            sgn((ref(x, y, ch) - ref(px, py, ch)) -
                                (wj.image(x, y, ch) - wj.image(px, py, ch)));
                        dw -= s;
                    }
                }
                acc += dw * jac;
            }
            grad(x, y) += scale_factor * acc;
        }
    });
}

// d(ssim)/dZ for one view (scaled by 1/(m*V)).
void add_ssim_gradient(const ImageGrid& ref, const WarpJacobianResult& wj, double view_factor,
                       ImageGrid& grad) {
    const SsimStats stats = ssim_stats(ref, wj.image, wj.mask);
    if (stats.m == 0) return;
    const double scale_factor = view_factor / double(stats.m);
    const Eigen::Index w = ref.width(), h = ref.height(), c = ref.channels();

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!wj.mask(x, y)) continue;
            double acc = 0.0;
            for (Eigen::Index ch = 0; ch < c; ++ch) {
                const double jac = wj.ddepth(x, y, ch);
                if (jac == 0.0) continue;
                const double xu = ref(x, y, ch);
                const double yu = wj.image(x, y, ch);
                double dloss_dw = 0.0;
                for (Eigen::Index dy = -1; dy <= 1; ++dy)
                    for (Eigen::Index dx = -1; dx <= 1; ++dx) {
                        const Eigen::Index px = x + dx, py = y + dy;
                        if (px < 0 || py < 0 || px >= w || py >= h) continue;
                        if (!stats.valid(px, py)) continue;
                        const double mx = stats.mu_x(px, py, ch);
                        const double my = stats.mu_y(px, py, ch);
                        const double n1 = 2.0 * mx * my + kC1;
                        const double d1 = mx * mx + my * my + kC1;
                        const double n2 = 2.0 * stats.cov(px, py, ch) + kC2;
                        const double d2 =
                            stats.var_x(px, py, ch) + stats.var_y(px, py, ch) + kC2;
                        const double dn1 = 2.0 * mx / 9.0;
                        const double dd1 = 2.0 * my / 9.0;
                        const double dn2 = 2.0 / 9.0 * (xu - mx);
                        const double dd2 = 2.0 / 9.0 * (yu - my);
                        const double num = n1 * n2, den = d1 * d2;
                        const double ds =
                            ((dn1 * n2 + n1 * dn2) * den - num * (dd1 * d2 + d1 * dd2)) /
                            (den * den);
                        dloss_dw += -ds / (2.0 * double(c));
                    }
                acc += dloss_dw * jac;
            }
            grad(x, y) += scale_factor * acc;
        }
    });
}

// d(smoothness)/dZ, gathered per pixel (scaled by 1/n).
void add_smoothness_gradient(const ImageGrid& depth, const ImageGrid& ref, double alpha2,
                             double alpha3, ImageGrid& grad) {
    const Eigen::Index w = depth.width(), h = depth.height();
    const double inv_n = 1.0 / double(depth.pixel_count());

    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            double acc = 0.0;
            // First-order x terms at p in {x-1, x, x+1} that reference (x,y).
            if (w > 1) {
                for (Eigen::Index px = std::max<Eigen::Index>(x - 1, 0);
                     px <= std::min(x + 1, w - 1); ++px) {
                    Eigen::Index a, b;
                    diff_pair(px, w, a, b);
                    if (a != x && b != x) continue;
                    const double s = sgn(depth(a, y) - depth(b, y));
                    const double wt = std::exp(-alpha2 * image_diff_mag(ref, a, b, y, y));
                    acc += wt * s * (a == x ? 1.0 : -1.0);
                }
                // diff_pair aliases a==b only when w==1, excluded above.
            }
            if (h > 1) {
                for (Eigen::Index py = std::max<Eigen::Index>(y - 1, 0);
                     py <= std::min(y + 1, h - 1); ++py) {
                    Eigen::Index a, b;
                    diff_pair(py, h, a, b);
                    if (a != y && b != y) continue;
                    const double s = sgn(depth(x, a) - depth(x, b));
                    const double wt = std::exp(-alpha2 * image_diff_mag(ref, x, x, a, b));
                    acc += wt * s * (a == y ? 1.0 : -1.0);
                }
            }
            // Laplacian terms centered at (x,y) and its 4 neighbors.
            constexpr Eigen::Index stencil[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            for (const auto& d : stencil) {
                const Eigen::Index px = x + d[0], py = y + d[1];
                if (px < 1 || py < 1 || px >= w - 1 || py >= h - 1) continue;
                const double s = sgn(depth_laplacian(depth, px, py));
                const double wt = std::exp(-alpha3 * image_laplacian_mag(ref, px, py));
                acc += wt * s * ((d[0] == 0 && d[1] == 0) ? -4.0 : 1.0);
            }
            grad(x, y) += inv_n * acc;
        }
    });
}

}  // namespace

LossGradients loss_gradient_terms(const Scene& scene, const ImageGrid& depth,
                                  const ScenePyramids& pyramids, const LossWeights& weights) {
    validate(weights);
    if (scene.sources.empty())
        throw InvalidInput("loss_gradient_terms: scene has no source views");
    const Eigen::Index w = depth.width(), h = depth.height();
    LossGradients g{ImageGrid(w, h, 1, 0.0), ImageGrid(w, h, 1, 0.0), ImageGrid(w, h, 1, 0.0),
                    ImageGrid(w, h, 1, 0.0), ImageGrid(w, h, 1, 0.0)};
    const double V = double(scene.sources.size());

    for (const auto& view : scene.sources) {
        const WarpJacobianResult wj =
            warp_image_with_jacobian(view.image, scene.reference.camera, view.camera, depth);
        const Eigen::Index m = wj.mask.count();
        if (m == 0) continue;
        add_photometric_gradient(scene.reference.image, wj, 1.0 / (double(m) * V), g.photo);
        add_ssim_gradient(scene.reference.image, wj, 1.0 / V, g.ssim);
    }

    add_smoothness_gradient(depth, scene.reference.image, weights.alpha2, weights.alpha3,
                            g.smooth);

    int max_oct = 0;
    for (const auto& level : pyramids.reference.levels)
        max_oct = std::max(max_oct, octaves_for_scale(level.scale));
    const DepthChain chain = build_depth_chain(depth, max_oct);

    for (std::size_t li = 0; li < pyramids.reference.levels.size(); ++li) {
        const auto& level = pyramids.reference.levels[li];
        const double beta = beta_for_scale(weights, level.scale);
        if (beta == 0.0) continue;
        const int oct = octaves_for_scale(level.scale);
        const ImageGrid& depth_s = chain.levels[static_cast<std::size_t>(oct)];
        const Camera ref_s = scale_camera(scene.reference.camera, level.scale);
        const Eigen::Index c = level.grid.channels();

        for (std::size_t v = 0; v < pyramids.sources.size(); ++v) {
            const Camera src_s = scale_camera(scene.sources[v].camera, level.scale);
            const WarpJacobianResult wj = warp_image_with_jacobian(
                pyramids.sources[v].levels[li].grid, ref_s, src_s, depth_s);
            const Eigen::Index m = wj.mask.count();
            if (m == 0) continue;
            const double factor = beta / (double(m) * V * double(c));
            ImageGrid gl(depth_s.width(), depth_s.height(), 1, 0.0);
            parallel_rows(depth_s.height(), [&](Eigen::Index y) {
                for (Eigen::Index x = 0; x < depth_s.width(); ++x) {
                    if (!wj.mask(x, y)) continue;
                    double acc = 0.0;
                    for (Eigen::Index ch = 0; ch < c; ++ch)
                        acc += -sgn(level.grid(x, y, ch) - wj.image(x, y, ch)) *
                               wj.ddepth(x, y, ch);
                    gl(x, y) = factor * acc;
                }
            });
            const ImageGrid gb = backprop_depth_chain(chain, gl, oct);
            g.feature.data() += gb.data();
        }
    }

    g.total.data() = weights.gamma1 * (weights.lambda1 * g.photo.data() +
                                       weights.lambda2 * g.ssim.data() +
                                       weights.lambda3 * g.smooth.data()) +
                     weights.gamma2 * g.feature.data();
    return g;
}

ImageGrid loss_gradient(const Scene& scene, const ImageGrid& depth,
                        const ScenePyramids& pyramids, const LossWeights& weights) {
    return loss_gradient_terms(scene, depth, pyramids, weights).total;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

std::string scale_key(double scale) {
    if (scale == 0.5) return "feat_1_2";
    if (scale == 0.25) return "feat_1_4";
    if (scale == 0.125) return "feat_1_8";
    if (scale == 0.0625) return "feat_1_16";
    return "feat_unknown";
}

}  // namespace

std::string loss_report(const LossBreakdown& bd) {
    std::ostringstream out;
    out.precision(17);
    out << "photo=" << bd.photo << "\n";
    out << "ssim=" << bd.ssim << "\n";
    out << "smooth=" << bd.smooth << "\n";
    out << "pixel=" << bd.pixel_total << "\n";
    for (const auto& [scale, value] : bd.feature_per_scale)
        out << scale_key(scale) << "=" << value << "\n";
    out << "feature=" << bd.feature_total << "\n";
    out << "total=" << bd.total << "\n";
    out << "m=" << bd.m << "\n";
    out << "n=" << bd.n << "\n";
    if (bd.degenerate) out << "degenerate=1\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Gradient audit

namespace {

std::array<double, 5> term_values(const LossBreakdown& bd) {
    return {bd.photo, bd.ssim, bd.smooth, bd.feature_total, bd.total};
}

}  // namespace

double GradientAudit::worst_fraction() const {
    double worst = 1.0;
    for (const auto& t : terms) worst = std::min(worst, t.pass_fraction());
    return worst;
}

GradientAudit audit_loss_gradients(const Scene& scene, const ImageGrid& depth,
                                   const ScenePyramids& pyramids, const LossWeights& weights,
                                   int samples, unsigned seed) {
    if (samples <= 0) throw InvalidInput("audit_loss_gradients: samples must be positive");
    const LossGradients g = loss_gradient_terms(scene, depth, pyramids, weights);
    const ImageGrid* grads[5] = {&g.photo, &g.ssim, &g.smooth, &g.feature, &g.total};
    const char* names[5] = {"photo", "ssim", "smooth", "feature", "total"};

    std::vector<Eigen::Index> candidates;
    for (Eigen::Index i = 0; i < depth.pixel_count(); ++i)
        if (depth.data()(0, i) > 0.0) candidates.push_back(i);
    if (candidates.empty()) throw InvalidInput("audit_loss_gradients: no valid depths");

    std::mt19937 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const std::size_t n = std::min(candidates.size(), std::size_t(samples));

    GradientAudit audit;
    audit.samples = int(n);
    for (const char* name : names) audit.terms.push_back({name, 0, 0, 0});

    const double h = 1e-3 * scene.reference.camera.depth_interval;
    const auto base = term_values(total_loss(scene, depth, pyramids, weights));
    ImageGrid work = depth;
    for (std::size_t si = 0; si < n; ++si) {
        const Eigen::Index i = candidates[si];
        const double z = depth.data()(0, i);
        work.data()(0, i) = z + h;
        const auto plus = term_values(total_loss(scene, work, pyramids, weights));
        work.data()(0, i) = z - h;
        const auto minus = term_values(total_loss(scene, work, pyramids, weights));
        work.data()(0, i) = z;

        for (int t = 0; t < 5; ++t) {
            const double fwd = (plus[std::size_t(t)] - base[std::size_t(t)]) / h;
            const double bwd = (base[std::size_t(t)] - minus[std::size_t(t)]) / h;
            if (std::abs(fwd - bwd) > 0.05 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-12) {
                ++audit.terms[std::size_t(t)].excluded;
                continue;
            }
            const double central = (plus[std::size_t(t)] - minus[std::size_t(t)]) / (2.0 * h);
            const double analytic = grads[t]->data()(0, i);
            const double tol =
                std::max(1e-3 * std::max(std::abs(analytic), std::abs(central)), 1e-12);
            ++audit.terms[std::size_t(t)].checked;
            if (std::abs(analytic - central) <= tol) ++audit.terms[std::size_t(t)].passed;
        }
    }
    return audit;
}

std::string audit_report(const GradientAudit& audit) {
    std::ostringstream out;
    out.precision(17);
    out << "samples=" << audit.samples << "\n";
    for (const auto& t : audit.terms) {
        out << t.name << "_checked=" << t.checked << "\n";
        out << t.name << "_passed=" << t.passed << "\n";
        out << t.name << "_excluded=" << t.excluded << "\n";
        out << t.name << "_fraction=" << t.pass_fraction() << "\n";
    }
    out << "worst_fraction=" << audit.worst_fraction() << "\n";
    return out.str();
}

}  // namespace mmvs
