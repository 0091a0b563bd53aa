#include "mmvs/cost_volume.hpp"

#include "mmvs/geometry.hpp"
#include "mmvs/parallel.hpp"
#include "mmvs/scene_io.hpp"

#include <algorithm>
#include <cmath>

namespace mmvs {

CostVolume build_variance_volume(const ImageGrid& ref_feat, const Camera& cam_ref,
                                 const std::vector<ImageGrid>& src_feats,
                                 const std::vector<Camera>& src_cams) {
    if (src_feats.empty()) throw InvalidInput("cost volume needs at least one source view");
    if (src_feats.size() != src_cams.size())
        throw InvalidInput("cost volume: one camera per source feature map required");
    for (const auto& f : src_feats)
        if (f.channels() != ref_feat.channels())
            throw InvalidInput("cost volume: feature channel counts differ across views");

    const Eigen::Index w = ref_feat.width(), h = ref_feat.height();
    const Eigen::Index D = cam_ref.depth_count;

    CostVolume cv;
    cv.width = w;
    cv.height = h;
    cv.hypotheses.resize(static_cast<std::size_t>(D));
    for (Eigen::Index k = 0; k < D; ++k)
        cv.hypotheses[static_cast<std::size_t>(k)] = cam_ref.hypothesis(int(k));
    cv.data.resize(D, w * h);

    // -1 marks pixels with no valid source sample; replaced by the volume
    // maximum afterwards so soft-argmin stays well-defined.
    for (Eigen::Index k = 0; k < D; ++k) {
        const double d = cv.hypotheses[static_cast<std::size_t>(k)];
        std::vector<WarpResult> warped;
        warped.reserve(src_feats.size());
        for (std::size_t v = 0; v < src_feats.size(); ++v)
            warped.push_back(warp_at_hypothesis(src_feats[v], cam_ref, src_cams[v], d));

        parallel_rows(h, [&](Eigen::Index y) {
            for (Eigen::Index x = 0; x < w; ++x) {
                Eigen::ArrayXd sum = ref_feat.pixel(x, y);
                Eigen::ArrayXd sumsq = sum.square();
                int n = 1;
                for (const auto& wr : warped) {
                    if (!wr.mask(x, y)) continue;
                    const auto p = wr.image.pixel(x, y);
                    sum += p;
                    sumsq += p.square();
                    ++n;
                }
                if (n == 1) {
                    cv.data(k, cv.index(x, y)) = -1.0;
                    continue;
                }
                const double inv = 1.0 / double(n);
                const double var = (sumsq * inv - (sum * inv).square()).mean();
                cv.data(k, cv.index(x, y)) = std::max(var, 0.0);
            }
        });
    }

    double max_cost = 0.0;
    for (Eigen::Index i = 0; i < cv.data.size(); ++i)
        max_cost = std::max(max_cost, *(cv.data.data() + i));
    cv.data = (cv.data < 0.0).select(max_cost, cv.data);
    return cv;
}

namespace {

Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) {
    return std::clamp<Eigen::Index>(i, 0, n - 1);
}

}  // namespace

CostVolume regularize_volume(const CostVolume& cv) {
    const Eigen::Index D = cv.depth_count(), w = cv.width, h = cv.height;
    CostVolume out = cv;

    // Depth axis.
    Eigen::ArrayXXd tmp(D, w * h);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const Eigen::Index p = cv.index(x, y);
            for (Eigen::Index k = 0; k < D; ++k)
                tmp(k, p) = 0.25 * out.data(clamp_index(k - 1, D), p) + 0.5 * out.data(k, p) +
                            0.25 * out.data(clamp_index(k + 1, D), p);
        }
    });
    // Width axis.
    Eigen::ArrayXXd tmp2(D, w * h);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const Eigen::Index pl = cv.index(clamp_index(x - 1, w), y);
            const Eigen::Index pr = cv.index(clamp_index(x + 1, w), y);
            tmp2.col(cv.index(x, y)) =
                0.25 * tmp.col(pl) + 0.5 * tmp.col(cv.index(x, y)) + 0.25 * tmp.col(pr);
        }
    });
    // Height axis.
    parallel_rows(h, [&](Eigen::Index y) {
        const Eigen::Index yu = clamp_index(y - 1, h), yd = clamp_index(y + 1, h);
        for (Eigen::Index x = 0; x < w; ++x)
            out.data.col(cv.index(x, y)) = 0.25 * tmp2.col(cv.index(x, yu)) +
                                           0.5 * tmp2.col(cv.index(x, y)) +
                                           0.25 * tmp2.col(cv.index(x, yd));
    });
    return out;
}

DepthRegression soft_argmin(const CostVolume& cv, double temperature) {
    if (!(temperature > 0.0)) throw InvalidInput("soft_argmin: temperature must be positive");
    const Eigen::Index D = cv.depth_count(), w = cv.width, h = cv.height;
    const double depth_min = cv.hypotheses.front();
    const double interval = D > 1 ? cv.hypotheses[1] - cv.hypotheses[0] : 1.0;

    DepthRegression out;
    out.depth = ImageGrid(w, h, 1);
    out.confidence = ImageGrid(w, h, 1);
    out.prob.width = w;
    out.prob.height = h;
    out.prob.data.resize(D, w * h);

    const Eigen::Map<const Eigen::ArrayXd> hyp(cv.hypotheses.data(), D);
    parallel_rows(h, [&](Eigen::Index y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const Eigen::Index p = cv.index(x, y);
            Eigen::ArrayXd logits = -cv.data.col(p) / temperature;
            logits -= logits.maxCoeff();  // shift invariance, exact
            Eigen::ArrayXd prob = logits.exp();
            prob /= prob.sum();
            out.prob.data.col(p) = prob;

            const double depth = (prob * hyp).sum();
            out.depth(x, y) = depth;

            // Mass on the 4 consecutive hypotheses around the regressed
            // depth (the 4 nearest on a uniform grid).
            Eigen::Index k0 = static_cast<Eigen::Index>(std::floor((depth - depth_min) / interval)) - 1;
            k0 = std::clamp<Eigen::Index>(k0, 0, std::max<Eigen::Index>(D - 4, 0));
            const Eigen::Index len = std::min<Eigen::Index>(4, D);
            out.confidence(x, y) = prob.segment(k0, len).sum();
        }
    });
    return out;
}

void save_cost_volume(const CostVolume& cv, const std::filesystem::path& path) {
    ImageGrid grid(cv.width, cv.height, cv.depth_count());
    grid.data() = cv.data;
    save_feature_map(grid, path);
}

}  // namespace mmvs
