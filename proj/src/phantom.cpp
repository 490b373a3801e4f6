#include "ddic/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ddic/rng.hpp"

namespace ddic {

void PhantomSpec::validate() const {
    if (size < 8) throw ConfigError("phantom: grid size must be >= 8");
    if (!(head_a_min <= head_a_max && head_b_min <= head_b_max))
        throw ConfigError("phantom: bad head axis ranges");
    if (!(head_a_max < 0.5 && head_b_max < 0.5))
        throw ConfigError("phantom: head must fit inside the grid");
    if (cavities_min < 1 || cavities_max < cavities_min)
        throw ConfigError("phantom: bad cavity count range");
    if (speckle_amplitude < 0.0 || speckle_blur < 0.0 || shadow_strength < 0.0 || shadow_strength > 1.0)
        throw ConfigError("phantom: bad domain-A rendering parameters");
    if (b_smooth_sigma < 0.0 || b_noise < 0.0)
        throw ConfigError("phantom: bad domain-B rendering parameters");
}

ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int r = std::max(1, static_cast<int>(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + r)];
    }
    for (double& v : k) v /= sum;

    const int h = img.rows(), w = img.cols();
    ImageGrid tmp = img, out = img;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * img.at(y, std::clamp(x + i, 0, w - 1));
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * tmp.at(std::clamp(y + i, 0, h - 1), x);
            out.at(y, x) = acc;
        }
    return out;
}

namespace {

struct Ellipse {
    double cy, cx, a, b, theta;
    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double ry = dy * std::cos(theta) - dx * std::sin(theta);
        const double rx = dy * std::sin(theta) + dx * std::cos(theta);
        return (rx / a) * (rx / a) + (ry / b) * (ry / b) < 1.0;
    }
    double quad(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double ry = dy * std::cos(theta) - dx * std::sin(theta);
        const double rx = dy * std::sin(theta) + dx * std::cos(theta);
        return (rx / a) * (rx / a) + (ry / b) * (ry / b);
    }
};

// Tissue background patch for the CNR reference: same size as the ROI, fully
// inside brain-and-not-cavity-and-not-skull, non-overlapping with the ROI,
// as far from every cavity pixel as possible (deterministic tie-break).
RoiSpec pick_cnr_roi(const Ellipse& cavity, const ImageGrid& brain, const ImageGrid& cavity_mask,
                     const ImageGrid& skull, int n) {
    const int half = std::max(1, static_cast<int>(std::floor(std::min(cavity.a, cavity.b) / std::numbers::sqrt2)));
    const int k = 2 * half + 1;
    RoiSpec roi;
    roi.roi_row = std::clamp(static_cast<int>(std::lround(cavity.cy)) - half, 0, n - k);
    roi.roi_col = std::clamp(static_cast<int>(std::lround(cavity.cx)) - half, 0, n - k);
    roi.roi_height = k;
    roi.roi_width = k;

    auto window_ok = [&](int r0, int c0, bool strict) {
        // reject overlap with the ROI rectangle
        if (r0 < roi.roi_row + k && roi.roi_row < r0 + k &&
            c0 < roi.roi_col + k && roi.roi_col < c0 + k)
            return false;
        for (int r = r0; r < r0 + k; ++r)
            for (int c = c0; c < c0 + k; ++c) {
                if (brain.at(r, c) == 0.0 || cavity_mask.at(r, c) != 0.0) return false;
                if (strict && skull.at(r, c) != 0.0) return false;
            }
        return true;
    };
    auto min_dist_to_cavity = [&](int r0, int c0) {
        const double yc = r0 + half, xc = c0 + half;
        double best = 1e18;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (cavity_mask.at(r, c) != 0.0) {
                    const double d = (r - yc) * (r - yc) + (c - xc) * (c - xc);
                    best = std::min(best, d);
                }
        return best;
    };

    for (const bool strict : {true, false}) {
        double best = -1.0;
        int br = -1, bc = -1;
        for (int r0 = 0; r0 + k <= n; ++r0)
            for (int c0 = 0; c0 + k <= n; ++c0) {
                if (!window_ok(r0, c0, strict)) continue;
                const double d = min_dist_to_cavity(r0, c0);
                if (d > best) {
                    best = d;
                    br = r0;
                    bc = c0;
                }
            }
        if (br >= 0) {
            roi.bg_row = br;
            roi.bg_col = bc;
            roi.bg_height = k;
            roi.bg_width = k;
            return roi;
        }
    }
    throw NumericError("phantom: no tissue patch available for the CNR background");
}

} // namespace

PhantomPair generate_phantom_pair(const PhantomSpec& spec) {
    spec.validate();
    const int n = spec.size;
    std::mt19937_64 geom_rng = stream_rng(spec.seed, /*stream=*/1);
    std::mt19937_64 noise_rng = stream_rng(spec.seed, /*stream=*/2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto uni = [&](std::mt19937_64& r, double lo, double hi) { return lo + (hi - lo) * unif(r); };

    Ellipse head;
    head.cy = n / 2.0 + uni(geom_rng, -spec.center_jitter, spec.center_jitter);
    head.cx = n / 2.0 + uni(geom_rng, -spec.center_jitter, spec.center_jitter);
    head.a = uni(geom_rng, spec.head_a_min, spec.head_a_max) * n;
    head.b = uni(geom_rng, spec.head_b_min, spec.head_b_max) * n;
    head.theta = uni(geom_rng, -spec.rotation_max, spec.rotation_max);

    std::uniform_int_distribution<int> pick_ncav(spec.cavities_min, spec.cavities_max);
    const int ncav = pick_ncav(geom_rng);
    std::vector<Ellipse> cavities;
    for (int i = 0; i < ncav; ++i) {
        Ellipse e;
        e.cy = head.cy + uni(geom_rng, -0.25, 0.25) * head.b;
        e.cx = head.cx + uni(geom_rng, -0.3, 0.3) * head.a;
        e.a = uni(geom_rng, spec.cavity_a_min, spec.cavity_a_max) * n;
        e.b = uni(geom_rng, spec.cavity_b_min, spec.cavity_b_max) * n;
        e.theta = head.theta + uni(geom_rng, -0.3, 0.3);
        cavities.push_back(e);
    }
    const double wedge_dir = uni(geom_rng, -spec.shadow_max_swing, spec.shadow_max_swing);

    using namespace phantom_levels;
    PhantomGeometry geo;
    geo.cavity_mask = ImageGrid(n, n, 0.0);
    geo.brain_mask = ImageGrid(n, n, 0.0);
    geo.skull_mask = ImageGrid(n, n, 0.0);
    geo.clean_a = ImageGrid(n, n, kBackground);
    ImageGrid clean_b(n, n, kBackground);
    ImageGrid wedge_raw(n, n, 0.0);
    ImageGrid head_mask(n, n, 0.0);

    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double q = head.quad(r, c);
            const bool in_head = q < 1.0;
            const bool in_skull = in_head && q > 0.78;
            const bool in_brain = q <= 0.78;
            bool in_cav = false;
            if (in_brain)
                for (const auto& e : cavities)
                    if (e.contains(r, c)) {
                        in_cav = true;
                        break;
                    }
            head_mask.at(r, c) = in_head ? 1.0 : 0.0;
            geo.brain_mask.at(r, c) = in_brain ? 1.0 : 0.0;
            geo.skull_mask.at(r, c) = in_skull ? 1.0 : 0.0;
            geo.cavity_mask.at(r, c) = in_cav ? 1.0 : 0.0;
            if (in_brain) {
                geo.clean_a.at(r, c) = in_cav ? kCavityA : kTissueA;
                clean_b.at(r, c) = in_cav ? kCavityB : kTissueB;
            }
            if (in_skull) {
                geo.clean_a.at(r, c) = kSkullA;
                clean_b.at(r, c) = kSkullB;
            }
            const double ang = std::atan2(c - head.cx, (r - head.cy) + 1e-9);
            double delta = std::fmod(ang - wedge_dir + std::numbers::pi, 2.0 * std::numbers::pi);
            if (delta < 0) delta += 2.0 * std::numbers::pi;
            delta -= std::numbers::pi;
            if (std::abs(delta) < spec.shadow_half_angle && r > head.cy)
                wedge_raw.at(r, c) = 1.0;
        }

    geo.shadow_wedge = gaussian_blur(wedge_raw, 1.0);
    for (std::size_t i = 0; i < geo.shadow_wedge.size(); ++i)
        geo.shadow_wedge[i] *= head_mask[i];

    // domain A: shadow attenuation, then multiplicative speckle
    ImageGrid speckle(n, n, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < speckle.size(); ++i) speckle[i] = gauss(noise_rng);
    speckle = gaussian_blur(speckle, spec.speckle_blur);
    const double sdev = std::sqrt(variance(speckle));
    if (sdev > 0.0)
        for (std::size_t i = 0; i < speckle.size(); ++i) speckle[i] /= sdev;

    PhantomPair out;
    out.domain_a = ImageGrid(n, n, 0.0);
    for (std::size_t i = 0; i < out.domain_a.size(); ++i) {
        const double shadowed = geo.clean_a[i] * (1.0 - spec.shadow_strength * geo.shadow_wedge[i]);
        out.domain_a[i] = std::clamp(shadowed * (1.0 + spec.speckle_amplitude * speckle[i]), 0.0, 1.2);
    }

    // domain B: smooth rendering with mild additive texture
    ImageGrid bnoise(n, n, 0.0);
    for (std::size_t i = 0; i < bnoise.size(); ++i) bnoise[i] = gauss(noise_rng);
    bnoise = gaussian_blur(bnoise, 1.0);
    ImageGrid b_smooth = gaussian_blur(clean_b, spec.b_smooth_sigma);
    out.domain_b = ImageGrid(n, n, 0.0);
    for (std::size_t i = 0; i < out.domain_b.size(); ++i)
        out.domain_b[i] = std::clamp(b_smooth[i] + spec.b_noise * bnoise[i], 0.0, 1.2);

    out.domain_a.range_lo = out.domain_b.range_lo = 0.0;
    out.domain_a.range_hi = out.domain_b.range_hi = 1.0;

    geo.cnr_roi = pick_cnr_roi(cavities.front(), geo.brain_mask, geo.cavity_mask, geo.skull_mask, n);
    out.geometry = std::move(geo);
    return out;
}

} // namespace ddic
