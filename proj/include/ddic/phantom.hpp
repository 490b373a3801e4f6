#ifndef DDIC_PHANTOM_HPP
#define DDIC_PHANTOM_HPP

#include <cstdint>

#include "ddic/image.hpp"
#include "ddic/metrics.hpp"

namespace ddic {

// Synthetic two-domain test pattern: an elliptical "head" with internal
// cavities rendered twice over the same geometry. Domain A is speckled with
// a directional attenuation wedge; domain B is smooth with inverted cavity
// contrast (cavities dark in A, bright in B).
struct PhantomSpec {
    int size = 32;

    // head ellipse, semi-axes as fractions of the grid size
    double head_a_min = 0.36, head_a_max = 0.44;
    double head_b_min = 0.30, head_b_max = 0.38;
    double center_jitter = 1.5; // pixels
    double rotation_max = 0.45; // radians
    int cavities_min = 2, cavities_max = 3;
    double cavity_a_min = 0.09, cavity_a_max = 0.16;
    double cavity_b_min = 0.06, cavity_b_max = 0.11;

    // domain A rendering
    double speckle_amplitude = 0.30;
    double speckle_blur = 0.35; // correlation length of the multiplicative noise
    double shadow_strength = 0.45;
    double shadow_half_angle = 0.40; // radians
    double shadow_max_swing = 0.50;  // wedge direction jitter, radians

    // domain B rendering
    double b_smooth_sigma = 0.5;
    double b_noise = 0.02;

    std::uint64_t seed = 0;

    void validate() const;
};

// Rendering intensity levels (shared geometry, opposite cavity contrast).
namespace phantom_levels {
constexpr double kBackground = 0.03;
constexpr double kTissueA = 0.58;
constexpr double kCavityA = 0.10;
constexpr double kSkullA = 0.95;
constexpr double kTissueB = 0.45;
constexpr double kCavityB = 0.88;
constexpr double kSkullB = 0.10;
} // namespace phantom_levels

struct PhantomGeometry {
    ImageGrid cavity_mask; // 0/1
    ImageGrid brain_mask;  // 0/1, inside the skull
    ImageGrid skull_mask;  // 0/1
    ImageGrid shadow_wedge; // smoothed 0..1, confined to the head
    ImageGrid clean_a;      // domain A before speckle and shadow
    RoiSpec cnr_roi;        // cavity ROI vs tissue background
};

struct PhantomPair {
    ImageGrid domain_a;
    ImageGrid domain_b;
    PhantomGeometry geometry;
};

PhantomPair generate_phantom_pair(const PhantomSpec& spec);

// Separable Gaussian blur with edge replication (exposed for tests).
ImageGrid gaussian_blur(const ImageGrid& img, double sigma);

} // namespace ddic

#endif
