#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace isoseg::data {

// Style knobs that differ between synthetic domains. Content never depends on
// these, so two recipes sharing a seed produce identical masks.
struct DomainStyle {
    double gamma = 1.0;   // intensity power curve
    double bias = 0.0;    // additive intensity shift
    bool invert = false;  // photographic negative (applied before noise)
    int blur = 0;         // number of 3x3 binomial blur passes
    double noise = 0.0;   // additive Gaussian sigma
    bool border = false;  // bright scanner-style band at the left edge
};

// Two-lobe foreground geometry, in fractions of the image side.
struct ShapeFamily {
    double lobe_rx = 0.16;
    double lobe_ry = 0.26;
    double center_dx = 0.21;
    double jitter = 0.25;
    int clutter = 3; // dim background ellipses, never part of the mask
};

struct SyntheticRecipe {
    std::string task = "lobes";
    int count = 0;
    uint64_t seed = 0;
    int image_size = 64;
    DomainStyle style;
    ShapeFamily shapes;
};

// Renders one sample: styled 8-bit image plus the exact geometric mask
// (0/255). Pure function of (recipe, index).
void synth_sample(const SyntheticRecipe& recipe, int index, std::vector<uint8_t>& image,
                  std::vector<uint8_t>& mask);

// Renders only the mask; used to verify stored masks bit-for-bit.
void synth_mask(const SyntheticRecipe& recipe, int index, std::vector<uint8_t>& mask);

// Writes <out_root>/<name>/images/*.png and masks/<task>/*.png; returns the
// dataset directory.
std::string synth_generate(const SyntheticRecipe& recipe, const std::string& out_root,
                           const std::string& name);

} // namespace isoseg::data
