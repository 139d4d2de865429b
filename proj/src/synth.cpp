#include "isoseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "isoseg/png_io.hpp"
#include "isoseg/rng.hpp"

namespace isoseg::data {

namespace {

struct Ellipse {
    double cx, cy, rx, ry, rot;

    // Quadratic membership form; <= 1 means inside.
    double q(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(rot), s = std::sin(rot);
        const double u = dx * c + dy * s, v = -dx * s + dy * c;
        return (u * u) / (rx * rx) + (v * v) / (ry * ry);
    }
};

struct SampleGeometry {
    Ellipse lobes[2];
    std::vector<Ellipse> clutter;
};

// Content is a pure function of (seed, index); style draws use a separate
// stream so style settings never perturb geometry.
SampleGeometry sample_geometry(const SyntheticRecipe& r, int index) {
    Rng rng = Rng(r.seed).child(2 * static_cast<uint64_t>(index));
    const double S = static_cast<double>(r.image_size);
    const ShapeFamily& f = r.shapes;

    SampleGeometry g;
    const double cy = S * (0.52 + 0.05 * (rng.uniform() - 0.5));
    for (int side = 0; side < 2; ++side) {
        Ellipse e;
        const double sign = side == 0 ? -1.0 : 1.0;
        e.cx = S * (0.5 + sign * f.center_dx * (1.0 + 0.3 * (rng.uniform() - 0.5)));
        e.cy = cy + S * 0.02 * (rng.uniform() - 0.5);
        e.rx = S * f.lobe_rx * (1.0 + f.jitter * (rng.uniform() - 0.5));
        e.ry = S * f.lobe_ry * (1.0 + f.jitter * (rng.uniform() - 0.5));
        e.rot = sign * (0.05 + 0.13 * rng.uniform());
        g.lobes[side] = e;
    }
    for (int i = 0; i < f.clutter; ++i) {
        Ellipse e;
        e.cx = S * rng.uniform();
        e.cy = S * rng.uniform();
        e.rx = S * (0.03 + 0.07 * rng.uniform());
        e.ry = S * (0.03 + 0.07 * rng.uniform());
        e.rot = 3.14159 * rng.uniform();
        g.clutter.push_back(e);
    }
    return g;
}

void blur3x3(std::vector<double>& img, int S) {
    // Separable binomial [1 2 1]/4 with clamped borders.
    std::vector<double> tmp(img.size());
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double l = img[y * S + std::max(0, x - 1)];
            const double c = img[y * S + x];
            const double rr = img[y * S + std::min(S - 1, x + 1)];
            tmp[y * S + x] = 0.25 * l + 0.5 * c + 0.25 * rr;
        }
    }
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double u = tmp[std::max(0, y - 1) * S + x];
            const double c = tmp[y * S + x];
            const double d = tmp[std::min(S - 1, y + 1) * S + x];
            img[y * S + x] = 0.25 * u + 0.5 * c + 0.25 * d;
        }
    }
}

} // namespace

void synth_mask(const SyntheticRecipe& r, int index, std::vector<uint8_t>& mask) {
    const int S = r.image_size;
    const SampleGeometry g = sample_geometry(r, index);
    mask.assign(static_cast<size_t>(S) * S, 0);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            if (g.lobes[0].q(px, py) <= 1.0 || g.lobes[1].q(px, py) <= 1.0)
                mask[static_cast<size_t>(y) * S + x] = 255;
        }
    }
}

void synth_sample(const SyntheticRecipe& r, int index, std::vector<uint8_t>& image,
                  std::vector<uint8_t>& mask) {
    const int S = r.image_size;
    if (S < 8) throw std::runtime_error("synth_sample: image_size too small");
    const SampleGeometry g = sample_geometry(r, index);

    synth_mask(r, index, mask);

    std::vector<double> img(static_cast<size_t>(S) * S);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            // Dim background with a vertical gradient; lobes render with a
            // soft falloff that extends slightly past the exact mask edge.
            double v = 0.18 + 0.05 * (static_cast<double>(y) / S);
            for (const Ellipse& e : g.clutter) {
                const double q = e.q(px, py);
                if (q < 1.0) v += 0.12 * (1.0 - q);
            }
            double t = 0.0;
            for (const Ellipse& e : g.lobes) {
                const double q = e.q(px, py);
                t = std::max(t, std::clamp((1.05 - q) / 0.35, 0.0, 1.0));
            }
            v += 0.55 * t;
            img[static_cast<size_t>(y) * S + x] = std::clamp(v, 0.0, 1.0);
        }
    }

    // Style pipeline: gamma -> bias -> invert -> blur -> noise -> border ->
    // quantize.
    const DomainStyle& st = r.style;
    for (double& v : img) v = std::pow(std::clamp(v, 0.0, 1.0), st.gamma);
    if (st.bias != 0.0)
        for (double& v : img) v += st.bias;
    if (st.invert)
        for (double& v : img) v = 1.0 - std::clamp(v, 0.0, 1.0);
    for (int i = 0; i < st.blur; ++i) blur3x3(img, S);
    if (st.noise > 0.0) {
        Rng noise_rng = Rng(r.seed).child(2 * static_cast<uint64_t>(index) + 1);
        for (double& v : img) v += st.noise * noise_rng.normal();
    }
    if (st.border) {
        const int band = std::max(2, S / 16);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < band; ++x) img[static_cast<size_t>(y) * S + x] = 0.92;
    }

    image.resize(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        image[i] = static_cast<uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
}

std::string synth_generate(const SyntheticRecipe& r, const std::string& out_root,
                           const std::string& name) {
    namespace fs = std::filesystem;
    if (r.count < 1) throw std::runtime_error("synth_generate: count must be >= 1");
    const fs::path base = fs::path(out_root) / name;
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks" / r.task);

    std::vector<uint8_t> img, mask;
    char stem[32];
    for (int i = 0; i < r.count; ++i) {
        synth_sample(r, i, img, mask);
        std::snprintf(stem, sizeof(stem), "sample_%04d.png", i);
        io::write_png_gray((base / "images" / stem).string(), img.data(), r.image_size,
                           r.image_size);
        io::write_png_gray((base / "masks" / r.task / stem).string(), mask.data(), r.image_size,
                           r.image_size);
    }
    return base.string();
}

} // namespace isoseg::data
