#pragma once

#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "qagent/codec.hpp"
#include "qagent/error.hpp"
#include "qagent/image.hpp"
#include "qagent/ops.hpp"
#include "qagent/rng.hpp"

// Ordered multi-degradation simulator: eight distortion families, each
// parameterized, applied strictly in recipe order. Order matters — several
// of these operators do not commute — and that ordering is part of what the
// restoration agent has to cope with.

namespace qagent {

enum class DegradationKind { Noise, MotionBlur, DefocusBlur, Jpeg, LowLight, LowRes, Haze, Rain };
enum class Severity { Low, Mid, High };

constexpr int kNumDegradationKinds = 8;

inline const char* kind_name(DegradationKind k) {
    switch (k) {
        case DegradationKind::Noise: return "noise";
        case DegradationKind::MotionBlur: return "motion_blur";
        case DegradationKind::DefocusBlur: return "defocus_blur";
        case DegradationKind::Jpeg: return "jpeg";
        case DegradationKind::LowLight: return "low_light";
        case DegradationKind::LowRes: return "low_res";
        case DegradationKind::Haze: return "haze";
        case DegradationKind::Rain: return "rain";
    }
    return "?";
}

inline const char* severity_name(Severity s) {
    switch (s) {
        case Severity::Low: return "low";
        case Severity::Mid: return "mid";
        case Severity::High: return "high";
    }
    return "?";
}

inline double noise_sigma_for(Severity s) {
    switch (s) {
        case Severity::Low: return 10.0 / 255.0;
        case Severity::Mid: return 25.0 / 255.0;
        case Severity::High: return 50.0 / 255.0;
    }
    return 0.0;
}

struct NoiseParams { double sigma = 25.0 / 255.0; };
struct MotionBlurParams { double length = 13.0; double angle_deg = 0.0; };
struct DefocusBlurParams { double radius = 3.0; };
struct JpegParams { int quality = 20; };
struct LowLightParams { double gamma = 2.2; double gain = 0.7; };
struct LowResParams { int scale = 2; };
struct HazeParams { double t = 0.6; std::array<double, 3> airlight = {0.9, 0.9, 0.9}; };
struct RainParams { double angle_deg = 90.0; double length = 20.0; double density = 0.005; double beta = 0.8; };

// variant order mirrors DegradationKind so the active alternative names the kind
using StepParams = std::variant<NoiseParams, MotionBlurParams, DefocusBlurParams, JpegParams,
                                LowLightParams, LowResParams, HazeParams, RainParams>;

struct DegradationStep {
    StepParams params;
    Severity severity = Severity::Mid;

    DegradationKind kind() const { return static_cast<DegradationKind>(params.index()); }
};

inline DegradationStep make_noise_step(Severity s) {
    return DegradationStep{NoiseParams{noise_sigma_for(s)}, s};
}

struct Recipe {
    std::vector<DegradationStep> steps;
    uint64_t seed = 0;
    std::string source_id;
};

inline void validate_step(const DegradationStep& step) {
    const auto oops = [&](const std::string& what) {
        throw ParamOutOfRange(std::string(kind_name(step.kind())) + ": " + what);
    };
    switch (step.kind()) {
        case DegradationKind::Noise: {
            const auto& p = std::get<NoiseParams>(step.params);
            if (p.sigma < 0.0 || p.sigma > 1.0) oops("sigma outside [0,1]");
            break;
        }
        case DegradationKind::MotionBlur: {
            const auto& p = std::get<MotionBlurParams>(step.params);
            if (p.length < 9.0 || p.length > 21.0) oops("length outside [9,21]");
            if (p.angle_deg < 0.0 || p.angle_deg >= 180.0) oops("angle outside [0,180)");
            break;
        }
        case DegradationKind::DefocusBlur: {
            const auto& p = std::get<DefocusBlurParams>(step.params);
            if (p.radius < 2.0 || p.radius > 6.0) oops("radius outside [2,6]");
            break;
        }
        case DegradationKind::Jpeg: {
            const auto& p = std::get<JpegParams>(step.params);
            if (p.quality < 10 || p.quality > 40) oops("quality outside [10,40]");
            break;
        }
        case DegradationKind::LowLight: {
            const auto& p = std::get<LowLightParams>(step.params);
            if (p.gamma < 1.8 || p.gamma > 3.0) oops("gamma outside [1.8,3.0]");
            if (p.gain < 0.5 || p.gain > 0.9) oops("gain outside [0.5,0.9]");
            break;
        }
        case DegradationKind::LowRes: {
            const auto& p = std::get<LowResParams>(step.params);
            if (p.scale < 2 || p.scale > 4) oops("scale outside {2,3,4}");
            break;
        }
        case DegradationKind::Haze: {
            const auto& p = std::get<HazeParams>(step.params);
            if (p.t < 0.0 || p.t > 1.0) oops("t outside [0,1]");
            for (double a : p.airlight)
                if (a < 0.8 || a > 1.0) oops("airlight outside [0.8,1.0]");
            break;
        }
        case DegradationKind::Rain: {
            const auto& p = std::get<RainParams>(step.params);
            if (p.angle_deg < 60.0 || p.angle_deg > 120.0) oops("angle outside [60,120]");
            if (p.length < 12.0 || p.length > 30.0) oops("length outside [12,30]");
            if (p.density < 0.002 || p.density > 0.01) oops("density outside [0.002,0.01]");
            if (p.beta < 0.6 || p.beta > 0.9) oops("beta outside [0.6,0.9]");
            break;
        }
    }
}

inline void validate_recipe(const Recipe& r) {
    if (r.steps.empty() || r.steps.size() > 4)
        throw ParamOutOfRange("recipe: step count outside 1..4");
    bool seen[kNumDegradationKinds] = {};
    for (const DegradationStep& s : r.steps) {
        const int k = static_cast<int>(s.kind());
        if (seen[k]) throw ParamOutOfRange(std::string("recipe: duplicate kind ") + kind_name(s.kind()));
        seen[k] = true;
        validate_step(s);
    }
}

// --- label vector ---------------------------------------------------------

// bit order [NI-L, NI-M, NI-H, JP, RA, HA, MB, DB, LL, LR]
struct LabelVector {
    std::array<int, 10> bits = {};

    bool operator==(const LabelVector&) const = default;
    int popcount() const {
        int n = 0;
        for (int b : bits) n += b;
        return n;
    }
};

inline constexpr std::array<const char*, 10> kLabelBitNames = {
    "NI-L", "NI-M", "NI-H", "JP", "RA", "HA", "MB", "DB", "LL", "LR"};

enum LabelBit : int {
    kBitNiL = 0, kBitNiM = 1, kBitNiH = 2, kBitJp = 3, kBitRa = 4,
    kBitHa = 5, kBitMb = 6, kBitDb = 7, kBitLl = 8, kBitLr = 9
};

inline int label_bit_for(const DegradationStep& step) {
    switch (step.kind()) {
        case DegradationKind::Noise:
            switch (step.severity) {
                case Severity::Low: return kBitNiL;
                case Severity::Mid: return kBitNiM;
                case Severity::High: return kBitNiH;
            }
            return kBitNiM;
        case DegradationKind::Jpeg: return kBitJp;
        case DegradationKind::Rain: return kBitRa;
        case DegradationKind::Haze: return kBitHa;
        case DegradationKind::MotionBlur: return kBitMb;
        case DegradationKind::DefocusBlur: return kBitDb;
        case DegradationKind::LowLight: return kBitLl;
        case DegradationKind::LowRes: return kBitLr;
    }
    return -1;
}

inline LabelVector recipe_to_label(const Recipe& r) {
    LabelVector label;
    for (const DegradationStep& s : r.steps) label.bits[static_cast<size_t>(label_bit_for(s))] = 1;
    return label;
}

// --- single-step application ----------------------------------------------

namespace detail {

inline ImageF apply_noise(const ImageF& img, const NoiseParams& p, Rng& rng) {
    if (p.sigma == 0.0) return img;
    ImageF out = img;
    for (float& v : out.data)
        v = static_cast<float>(v + p.sigma * rng.next_gaussian());
    clamp_image(out);
    return out;
}

inline ImageF apply_low_light(const ImageF& img, const LowLightParams& p) {
    ImageF out(img.width, img.height);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<float>(p.gain * std::pow(static_cast<double>(img.data[i]), p.gamma));
    clamp_image(out);
    return out;
}

inline ImageF apply_low_res(const ImageF& img, const LowResParams& p) {
    const int dw = std::max(1, static_cast<int>(std::lround(img.width / static_cast<double>(p.scale))));
    const int dh = std::max(1, static_cast<int>(std::lround(img.height / static_cast<double>(p.scale))));
    ImageF small = resize(img, dw, dh, ResizeFilter::Box);
    return resize(small, img.width, img.height, ResizeFilter::Bicubic);
}

inline ImageF apply_haze(const ImageF& img, const HazeParams& p) {
    ImageF out(img.width, img.height);
    for (int c = 0; c < 3; ++c) {
        const float* src = img.plane(c);
        float* dst = out.plane(c);
        const double air = p.airlight[static_cast<size_t>(c)] * (1.0 - p.t);
        for (size_t i = 0; i < img.plane_size(); ++i)
            dst[i] = static_cast<float>(src[i] * p.t + air);
    }
    clamp_image(out);
    return out;
}

// Oriented streak overlay: line segments splatted at random positions,
// softened along the streak direction, then additively blended.
inline ImageF apply_rain(const ImageF& img, const RainParams& p, Rng& rng) {
    Plane streaks(img.width, img.height);
    const int count = static_cast<int>(std::lround(p.density * img.width * img.height));
    const double rad = p.angle_deg * 3.14159265358979323846 / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    for (int s = 0; s < count; ++s) {
        const double cx = rng.uniform(0.0, img.width);
        const double cy = rng.uniform(0.0, img.height);
        const double strength = rng.uniform(0.5, 1.0);
        const int n = static_cast<int>(p.length * 2);
        for (int i = 0; i < n; ++i) {
            const double t = (static_cast<double>(i) / (n - 1) - 0.5) * p.length;
            const double px = cx + t * dx;
            const double py = cy + t * dy;
            const int x0 = static_cast<int>(std::floor(px));
            const int y0 = static_cast<int>(std::floor(py));
            const double fx = px - x0, fy = py - y0;
            for (int oy = 0; oy <= 1; ++oy)
                for (int ox = 0; ox <= 1; ++ox) {
                    const int x = x0 + ox, y = y0 + oy;
                    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
                    const double w = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                    streaks.at(x, y) += static_cast<float>(0.5 * strength * w);
                }
        }
    }
    // soften along the fall direction
    Kernel2D soft = motion_kernel(5.0, p.angle_deg);
    streaks = convolve2d(streaks, soft);
    for (float& v : streaks.v) v = std::min(v, 1.0f);

    ImageF out = img;
    for (int c = 0; c < 3; ++c) {
        float* dst = out.plane(c);
        for (size_t i = 0; i < out.plane_size(); ++i)
            dst[i] = std::min(1.0f, dst[i] + static_cast<float>(p.beta) * streaks.v[i]);
    }
    return out;
}

} // namespace detail

inline ImageF apply_step(const ImageF& img, const DegradationStep& step, Rng& rng) {
    validate_step(step);
    switch (step.kind()) {
        case DegradationKind::Noise:
            return detail::apply_noise(img, std::get<NoiseParams>(step.params), rng);
        case DegradationKind::MotionBlur: {
            const auto& p = std::get<MotionBlurParams>(step.params);
            return convolve_image(img, motion_kernel(p.length, p.angle_deg));
        }
        case DegradationKind::DefocusBlur: {
            const auto& p = std::get<DefocusBlurParams>(step.params);
            return convolve_image(img, disk_kernel(p.radius));
        }
        case DegradationKind::Jpeg:
            return jpeg_roundtrip(img, std::get<JpegParams>(step.params).quality);
        case DegradationKind::LowLight:
            return detail::apply_low_light(img, std::get<LowLightParams>(step.params));
        case DegradationKind::LowRes:
            return detail::apply_low_res(img, std::get<LowResParams>(step.params));
        case DegradationKind::Haze:
            return detail::apply_haze(img, std::get<HazeParams>(step.params));
        case DegradationKind::Rain:
            return detail::apply_rain(img, std::get<RainParams>(step.params), rng);
    }
    throw ParamOutOfRange("apply_step: unknown kind");
}

// Steps run strictly in listed order. Each position gets its own stream
// forked from the recipe seed, so reordering a recipe also reshuffles the
// stochastic realizations — position is part of the identity of a step.
inline std::pair<ImageF, LabelVector> apply_recipe(const ImageF& img, const Recipe& recipe) {
    validate_recipe(recipe);
    Rng root(recipe.seed);
    ImageF cur = img;
    for (size_t i = 0; i < recipe.steps.size(); ++i) {
        Rng step_rng = root.fork(0x5745ULL + i);
        cur = apply_step(cur, recipe.steps[i], step_rng);
    }
    return {std::move(cur), recipe_to_label(recipe)};
}

} // namespace qagent
