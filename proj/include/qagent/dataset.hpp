#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qagent/codec.hpp"
#include "qagent/degrade.hpp"
#include "qagent/error.hpp"
#include "qagent/rng.hpp"

// Recipe sampling and dataset generation. Every degraded image carries a
// JSONL manifest row naming its source, its ordered steps with verbatim
// parameters, and the 10-bit label; the whole construction replays
// byte-for-byte from the top-level seed.

namespace qagent {

using json = nlohmann::json;

struct ManifestRow {
    std::string id;
    std::string source;
    std::string degraded;
    Recipe recipe;
    LabelVector label;
};

using Manifest = std::vector<ManifestRow>;

// --- JSON encoding ---------------------------------------------------------

inline json step_params_to_json(const DegradationStep& s) {
    json j;
    switch (s.kind()) {
        case DegradationKind::Noise:
            j["sigma"] = std::get<NoiseParams>(s.params).sigma;
            break;
        case DegradationKind::MotionBlur: {
            const auto& p = std::get<MotionBlurParams>(s.params);
            j["length"] = p.length;
            j["angle_deg"] = p.angle_deg;
            break;
        }
        case DegradationKind::DefocusBlur:
            j["radius"] = std::get<DefocusBlurParams>(s.params).radius;
            break;
        case DegradationKind::Jpeg:
            j["quality"] = std::get<JpegParams>(s.params).quality;
            break;
        case DegradationKind::LowLight: {
            const auto& p = std::get<LowLightParams>(s.params);
            j["gamma"] = p.gamma;
            j["gain"] = p.gain;
            break;
        }
        case DegradationKind::LowRes:
            j["scale"] = std::get<LowResParams>(s.params).scale;
            break;
        case DegradationKind::Haze: {
            const auto& p = std::get<HazeParams>(s.params);
            j["t"] = p.t;
            j["airlight"] = p.airlight;
            break;
        }
        case DegradationKind::Rain: {
            const auto& p = std::get<RainParams>(s.params);
            j["angle_deg"] = p.angle_deg;
            j["length"] = p.length;
            j["density"] = p.density;
            j["beta"] = p.beta;
            break;
        }
    }
    return j;
}

inline DegradationStep step_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const std::string sev = j.value("severity", "mid");
    DegradationStep s;
    s.severity = sev == "low" ? Severity::Low : sev == "high" ? Severity::High : Severity::Mid;
    const json& p = j.at("params");
    if (kind == "noise") {
        s.params = NoiseParams{p.at("sigma").get<double>()};
    } else if (kind == "motion_blur") {
        s.params = MotionBlurParams{p.at("length").get<double>(), p.at("angle_deg").get<double>()};
    } else if (kind == "defocus_blur") {
        s.params = DefocusBlurParams{p.at("radius").get<double>()};
    } else if (kind == "jpeg") {
        s.params = JpegParams{p.at("quality").get<int>()};
    } else if (kind == "low_light") {
        s.params = LowLightParams{p.at("gamma").get<double>(), p.at("gain").get<double>()};
    } else if (kind == "low_res") {
        s.params = LowResParams{p.at("scale").get<int>()};
    } else if (kind == "haze") {
        s.params = HazeParams{p.at("t").get<double>(), p.at("airlight").get<std::array<double, 3>>()};
    } else if (kind == "rain") {
        s.params = RainParams{p.at("angle_deg").get<double>(), p.at("length").get<double>(),
                              p.at("density").get<double>(), p.at("beta").get<double>()};
    } else {
        throw ConfigError("manifest: unknown step kind '" + kind + "'");
    }
    return s;
}

inline json row_to_json(const ManifestRow& row) {
    json steps = json::array();
    for (size_t i = 0; i < row.recipe.steps.size(); ++i) {
        const DegradationStep& s = row.recipe.steps[i];
        steps.push_back({{"kind", kind_name(s.kind())},
                         {"order", i + 1},
                         {"params", step_params_to_json(s)},
                         {"severity", severity_name(s.severity)}});
    }
    return json{{"id", row.id},
                {"source", row.source},
                {"degraded", row.degraded},
                {"steps", steps},
                {"label", row.label.bits},
                {"seed", row.recipe.seed}};
}

inline ManifestRow row_from_json(const json& j) {
    ManifestRow row;
    row.id = j.at("id").get<std::string>();
    row.source = j.at("source").get<std::string>();
    row.degraded = j.at("degraded").get<std::string>();
    row.recipe.seed = j.at("seed").get<uint64_t>();
    row.recipe.source_id = row.id;
    std::vector<std::pair<int, DegradationStep>> ordered;
    for (const json& sj : j.at("steps"))
        ordered.emplace_back(sj.at("order").get<int>(), step_from_json(sj));
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [order, step] : ordered) row.recipe.steps.push_back(step);
    row.label.bits = j.at("label").get<std::array<int, 10>>();
    return row;
}

inline void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const ManifestRow& row : m) out << row_to_json(row).dump() << "\n";
}

inline Manifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Manifest m;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            m.push_back(row_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ConfigError("manifest " + path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

// --- recipe sampling --------------------------------------------------------

inline DegradationStep sample_step(DegradationKind kind, Rng& rng) {
    switch (kind) {
        case DegradationKind::Noise: {
            const Severity sev = static_cast<Severity>(rng.uniform_int(0, 2));
            return make_noise_step(sev);
        }
        case DegradationKind::MotionBlur:
            return {MotionBlurParams{rng.uniform(9.0, 21.0), rng.uniform(0.0, 180.0)}, Severity::Mid};
        case DegradationKind::DefocusBlur:
            return {DefocusBlurParams{rng.uniform(2.0, 6.0)}, Severity::Mid};
        case DegradationKind::Jpeg:
            return {JpegParams{rng.uniform_int(10, 40)}, Severity::Mid};
        case DegradationKind::LowLight:
            return {LowLightParams{rng.uniform(1.8, 3.0), rng.uniform(0.5, 0.9)}, Severity::Mid};
        case DegradationKind::LowRes:
            return {LowResParams{rng.uniform_int(2, 4)}, Severity::Mid};
        case DegradationKind::Haze:
            return {HazeParams{rng.uniform(0.4, 0.75),
                               {rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)}},
                    Severity::Mid};
        case DegradationKind::Rain:
            return {RainParams{rng.uniform(60.0, 120.0), rng.uniform(12.0, 30.0),
                               rng.uniform(0.002, 0.01), rng.uniform(0.6, 0.9)},
                    Severity::Mid};
    }
    throw ParamOutOfRange("sample_step: unknown kind");
}

// Uniform over: step count 1..4, ordered kind subsets without replacement,
// params within their legal ranges.
inline Recipe sample_recipe(uint64_t recipe_seed, const std::string& source_id, int min_steps = 1,
                            int max_steps = 4) {
    Rng rng(Rng::mix(recipe_seed, 0x7265636970656aULL));
    Recipe r;
    r.seed = recipe_seed;
    r.source_id = source_id;
    const int count = rng.uniform_int(min_steps, max_steps);
    std::array<int, kNumDegradationKinds> kinds{};
    for (int i = 0; i < kNumDegradationKinds; ++i) kinds[static_cast<size_t>(i)] = i;
    // Fisher-Yates; the prefix is a uniform ordered selection
    for (int i = kNumDegradationKinds - 1; i > 0; --i)
        std::swap(kinds[static_cast<size_t>(i)], kinds[static_cast<size_t>(rng.uniform_int(0, i))]);
    for (int i = 0; i < count; ++i)
        r.steps.push_back(sample_step(static_cast<DegradationKind>(kinds[static_cast<size_t>(i)]), rng));
    return r;
}

// --- dataset generation -----------------------------------------------------

inline std::vector<std::string> list_sources(const std::string& src_dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> out;
    if (!fs::is_directory(src_dir)) throw IoError("not a directory: " + src_dir);
    for (const auto& e : fs::directory_iterator(src_dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw EmptySourceSet("no .png/.jpg sources in " + src_dir);
    return out;
}

inline uint64_t recipe_seed_for(uint64_t dataset_seed, const std::string& source_id, int variant) {
    return Rng::mix(Rng::mix(dataset_seed, Rng::hash_str(source_id)), static_cast<uint64_t>(variant));
}

inline Manifest generate_dataset(const std::string& src_dir, const std::string& out_dir,
                                 int variants_per_source, uint64_t seed) {
    namespace fs = std::filesystem;
    if (variants_per_source < 1) throw ParamOutOfRange("variants_per_source must be >= 1");
    const std::vector<std::string> sources = list_sources(src_dir);
    fs::create_directories(out_dir);

    Manifest manifest;
    for (const std::string& src : sources) {
        const std::string stem = fs::path(src).stem().string();
        const ImageF img = load_image(src);
        for (int v = 0; v < variants_per_source; ++v) {
            ManifestRow row;
            row.id = stem + "_v" + std::to_string(v);
            row.source = src;
            row.degraded = (fs::path(out_dir) / (row.id + ".png")).string();
            row.recipe = sample_recipe(recipe_seed_for(seed, row.id, v), row.id);
            auto [degraded, label] = apply_recipe(img, row.recipe);
            row.label = label;
            save_png(degraded, row.degraded);
            manifest.push_back(std::move(row));
        }
    }
    return manifest;
}

} // namespace qagent
