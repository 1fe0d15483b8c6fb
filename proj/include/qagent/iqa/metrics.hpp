#pragma once

#include <array>
#include <optional>

#include "qagent/iqa/brisque.hpp"
#include "qagent/iqa/cpbd.hpp"
#include "qagent/iqa/niqe.hpp"
#include "qagent/iqa/proxies.hpp"

// The five-slot quality vector and its signed aggregation — the scalar that
// drives every greedy decision.

namespace qagent {

struct MetricVector {
    double ni = 0.0; // naturalness distance; higher = worse
    double br = 0.0; // distortion index [0,100]; higher = worse
    double cp = 0.0; // sharpness [0,1]; higher = better
    double cl = 0.0; // global appearance [0,1]; higher = better
    double hy = 0.0; // local-artifact score [0,1]; higher = better
    // slot order [ni, br, cp, cl, hy], each percentile-normalized to [0,1]
    std::optional<std::array<double, 5>> normalized;
};

enum class QualityMode { RawEq1, Normalized };

inline const char* quality_mode_name(QualityMode m) {
    return m == QualityMode::RawEq1 ? "raw_eq1" : "normalized";
}

struct QualityScore {
    double value = 0.0;
    QualityMode mode = QualityMode::Normalized;
};

// RawEq1: (cp + cl + hy - ni - br) / 5 on raw scales.
// Normalized: same five-way mean with every slot percentile-normalized and
// the two badness slots flipped to 1-x first, so the result lives in [0,1]
// and is monotone the same way (up in cp/cl/hy, down in ni/br).
inline QualityScore quality_score(const MetricVector& v, QualityMode mode) {
    if (mode == QualityMode::RawEq1)
        return {(v.cp + v.cl + v.hy - v.ni - v.br) / 5.0, mode};
    if (!v.normalized)
        throw MissingSlots("quality_score: normalized slots absent");
    const auto& n = *v.normalized;
    return {((1.0 - n[0]) + (1.0 - n[1]) + n[2] + n[3] + n[4]) / 5.0, mode};
}

} // namespace qagent
