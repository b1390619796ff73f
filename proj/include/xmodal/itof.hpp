#pragma once

#include "xmodal/core.hpp"

namespace xmodal {

/// Indirect time-of-flight sensor model: a sinusoidal emission at f_M whose
/// reflection is correlated against four sample phases {0, pi/2, pi, 3pi/2}.
struct ItofConfig {
    double modulation_hz = 25e6;
    double light_speed = kSpeedOfLight;

    void validate() const {
        if (!(modulation_hz > 0)) throw ArgError("ItofConfig: modulation frequency must be > 0");
    }
    /// Depths separated by this period produce identical correlations.
    double wrap_distance() const { return light_speed / (2.0 * modulation_hz); }
};

inline constexpr double kItofSamplePhases[4] = {0.0, M_PI / 2.0, M_PI, 3.0 * M_PI / 2.0};
inline constexpr double kAmplitudeEps = 1e-9;

/// phi = (d * 4*pi*f_M / c) mod 2pi. The wrap is taken in the depth domain
/// (fmod is exact), so depths differing by an exactly representable multiple
/// of the wrap distance give bit-identical phases.
inline double phase_from_depth(double depth, const ItofConfig& cfg = {}) {
    if (!(depth >= 0)) throw ArgError("phase_from_depth: depth must be >= 0");
    double wrapped = std::fmod(depth, cfg.wrap_distance());
    double phi = wrapped * (4.0 * M_PI * cfg.modulation_hz / cfg.light_speed);
    if (phi >= 2.0 * M_PI) phi = 0.0;
    return phi;
}

/// d(phi)/d(depth); constant away from the wrap discontinuity.
inline double phase_depth_slope(const ItofConfig& cfg = {}) {
    return 4.0 * M_PI * cfg.modulation_hz / cfg.light_speed;
}

/// Inverse of phase_from_depth within the unambiguous range [0, c/(2 f_M)).
inline double depth_from_phase(double phi, const ItofConfig& cfg = {}) {
    return phi * cfg.light_speed / (4.0 * M_PI * cfg.modulation_hz);
}

inline std::array<double, 4> correlation_buckets(double depth, double amplitude, double offset,
                                                 const ItofConfig& cfg = {}) {
    double phi = phase_from_depth(depth, cfg);
    std::array<double, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = amplitude * std::cos(kItofSamplePhases[i] + phi) + offset;
    return b;
}

/// Renders the four-bucket correlation image from per-pixel depth, reflected
/// amplitude and ambient offset. Invalid depth pixels produce offset-only buckets.
inline CorrelationImage correlation_from_depth(const DepthField& depth, const ImagePlane& amplitude,
                                               const ImagePlane& offset, const ItofConfig& cfg = {}) {
    cfg.validate();
    if (amplitude.width() != depth.width() || amplitude.height() != depth.height() ||
        offset.width() != depth.width() || offset.height() != depth.height() ||
        amplitude.channels() != 1 || offset.channels() != 1)
        throw ArgError("correlation_from_depth: shape mismatch");
    for (double a : amplitude.data())
        if (a < 0) throw ArgError("correlation_from_depth: amplitude must be >= 0");

    CorrelationImage out(depth.width(), depth.height(), 4);
    parallel_for(depth.height(), [&](int y) {
        for (int x = 0; x < depth.width(); ++x) {
            size_t i = depth.index(x, y);
            double a = amplitude.data()[i], b = offset.data()[i];
            if (depth.mask()[i]) {
                auto buckets = correlation_buckets(depth.depth()[i], a, b, cfg);
                for (int c = 0; c < 4; ++c) out.data()[c * depth.pixels() + i] = buckets[c];
            } else {
                for (int c = 0; c < 4; ++c) out.data()[c * depth.pixels() + i] = b;
            }
        }
    });
    return out;
}

struct BucketRecovery {
    double phase = 0;      // [0, 2pi)
    double amplitude = 0;  // >= 0
    double offset = 0;     // bucket mean, exact
    bool phase_valid = false;  // false when amplitude < kAmplitudeEps
};

/// Four-bucket inversion: phase from the quadrature pair via atan2, amplitude
/// as half the quadrature magnitude, offset as the bucket mean.
inline BucketRecovery recover_buckets(const std::array<double, 4>& c) {
    for (double v : c)
        if (!std::isfinite(v)) throw ArgError("recover_buckets: non-finite bucket");
    BucketRecovery r;
    double sy = c[3] - c[1];  // 2 a sin(phi)
    double sx = c[0] - c[2];  // 2 a cos(phi)
    r.amplitude = 0.5 * std::sqrt(sx * sx + sy * sy);
    r.offset = 0.25 * (c[0] + c[1] + c[2] + c[3]);
    r.phase_valid = r.amplitude >= kAmplitudeEps;
    if (r.phase_valid) {
        r.phase = std::atan2(sy, sx);
        if (r.phase < 0) r.phase += 2.0 * M_PI;
        if (r.phase >= 2.0 * M_PI) r.phase = 0.0;
    }
    return r;
}

struct RecoveredItof {
    ImagePlane phase, amplitude, offset;  // 1 channel each
    std::vector<uint8_t> phase_valid;     // per-pixel AmplitudeZero flag inverse
};

inline RecoveredItof recover_from_buckets(const CorrelationImage& corr) {
    if (corr.channels() != 4) throw ArgError("recover_from_buckets: need 4 channels");
    RecoveredItof out{ImagePlane(corr.width(), corr.height(), 1),
                      ImagePlane(corr.width(), corr.height(), 1),
                      ImagePlane(corr.width(), corr.height(), 1),
                      std::vector<uint8_t>(corr.pixels(), 0)};
    const size_t n = corr.pixels();
    parallel_for(corr.height(), [&](int y) {
        for (int x = 0; x < corr.width(); ++x) {
            size_t i = out.phase.index(x, y);
            auto r = recover_buckets({corr.data()[i], corr.data()[n + i], corr.data()[2 * n + i],
                                      corr.data()[3 * n + i]});
            out.phase.data()[i] = r.phase;
            out.amplitude.data()[i] = r.amplitude;
            out.offset.data()[i] = r.offset;
            out.phase_valid[i] = r.phase_valid ? 1 : 0;
        }
    });
    return out;
}

}  // namespace xmodal
