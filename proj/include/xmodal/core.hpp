#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace xmodal {

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct BehindCameraError : Error { using Error::Error; };
struct DivergedError : Error { using Error::Error; };
struct SingularError : Error { using Error::Error; };
struct MissingDataError : Error { using Error::Error; };

// ---------------------------------------------------------------- images

/// Dense row-major, channel-planar image. Plane c starts at c*width*height.
/// Values are kept in double; the on-disk interchange format is f32le (io.hpp).
class ImagePlane {
public:
    ImagePlane() = default;
    ImagePlane(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels) {
        if (width < 1 || height < 1 || channels < 1)
            throw ArgError("ImagePlane: dimensions must be >= 1");
        data_.assign(static_cast<size_t>(width) * height * channels, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    size_t size() const { return data_.size(); }
    size_t pixels() const { return static_cast<size_t>(width_) * height_; }

    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    size_t index(int x, int y, int c = 0) const {
        return (static_cast<size_t>(c) * height_ + y) * width_ + x;
    }
    bool contains(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }
    bool same_shape(const ImagePlane& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int width_ = 0, height_ = 0, channels_ = 0;
    std::vector<double> data_;
};

/// Per-pixel metric depth with a validity mask. Invalid pixels serialize as NaN.
class DepthField {
public:
    DepthField() = default;
    DepthField(int width, int height, double fill = 0.0, bool valid = true)
        : width_(width), height_(height) {
        if (width < 1 || height < 1)
            throw ArgError("DepthField: dimensions must be >= 1");
        depth_.assign(static_cast<size_t>(width) * height, fill);
        valid_.assign(depth_.size(), valid ? 1 : 0);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    size_t pixels() const { return depth_.size(); }

    double& at(int x, int y) { return depth_[index(x, y)]; }
    double at(int x, int y) const { return depth_[index(x, y)]; }
    bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
    void set_valid(int x, int y, bool v) { valid_[index(x, y)] = v ? 1 : 0; }

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width_ + x; }
    bool contains(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }
    bool same_shape(const DepthField& o) const {
        return width_ == o.width_ && height_ == o.height_;
    }
    size_t valid_count() const {
        size_t n = 0;
        for (auto v : valid_) n += v;
        return n;
    }

    std::vector<double>& depth() { return depth_; }
    const std::vector<double>& depth() const { return depth_; }
    std::vector<uint8_t>& mask() { return valid_; }
    const std::vector<uint8_t>& mask() const { return valid_; }

    /// One-channel image with NaN at invalid pixels (serialization form).
    ImagePlane to_plane() const {
        ImagePlane img(width_, height_, 1);
        for (size_t i = 0; i < depth_.size(); ++i)
            img.data()[i] = valid_[i] ? depth_[i] : std::numeric_limits<double>::quiet_NaN();
        return img;
    }
    static DepthField from_plane(const ImagePlane& img) {
        if (img.channels() != 1) throw ArgError("DepthField: expected 1 channel");
        DepthField d(img.width(), img.height());
        for (size_t i = 0; i < d.depth_.size(); ++i) {
            double v = img.data()[i];
            d.depth_[i] = std::isfinite(v) ? v : 0.0;
            d.valid_[i] = std::isfinite(v) ? 1 : 0;
        }
        return d;
    }

private:
    int width_ = 0, height_ = 0;
    std::vector<double> depth_;
    std::vector<uint8_t> valid_;
};

// 4-channel containers share ImagePlane; the aliases mark intent at call sites.
using PolarisationImage = ImagePlane;  // channels = polariser angles {0, pi/4, pi/2, 3pi/4} (x color planes)
using CorrelationImage = ImagePlane;   // channels = buckets at sample phases {0, pi/2, pi, 3pi/2}

// ------------------------------------------------------------- threading

namespace detail {
inline int& thread_count_ref() {
    static int n = 1;
    return n;
}
}  // namespace detail

inline void set_threads(int n) {
    detail::thread_count_ref() = std::max(1, n);
}
inline int thread_count() { return detail::thread_count_ref(); }

/// Runs f(i) for i in [0,n). Work is split by row blocks; output must be
/// written to disjoint locations so the result is independent of the split.
template <typename F>
void parallel_for(int n, F&& f) {
    int threads = std::min(thread_count(), n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&f, lo, hi] {
            for (int i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

// ------------------------------------------------------------------- rng

/// Counter-based generator: the value at (seed, stream, counter) is fixed,
/// so per-pixel noise does not depend on evaluation order or thread count.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t counter_hash(uint64_t seed, uint64_t stream, uint64_t counter) {
    return splitmix64(splitmix64(seed ^ 0x8f1bbcdcbfa53e0bULL * stream) + counter);
}

/// Uniform in [0,1).
inline double counter_uniform(uint64_t seed, uint64_t stream, uint64_t counter) {
    return static_cast<double>(counter_hash(seed, stream, counter) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two counter draws.
inline double counter_gaussian(uint64_t seed, uint64_t stream, uint64_t counter) {
    double u1 = counter_uniform(seed, stream, 2 * counter);
    double u2 = counter_uniform(seed, stream, 2 * counter + 1);
    u1 = std::max(u1, 0x1.0p-60);  // keep log finite
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ----------------------------------------------------------------- misc

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

template <typename T>
T clamp(T v, T lo, T hi) {
    return std::min(std::max(v, lo), hi);
}

/// Mean of the channel planes; used to estimate unpolarised intensity from a
/// polarisation image (the four-angle mean equals i_un for the cosine model).
inline ImagePlane channel_mean(const ImagePlane& img) {
    ImagePlane out(img.width(), img.height(), 1);
    const double inv = 1.0 / img.channels();
    for (int c = 0; c < img.channels(); ++c) {
        const double* src = img.data().data() + img.pixels() * c;
        for (size_t i = 0; i < img.pixels(); ++i) out.data()[i] += src[i];
    }
    for (size_t i = 0; i < img.pixels(); ++i) out.data()[i] *= inv;
    return out;
}

/// Value at the given quantile (nearest-rank on the sorted copy).
inline double percentile(const std::vector<double>& values, double q) {
    if (values.empty()) throw ArgError("percentile: empty input");
    std::vector<double> tmp(values);
    size_t idx = static_cast<size_t>(std::llround(q * static_cast<double>(tmp.size() - 1)));
    std::nth_element(tmp.begin(), tmp.begin() + idx, tmp.end());
    return tmp[idx];
}

}  // namespace xmodal
