#pragma once

#include "xmodal/geometry.hpp"

namespace xmodal {

/// Per-pixel unit surface normal (3 channels) with validity mask. Orientation
/// follows the depth-derivative cross product: constant depth gives (0,0,1).
struct NormalField {
    ImagePlane n;  // 3 channels: nx, ny, nz
    std::vector<uint8_t> valid;

    Vec3 at(int x, int y) const {
        size_t p = n.pixels();
        size_t i = n.index(x, y);
        return {n.data()[i], n.data()[p + i], n.data()[2 * p + i]};
    }
};

/// Per-pixel viewing geometry. The stored view ray points from the camera
/// into the scene (unit), so cos(theta) = n . v is 1 at normal incidence.
struct ViewField {
    ImagePlane view;       // 3 channels, unit rays
    ImagePlane cos_theta;  // clamped to [0,1]
    ImagePlane theta;      // [0, pi/2]
    ImagePlane alpha;      // [0, 2pi)
};

/// Undistorted unit-z rays for every pixel (pixel centers at integer coords).
inline ImagePlane ray_grid(int width, int height, const Intrinsics& intr) {
    ImagePlane rays(width, height, 3);
    size_t n = rays.pixels();
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            Vec3 r = ray_direction({static_cast<double>(x), static_cast<double>(y)}, intr);
            size_t i = rays.index(x, y);
            rays.data()[i] = r.x;
            rays.data()[n + i] = r.y;
            rays.data()[2 * n + i] = r.z;
        }
    return rays;
}

// Four direction pairs for the robust normal: forward, backward, diagonals.
inline constexpr int kNormalDirPairs[4][2][2] = {
    {{1, 0}, {0, 1}},
    {{-1, 0}, {0, -1}},
    {{1, 1}, {-1, 1}},
    {{-1, -1}, {1, -1}},
};

namespace detail {

/// Directional difference stencil at p along dir: f(q) - f(base). When the
/// stepped pixel is unusable the interior derivative is replicated by
/// stepping backwards; both unusable leaves a null stencil.
struct DiffStencil {
    int qx = 0, qy = 0, bx = 0, by = 0;
    bool ok = false;
};

template <typename Usable>
DiffStencil diff_stencil(int x, int y, int dx, int dy, int w, int h, Usable&& usable) {
    auto in = [&](int px, int py) { return px >= 0 && px < w && py >= 0 && py < h && usable(px, py); };
    DiffStencil s;
    if (!in(x, y)) return s;
    if (in(x + dx, y + dy)) {
        s = {x + dx, y + dy, x, y, true};
    } else if (in(x - dx, y - dy)) {
        s = {x, y, x - dx, y - dy, true};
    }
    return s;
}

}  // namespace detail

/// Normal from the depth-gradient formula
///   n = (-fy dx, -fx dy, (x-cx) dx + (y-cy) dy + d), normalized,
/// with forward differences and replicated boundary derivatives.
inline NormalField normal_simple(const DepthField& depth, const Intrinsics& intr) {
    if (depth.width() < 2 || depth.height() < 2)
        throw ArgError("normal_simple: image too small for derivatives");
    const int w = depth.width(), h = depth.height();
    NormalField out{ImagePlane(w, h, 3), std::vector<uint8_t>(depth.pixels(), 0)};
    const size_t n = depth.pixels();
    auto usable = [&](int x, int y) { return depth.valid(x, y); };
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            if (!depth.valid(x, y)) continue;
            auto sx = detail::diff_stencil(x, y, 1, 0, w, h, usable);
            auto sy = detail::diff_stencil(x, y, 0, 1, w, h, usable);
            if (!sx.ok || !sy.ok) continue;
            double dx = depth.at(sx.qx, sx.qy) - depth.at(sx.bx, sx.by);
            double dy = depth.at(sy.qx, sy.qy) - depth.at(sy.bx, sy.by);
            double d = depth.at(x, y);
            Vec3 v{-intr.fy * dx, -intr.fx * dy,
                   (x - intr.cx) * dx + (y - intr.cy) * dy + d};
            double norm = v.norm();
            if (!(norm > 0) || !std::isfinite(norm)) continue;
            size_t i = depth.index(x, y);
            out.n.data()[i] = v.x / norm;
            out.n.data()[n + i] = v.y / norm;
            out.n.data()[2 * n + i] = v.z / norm;
            out.valid[i] = 1;
        }
    });
    return out;
}

/// Robust normal: cross products over four direction pairs of the 3D point
/// map P = d * ray, averaged with intensity-disparity weights
///   w_i = exp(-0.5|di_1|) * exp(-0.5|di_2|)
/// and normalized. Uniform intensity reduces to the plain average.
inline NormalField normal_weighted(const DepthField& depth, const ImagePlane& intensity,
                                   const Intrinsics& intr) {
    if (depth.width() < 2 || depth.height() < 2)
        throw ArgError("normal_weighted: image too small for derivatives");
    if (intensity.width() != depth.width() || intensity.height() != depth.height() ||
        intensity.channels() != 1)
        throw ArgError("normal_weighted: intensity must be 1-channel at depth resolution");

    const int w = depth.width(), h = depth.height();
    const size_t n = depth.pixels();
    ImagePlane rays = ray_grid(w, h, intr);
    NormalField out{ImagePlane(w, h, 3), std::vector<uint8_t>(depth.pixels(), 0)};

    auto usable = [&](int x, int y) { return depth.valid(x, y); };
    auto point = [&](int x, int y) {
        size_t i = depth.index(x, y);
        double d = depth.depth()[i];
        return Vec3{rays.data()[i] * d, rays.data()[n + i] * d, rays.data()[2 * n + i] * d};
    };

    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            if (!depth.valid(x, y)) continue;
            Vec3 acc{0, 0, 0};
            for (const auto& pair : kNormalDirPairs) {
                auto s1 = detail::diff_stencil(x, y, pair[0][0], pair[0][1], w, h, usable);
                auto s2 = detail::diff_stencil(x, y, pair[1][0], pair[1][1], w, h, usable);
                if (!s1.ok || !s2.ok) continue;
                Vec3 a = point(s1.qx, s1.qy) - point(s1.bx, s1.by);
                Vec3 b = point(s2.qx, s2.qy) - point(s2.bx, s2.by);
                double w1 = std::exp(-0.5 * std::abs(intensity.at(s1.qx, s1.qy) -
                                                     intensity.at(s1.bx, s1.by)));
                double w2 = std::exp(-0.5 * std::abs(intensity.at(s2.qx, s2.qy) -
                                                     intensity.at(s2.bx, s2.by)));
                acc = acc + a.cross(b) * (w1 * w2);
            }
            acc = acc * 0.25;
            double norm = acc.norm();
            if (!(norm > 0) || !std::isfinite(norm)) continue;
            size_t i = depth.index(x, y);
            out.n.data()[i] = acc.x / norm;
            out.n.data()[n + i] = acc.y / norm;
            out.n.data()[2 * n + i] = acc.z / norm;
            out.valid[i] = 1;
        }
    });
    return out;
}

/// Viewing angle theta = arccos(clamp(n.v, 0, 1)) and azimuth
/// alpha = atan2(ny, nx) in [0, 2pi).
inline ViewField view_geometry(const DepthField& depth, const NormalField& normals,
                               const Intrinsics& intr) {
    const int w = depth.width(), h = depth.height();
    if (normals.n.width() != w || normals.n.height() != h)
        throw ArgError("view_geometry: shape mismatch");
    ViewField out{ImagePlane(w, h, 3), ImagePlane(w, h, 1), ImagePlane(w, h, 1),
                  ImagePlane(w, h, 1)};
    const size_t n = depth.pixels();
    ImagePlane rays = ray_grid(w, h, intr);
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            size_t i = depth.index(x, y);
            Vec3 v{rays.data()[i], rays.data()[n + i], rays.data()[2 * n + i]};
            v = v.normalized();
            out.view.data()[i] = v.x;
            out.view.data()[n + i] = v.y;
            out.view.data()[2 * n + i] = v.z;
            if (!normals.valid[i]) continue;
            Vec3 nm = normals.at(x, y);
            double c = clamp(nm.dot(v), 0.0, 1.0);
            out.cos_theta.data()[i] = c;
            out.theta.data()[i] = std::acos(c);
            double a = std::atan2(nm.y, nm.x);
            if (a < 0) a += 2.0 * M_PI;
            if (a >= 2.0 * M_PI) a = 0.0;
            out.alpha.data()[i] = a;
        }
    });
    return out;
}

}  // namespace xmodal
