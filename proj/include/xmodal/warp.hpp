#pragma once

#include "xmodal/normals.hpp"

namespace xmodal {

/// Per-pixel sampling coordinates into another camera's image. Defined on the
/// grid of the depth map that induced it; mask is true iff the coordinate
/// landed inside the source rectangle with positive depth along the way.
struct FlowField {
    ImagePlane uv;              // 2 channels: u, v in source pixels
    std::vector<uint8_t> mask;  // usable taps
    int src_width = 0, src_height = 0;

    double u(int x, int y) const { return uv.at(x, y, 0); }
    double v(int x, int y) const { return uv.at(x, y, 1); }
};

/// d(u,v)/d(depth) per pixel, for the adjoint chain.
struct FlowJacobian {
    ImagePlane dd;  // 2 channels: du/dd, dv/dd
};

/// Projects every pixel of `depth` (frame A) into the image of frame B:
/// p_B = project_B(T_ab * (d * ray_A(p))). Pixels behind camera B or outside
/// its rectangle are masked out.
inline FlowField reproject_coords(const DepthField& depth, const Intrinsics& intr_a,
                                  const Intrinsics& intr_b, int width_b, int height_b,
                                  const RigidTransform& a_to_b, FlowJacobian* jac = nullptr) {
    const int w = depth.width(), h = depth.height();
    FlowField flow{ImagePlane(w, h, 2), std::vector<uint8_t>(depth.pixels(), 0), width_b, height_b};
    if (jac) jac->dd = ImagePlane(w, h, 2);
    ImagePlane rays = ray_grid(w, h, intr_a);
    const size_t n = depth.pixels();
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            size_t i = depth.index(x, y);
            if (!depth.mask()[i]) continue;
            double d = depth.depth()[i];
            if (!(d > 0)) continue;
            Vec3 ray{rays.data()[i], rays.data()[n + i], rays.data()[2 * n + i]};
            Vec3 q = a_to_b.rotation * ray;  // dY/dd
            Vec3 p = q * d + a_to_b.translation;
            Vec2 px;
            if (!try_project(p, intr_b, px)) continue;
            if (px.x < 0 || px.x > width_b - 1 || px.y < 0 || px.y > height_b - 1) continue;
            flow.uv.data()[i] = px.x;
            flow.uv.data()[n + i] = px.y;
            flow.mask[i] = 1;
            if (jac) {
                auto j = project_point_jacobian(p, intr_b);
                jac->dd.data()[i] = j[0] * q.x + j[1] * q.y + j[2] * q.z;
                jac->dd.data()[n + i] = j[3] * q.x + j[4] * q.y + j[5] * q.z;
            }
        }
    });
    return flow;
}

/// Depth -> infinity limit of reproject_coords: a pure-rotation homography,
/// independent of the translation. Used by the auto-masking loss.
inline FlowField reproject_coords_infinity(int w, int h, const Intrinsics& intr_a,
                                           const Intrinsics& intr_b, int width_b, int height_b,
                                           const RigidTransform& a_to_b) {
    FlowField flow{ImagePlane(w, h, 2), std::vector<uint8_t>(static_cast<size_t>(w) * h, 0),
                   width_b, height_b};
    ImagePlane rays = ray_grid(w, h, intr_a);
    const size_t n = flow.uv.pixels();
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            size_t i = flow.uv.index(x, y);
            Vec3 dir = a_to_b.rotation * Vec3{rays.data()[i], rays.data()[n + i], rays.data()[2 * n + i]};
            Vec2 px;
            if (!try_project(dir, intr_b, px)) continue;
            if (px.x < 0 || px.x > width_b - 1 || px.y < 0 || px.y > height_b - 1) continue;
            flow.uv.data()[i] = px.x;
            flow.uv.data()[n + i] = px.y;
            flow.mask[i] = 1;
        }
    });
    return flow;
}

/// Bilinear tap at (u,v); the +1 neighbours clamp at the border where their
/// weight is exactly zero for in-range coordinates.
struct BilinearTap {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double wx = 0, wy = 0;  // fractional parts

    double w00() const { return (1 - wx) * (1 - wy); }
    double w10() const { return wx * (1 - wy); }
    double w01() const { return (1 - wx) * wy; }
    double w11() const { return wx * wy; }
};

inline BilinearTap bilinear_tap(double u, double v, int width, int height) {
    BilinearTap t;
    t.x0 = static_cast<int>(std::floor(u));
    t.y0 = static_cast<int>(std::floor(v));
    t.x0 = clamp(t.x0, 0, width - 1);
    t.y0 = clamp(t.y0, 0, height - 1);
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    t.wx = clamp(u - t.x0, 0.0, 1.0);
    t.wy = clamp(v - t.y0, 0.0, 1.0);
    return t;
}

/// Backward warp: out(p) = bilinear(src, flow(p)); masked pixels become 0.
/// Linear in src for a fixed flow.
inline ImagePlane backward_warp(const ImagePlane& src, const FlowField& flow) {
    if (src.width() != flow.src_width || src.height() != flow.src_height)
        throw ArgError("backward_warp: src does not match the flow's source frame");
    const int w = flow.uv.width(), h = flow.uv.height();
    ImagePlane out(w, h, src.channels());
    const size_t n_out = out.pixels(), n_src = src.pixels();
    parallel_for(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            size_t i = out.index(x, y);
            if (!flow.mask[i]) continue;
            BilinearTap t = bilinear_tap(flow.uv.data()[i], flow.uv.data()[n_out + i],
                                         src.width(), src.height());
            for (int c = 0; c < src.channels(); ++c) {
                const double* s = src.data().data() + c * n_src;
                double v = t.w00() * s[src.index(t.x0, t.y0)] + t.w10() * s[src.index(t.x1, t.y0)] +
                           t.w01() * s[src.index(t.x0, t.y1)] + t.w11() * s[src.index(t.x1, t.y1)];
                out.data()[c * n_out + i] = v;
            }
        }
    });
    return out;
}

}  // namespace xmodal
