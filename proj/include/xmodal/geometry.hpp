#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "xmodal/core.hpp"

namespace xmodal {

// ------------------------------------------------------------ small algebra

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
    }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
    double orthonormality_drift() const {
        Mat3 g = transposed() * (*this);
        double worst = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        return worst;
    }
};

// quaternion round-trip; used to renormalize drifting rotations
inline std::array<double, 4> quat_from_rotation(const Mat3& r) {
    std::array<double, 4> q{};  // w x y z
    double tr = r(0, 0) + r(1, 1) + r(2, 2);
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2;
        q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2;
        q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2;
        q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
    }
    return q;
}

inline Mat3 rotation_from_quat(std::array<double, 4> q) {
    double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& v : q) v /= n;
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
}

/// Rodrigues exponential for small-angle updates.
inline Mat3 rotation_exp(const Vec3& w) {
    double theta = w.norm();
    Mat3 r = Mat3::identity();
    double a, b;
    if (theta < 1e-9) {
        a = 1.0 - theta * theta / 6.0;
        b = 0.5 - theta * theta / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / (theta * theta);
    }
    Mat3 k;  // [w]x
    k.m = {0, -w.z, w.y, w.z, 0, -w.x, -w.y, w.x, 0};
    Mat3 kk = k * k;
    for (int i = 0; i < 9; ++i) r.m[i] += a * k.m[i] + b * kk.m[i];
    return r;
}

// ------------------------------------------------------------- rigid SE(3)

constexpr double kRotationTol = 1e-9;

/// p_out = R * p_in + t
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    RigidTransform inverse() const {
        Mat3 rt = rotation.transposed();
        return {rt, -(rt * translation)};
    }

    void validate() const {
        if (rotation.orthonormality_drift() > kRotationTol)
            throw ArgError("RigidTransform: rotation not orthonormal");
        if (std::abs(rotation.det() - 1.0) > kRotationTol)
            throw ArgError("RigidTransform: rotation determinant != 1");
    }

    void renormalize() { rotation = rotation_from_quat(quat_from_rotation(rotation)); }
};

/// a then b is compose(b, a): compose(b,a).apply(p) == b.apply(a.apply(p)).
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform r{outer.rotation * inner.rotation,
                     outer.rotation * inner.translation + outer.translation};
    if (r.rotation.orthonormality_drift() > kRotationTol) r.renormalize();
    return r;
}

inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

// ----------------------------------------------------------------- cameras

/// Pinhole intrinsics with OpenCV-convention radial-tangential distortion
/// (k1, k2, p1, p2, k3).
struct Intrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    std::array<double, 5> dist{0, 0, 0, 0, 0};

    void validate() const {
        if (!(fx > 0) || !(fy > 0)) throw ArgError("Intrinsics: focal lengths must be > 0");
    }
    bool has_distortion() const {
        for (double d : dist)
            if (d != 0) return true;
        return false;
    }
};

inline Vec2 distort_normalized(const Vec2& p, const std::array<double, 5>& k) {
    double x = p.x, y = p.y;
    double s = x * x + y * y;
    double radial = 1.0 + s * (k[0] + s * (k[1] + s * k[4]));
    return {x * radial + 2.0 * k[2] * x * y + k[3] * (s + 2.0 * x * x),
            y * radial + k[2] * (s + 2.0 * y * y) + 2.0 * k[3] * x * y};
}

/// d(distorted)/d(normalized), needed by the warp adjoint and calibration.
struct Jac22 {
    double a = 1, b = 0, c = 0, d = 1;  // [[a,b],[c,d]]
};

inline Jac22 distort_jacobian(const Vec2& p, const std::array<double, 5>& k) {
    double x = p.x, y = p.y;
    double s = x * x + y * y;
    double radial = 1.0 + s * (k[0] + s * (k[1] + s * k[4]));
    double dr_ds = k[0] + 2.0 * k[1] * s + 3.0 * k[4] * s * s;
    Jac22 j;
    j.a = radial + x * dr_ds * 2.0 * x + 2.0 * k[2] * y + 6.0 * k[3] * x;
    j.b = x * dr_ds * 2.0 * y + 2.0 * k[2] * x + 2.0 * k[3] * y;
    j.c = y * dr_ds * 2.0 * x + 2.0 * k[2] * x + 2.0 * k[3] * y;
    j.d = radial + y * dr_ds * 2.0 * y + 6.0 * k[2] * y + 2.0 * k[3] * x;
    return j;
}

constexpr int kUndistortMaxIters = 20;
constexpr double kUndistortTol = 1e-10;

/// Fixed-point inversion of distort_normalized.
inline Vec2 undistort_normalized(const Vec2& pd, const std::array<double, 5>& k) {
    Vec2 p = pd;
    for (int it = 0; it < kUndistortMaxIters; ++it) {
        Vec2 d = distort_normalized(p, k);
        Vec2 err{d.x - pd.x, d.y - pd.y};
        p.x -= err.x;
        p.y -= err.y;
        if (std::abs(err.x) < kUndistortTol && std::abs(err.y) < kUndistortTol) return p;
    }
    Vec2 d = distort_normalized(p, k);
    if (std::abs(d.x - pd.x) > kUndistortTol || std::abs(d.y - pd.y) > kUndistortTol)
        throw NumericError("undistort_normalized: no convergence after 20 iterations");
    return p;
}

inline bool try_project(const Vec3& point, const Intrinsics& intr, Vec2& px) {
    if (!(point.z > 0)) return false;
    Vec2 n{point.x / point.z, point.y / point.z};
    Vec2 d = distort_normalized(n, intr.dist);
    px = {intr.fx * d.x + intr.cx, intr.fy * d.y + intr.cy};
    return true;
}

inline Vec2 project(const Vec3& point, const Intrinsics& intr) {
    Vec2 px;
    if (!try_project(point, intr, px))
        throw BehindCameraError("project: point is behind the camera");
    return px;
}

/// Ray direction with unit z through pixel p (undistorts first).
inline Vec3 ray_direction(const Vec2& px, const Intrinsics& intr) {
    Vec2 nd{(px.x - intr.cx) / intr.fx, (px.y - intr.cy) / intr.fy};
    Vec2 n = intr.has_distortion() ? undistort_normalized(nd, intr.dist) : nd;
    return {n.x, n.y, 1.0};
}

inline Vec3 backproject(const Vec2& px, double depth, const Intrinsics& intr) {
    if (!(depth > 0)) throw ArgError("backproject: depth must be > 0");
    return ray_direction(px, intr) * depth;
}

/// d(pixel)/d(point) for the distorted pinhole projection, 2x3 row-major.
inline std::array<double, 6> project_point_jacobian(const Vec3& point, const Intrinsics& intr) {
    double iz = 1.0 / point.z;
    Vec2 n{point.x * iz, point.y * iz};
    Jac22 jd = distort_jacobian(n, intr.dist);
    // rows scaled by (fx, fy); J_norm = [[iz,0,-x*iz2],[0,iz,-y*iz2]]
    double iz2 = iz * iz;
    std::array<double, 6> j{};
    j[0] = intr.fx * jd.a * iz;
    j[1] = intr.fx * jd.b * iz;
    j[2] = intr.fx * (-jd.a * point.x * iz2 - jd.b * point.y * iz2);
    j[3] = intr.fy * jd.c * iz;
    j[4] = intr.fy * jd.d * iz;
    j[5] = intr.fy * (-jd.c * point.x * iz2 - jd.d * point.y * iz2);
    return j;
}

// --------------------------------------------------------------- camera rig

enum class CameraRole { pol_left, pol_right, itof, structured_light };

inline const char* to_string(CameraRole r) {
    switch (r) {
        case CameraRole::pol_left: return "pol_left";
        case CameraRole::pol_right: return "pol_right";
        case CameraRole::itof: return "itof";
        case CameraRole::structured_light: return "structured_light";
    }
    return "?";
}

inline std::optional<CameraRole> camera_role_from_string(const std::string& s) {
    if (s == "pol_left") return CameraRole::pol_left;
    if (s == "pol_right") return CameraRole::pol_right;
    if (s == "itof") return CameraRole::itof;
    if (s == "structured_light") return CameraRole::structured_light;
    return std::nullopt;
}

struct CameraModel {
    CameraRole role = CameraRole::pol_left;
    int width = 0, height = 0;
    Intrinsics intrinsics;
    /// Maps reference-frame (left pol camera) points into this camera's frame.
    RigidTransform cam_from_ref;
};

/// Four rigidly mounted cameras; the left polarisation camera is the
/// reference frame, so its extrinsic must stay the identity.
struct CameraRig {
    std::vector<CameraModel> cameras;

    const CameraModel& get(CameraRole role) const {
        for (const auto& c : cameras)
            if (c.role == role) return c;
        throw ArgError(std::string("CameraRig: missing camera ") + to_string(role));
    }
    CameraModel& get(CameraRole role) {
        for (auto& c : cameras)
            if (c.role == role) return c;
        throw ArgError(std::string("CameraRig: missing camera ") + to_string(role));
    }
    bool has(CameraRole role) const {
        for (const auto& c : cameras)
            if (c.role == role) return true;
        return false;
    }

    void validate() const {
        for (const auto& c : cameras) {
            c.intrinsics.validate();
            c.cam_from_ref.validate();
            if (c.width < 1 || c.height < 1) throw ArgError("CameraRig: bad resolution");
        }
        if (!has(CameraRole::pol_left)) throw ArgError("CameraRig: pol_left required");
        const auto& ref = get(CameraRole::pol_left);
        Mat3 r = ref.cam_from_ref.rotation;
        double drift = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                drift = std::max(drift, std::abs(r(i, j) - (i == j ? 1.0 : 0.0)));
        drift = std::max(drift, ref.cam_from_ref.translation.norm());
        if (drift > 1e-12) throw ArgError("CameraRig: pol_left extrinsic must be identity");
    }

    /// Points from camera a's frame into camera b's frame.
    RigidTransform relative(CameraRole a, CameraRole b) const {
        return compose(get(b).cam_from_ref, get(a).cam_from_ref.inverse());
    }
};

// ------------------------------------------------------------- rig file io

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw FormatError(context + ": trailing characters in '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw FormatError(context + ": not a number: '" + s + "'");
    } catch (const std::out_of_range&) {
        throw FormatError(context + ": out of range: '" + s + "'");
    }
}

inline std::vector<double> parse_doubles(const std::string& s, size_t n, const std::string& ctx) {
    std::istringstream iss(s);
    std::vector<double> out;
    std::string tok;
    while (iss >> tok) out.push_back(parse_double(tok, ctx));
    if (out.size() != n)
        throw FormatError(ctx + ": expected " + std::to_string(n) + " values");
    return out;
}

}  // namespace detail

inline void save_rig(const CameraRig& rig, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_rig: cannot open " + path);
    for (const auto& c : rig.cameras) {
        f << "camera=" << to_string(c.role) << "\n";
        f << "width=" << c.width << "\n";
        f << "height=" << c.height << "\n";
        f << "fx=" << detail::format_double(c.intrinsics.fx) << "\n";
        f << "fy=" << detail::format_double(c.intrinsics.fy) << "\n";
        f << "cx=" << detail::format_double(c.intrinsics.cx) << "\n";
        f << "cy=" << detail::format_double(c.intrinsics.cy) << "\n";
        f << "k1=" << detail::format_double(c.intrinsics.dist[0]) << "\n";
        f << "k2=" << detail::format_double(c.intrinsics.dist[1]) << "\n";
        f << "p1=" << detail::format_double(c.intrinsics.dist[2]) << "\n";
        f << "p2=" << detail::format_double(c.intrinsics.dist[3]) << "\n";
        f << "k3=" << detail::format_double(c.intrinsics.dist[4]) << "\n";
        f << "rotation=";
        for (int i = 0; i < 9; ++i) f << (i ? " " : "") << detail::format_double(c.cam_from_ref.rotation.m[i]);
        f << "\n";
        f << "translation=" << detail::format_double(c.cam_from_ref.translation.x) << " "
          << detail::format_double(c.cam_from_ref.translation.y) << " "
          << detail::format_double(c.cam_from_ref.translation.z) << "\n";
        f << "\n";
    }
    if (!f) throw IoError("save_rig: write failed for " + path);
}

inline CameraRig load_rig(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_rig: cannot open " + path);
    CameraRig rig;
    CameraModel cur;
    bool open = false;
    std::string line;
    int lineno = 0;
    auto flush = [&] {
        if (open) rig.cameras.push_back(cur);
        cur = CameraModel{};
        open = false;
    };
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("rig:" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        std::string ctx = "rig:" + std::to_string(lineno);
        if (key == "camera") {
            flush();
            auto role = camera_role_from_string(val);
            if (!role) throw FormatError(ctx + ": unknown camera role '" + val + "'");
            cur.role = *role;
            open = true;
            continue;
        }
        if (!open) throw FormatError(ctx + ": key before any camera= line");
        if (key == "width")
            cur.width = static_cast<int>(detail::parse_double(val, ctx));
        else if (key == "height")
            cur.height = static_cast<int>(detail::parse_double(val, ctx));
        else if (key == "fx")
            cur.intrinsics.fx = detail::parse_double(val, ctx);
        else if (key == "fy")
            cur.intrinsics.fy = detail::parse_double(val, ctx);
        else if (key == "cx")
            cur.intrinsics.cx = detail::parse_double(val, ctx);
        else if (key == "cy")
            cur.intrinsics.cy = detail::parse_double(val, ctx);
        else if (key == "k1")
            cur.intrinsics.dist[0] = detail::parse_double(val, ctx);
        else if (key == "k2")
            cur.intrinsics.dist[1] = detail::parse_double(val, ctx);
        else if (key == "p1")
            cur.intrinsics.dist[2] = detail::parse_double(val, ctx);
        else if (key == "p2")
            cur.intrinsics.dist[3] = detail::parse_double(val, ctx);
        else if (key == "k3")
            cur.intrinsics.dist[4] = detail::parse_double(val, ctx);
        else if (key == "rotation") {
            auto v = detail::parse_doubles(val, 9, ctx);
            std::copy(v.begin(), v.end(), cur.cam_from_ref.rotation.m.begin());
        } else if (key == "translation") {
            auto v = detail::parse_doubles(val, 3, ctx);
            cur.cam_from_ref.translation = {v[0], v[1], v[2]};
        } else {
            throw FormatError(ctx + ": unknown key '" + key + "'");
        }
    }
    flush();
    try {
        rig.validate();
    } catch (const ArgError& e) {
        throw FormatError(std::string("rig: ") + e.what());
    }
    return rig;
}

}  // namespace xmodal
