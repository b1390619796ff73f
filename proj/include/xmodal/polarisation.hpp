#pragma once

#include "xmodal/normals.hpp"

namespace xmodal {

enum class ReflectionType { diffuse, specular };

inline constexpr double kPolariserAngles[4] = {0.0, M_PI / 4.0, M_PI / 2.0, 3.0 * M_PI / 4.0};
inline constexpr double kDefaultRefractiveIndex = 1.5;

// Grazing clamp for the specular curve; evaluated at theta = pi/2 - 1e-6.
inline const double kSpecularCosFloor = std::cos(M_PI / 2.0 - 1e-6);

/// Degree of linear polarisation as a function of c = cos(theta). Working in
/// the cosine avoids the arccos singularity when chaining gradients at
/// normal incidence.
inline double dop_from_cos(double c, double eta, ReflectionType type) {
    if (!(eta > 1.0)) throw ArgError("degree_of_polarisation: eta must be > 1");
    c = clamp(c, 0.0, 1.0);
    if (type == ReflectionType::specular) c = std::max(c, kSpecularCosFloor);
    double u = 1.0 - c * c;  // sin^2(theta)
    double g = std::sqrt(eta * eta - u);
    if (type == ReflectionType::specular) {
        double num = 2.0 * u * c * g;
        double den = eta * eta - u - eta * eta * u + 2.0 * u * u;
        return num / den;
    }
    double a = eta - 1.0 / eta;
    double b = eta + 1.0 / eta;
    double num = a * a * u;
    double den = 2.0 + 2.0 * eta * eta - b * b * u + 4.0 * c * g;
    return num / den;
}

/// d(dop)/d(cos theta); zero in the clamped regions.
inline double dop_dcos(double c, double eta, ReflectionType type) {
    if (c <= 0.0 || c >= 1.0) return 0.0;
    if (type == ReflectionType::specular && c <= kSpecularCosFloor) return 0.0;
    double u = 1.0 - c * c;
    double du = -2.0 * c;
    double g = std::sqrt(eta * eta - u);
    double dg = -du / (2.0 * g);
    if (type == ReflectionType::specular) {
        double num = 2.0 * u * c * g;
        double dnum = 2.0 * (du * c * g + u * g + u * c * dg);
        double den = eta * eta - u - eta * eta * u + 2.0 * u * u;
        double dden = du * (4.0 * u - 1.0 - eta * eta);
        return (dnum * den - num * dden) / (den * den);
    }
    double a = eta - 1.0 / eta;
    double b = eta + 1.0 / eta;
    double num = a * a * u;
    double dnum = a * a * du;
    double den = 2.0 + 2.0 * eta * eta - b * b * u + 4.0 * c * g;
    double dden = -b * b * du + 4.0 * g + 4.0 * c * dg;
    return (dnum * den - num * dden) / (den * den);
}

/// Spec-facing form over the viewing angle theta in [0, pi/2).
inline double degree_of_polarisation(double theta, double eta, ReflectionType type) {
    if (!(theta >= 0.0) || theta > M_PI / 2.0)
        throw ArgError("degree_of_polarisation: theta outside [0, pi/2]");
    return dop_from_cos(std::cos(theta), eta, type);
}

/// Angle of polarisation in [0, pi): azimuth for diffuse, azimuth + pi/2 for
/// specular, both modulo pi.
inline double polarisation_phase(double alpha, ReflectionType type) {
    double phi = (type == ReflectionType::diffuse) ? alpha : alpha + M_PI / 2.0;
    phi = std::fmod(phi, M_PI);
    if (phi < 0) phi += M_PI;
    return phi;
}

/// i = i_un * (1 + rho * cos(2 phi_pol - 2 phi)).
inline double polarisation_intensity(double i_un, double rho, double phi, double phi_pol) {
    return i_un * (1.0 + rho * std::cos(2.0 * phi_pol - 2.0 * phi));
}

/// Per-pixel reflection map; synthetic scenes carry one, recovery renders
/// both branches and lets the loss pick per pixel.
using ReflectionMap = std::vector<ReflectionType>;

/// Polariser modulation factors m = 1 + rho cos(2 phi_pol - 2 phi), 4 channels.
/// `weight_intensity` drives the normal-estimation weights.
inline ImagePlane polarisation_modulation(const DepthField& depth,
                                          const ImagePlane& weight_intensity,
                                          const Intrinsics& intr, double eta,
                                          ReflectionType type,
                                          const ReflectionMap* per_pixel = nullptr) {
    NormalField normals = normal_weighted(depth, weight_intensity, intr);
    ViewField view = view_geometry(depth, normals, intr);
    const size_t n = depth.pixels();
    ImagePlane mod(depth.width(), depth.height(), 4, 1.0);
    parallel_for(depth.height(), [&](int y) {
        for (int x = 0; x < depth.width(); ++x) {
            size_t i = depth.index(x, y);
            if (!normals.valid[i]) continue;  // leave unpolarised
            ReflectionType t = per_pixel ? (*per_pixel)[i] : type;
            double rho = dop_from_cos(view.cos_theta.data()[i], eta, t);
            double phi = polarisation_phase(view.alpha.data()[i], t);
            for (int a = 0; a < 4; ++a)
                mod.data()[a * n + i] = 1.0 + rho * std::cos(2.0 * kPolariserAngles[a] - 2.0 * phi);
        }
    });
    return mod;
}

/// Full analytic transform: depth -> 4-channel polarisation intensities.
/// A 3-channel i_un produces 12 channels laid out color-major
/// (color c, angle a) -> channel 4*c + a; all colors share rho and phi.
inline PolarisationImage render_polarisation(const DepthField& depth, const ImagePlane& i_un,
                                             const Intrinsics& intr, double eta,
                                             ReflectionType type,
                                             const ReflectionMap* per_pixel = nullptr) {
    if (i_un.width() != depth.width() || i_un.height() != depth.height())
        throw ArgError("render_polarisation: i_un resolution mismatch");
    for (double v : i_un.data())
        if (v < 0) throw ArgError("render_polarisation: i_un must be >= 0");

    ImagePlane weights = i_un.channels() == 1 ? i_un : channel_mean(i_un);
    ImagePlane mod = polarisation_modulation(depth, weights, intr, eta, type, per_pixel);
    const size_t n = depth.pixels();
    PolarisationImage out(depth.width(), depth.height(), 4 * i_un.channels());
    for (int c = 0; c < i_un.channels(); ++c)
        for (int a = 0; a < 4; ++a) {
            const double* m = mod.data().data() + a * n;
            const double* b = i_un.data().data() + c * n;
            double* dst = out.data().data() + (4 * c + a) * n;
            for (size_t i = 0; i < n; ++i) dst[i] = b[i] * m[i];
        }
    return out;
}

/// Checks the cosine-model consistency i0 + i90 == i45 + i135 (tolerance
/// relative to the local unpolarised intensity) and non-negativity.
inline bool polarisation_consistent(const PolarisationImage& img, double rel_tol = 1e-5) {
    if (img.channels() % 4 != 0) throw ArgError("polarisation_consistent: need 4*k channels");
    const size_t n = img.pixels();
    for (int c = 0; c < img.channels() / 4; ++c) {
        const double* a0 = img.data().data() + (4 * c + 0) * n;
        const double* a1 = img.data().data() + (4 * c + 1) * n;
        const double* a2 = img.data().data() + (4 * c + 2) * n;
        const double* a3 = img.data().data() + (4 * c + 3) * n;
        for (size_t i = 0; i < n; ++i) {
            if (a0[i] < 0 || a1[i] < 0 || a2[i] < 0 || a3[i] < 0) return false;
            double i_un = 0.25 * (a0[i] + a1[i] + a2[i] + a3[i]);
            if (std::abs((a0[i] + a2[i]) - (a1[i] + a3[i])) > rel_tol * std::max(i_un, 1e-12))
                return false;
        }
    }
    return true;
}

}  // namespace xmodal
