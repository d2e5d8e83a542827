#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rcc/config.hpp"
#include "rcc/rng.hpp"

namespace rcc {

using Complex = std::complex<double>;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;

// All nine channel links plus the K target response matrices for one
// random realization.
struct ChannelSet {
    Complex h_bu{};  // BS -> UE
    VecC h_b1;       // BS -> RIS 1                  (N1)
    VecC h_b2;       // BS -> RIS 2                  (N2)
    MatC H_12;       // RIS 1 -> RIS 2               (N2 x N1)
    VecC h_1u;       // RIS 1 -> UE, row form h_1u^H (N1)
    VecC h_2u;       // RIS 2 -> UE, row form h_2u^H (N2)
    VecC h_br;       // BS -> radar                  (M)
    MatC H_1r;       // RIS 1 -> radar               (M x N1)
    MatC H_2r;       // RIS 2 -> radar               (M x N2)
    std::vector<MatC> A; // target response matrices (K, each M x M)
};

// PL(d) = PL0 - 10 * alpha * log10(d / d0), everything in dB.
inline double pathloss_db(double d, double alpha, double pl0_db, double d0) {
    if (d <= 0.0) throw std::domain_error("pathloss_db: distance must be > 0");
    if (d0 <= 0.0) throw std::domain_error("pathloss_db: d0 must be > 0");
    return pl0_db - 10.0 * alpha * std::log10(d / d0);
}

// Uniform linear array response; entry m is exp(j 2 pi (d/lambda) m sin(theta)).
inline VecC array_response(double theta, int n, double spacing_ratio) {
    if (n < 1) throw std::invalid_argument("array_response: n must be >= 1");
    VecC a(n);
    const double step = 2.0 * M_PI * spacing_ratio * std::sin(theta);
    for (int m = 0; m < n; ++m) a(m) = std::polar(1.0, step * m);
    return a;
}

// Rank-one target response alpha * a(theta) a(theta)^H.
inline MatC target_response(double theta, double alpha, int M, double spacing_ratio) {
    const VecC a = array_response(theta, M, spacing_ratio);
    return alpha * (a * a.adjoint());
}

// Rician block: sqrt(beta/(beta+1)) * a_r(aoa) a_t(aod)^H plus i.i.d. CN(0,1)
// scatter scaled by sqrt(1/(beta+1)). A Rician factor above 1e12 is treated
// as a pure line-of-sight channel to avoid overflow.
inline MatC rician_channel(int rows, int cols, double beta, double aoa, double aod,
                           double spacing_ratio, Rng& rng) {
    if (beta < 0.0) throw std::invalid_argument("rician_channel: beta must be >= 0");
    const VecC ar = array_response(aoa, rows, spacing_ratio);
    const VecC at = array_response(aod, cols, spacing_ratio);
    MatC los = ar * at.adjoint();
    if (beta >= 1e12) return los;
    const double w_los = std::sqrt(beta / (beta + 1.0));
    const double w_nlos = std::sqrt(1.0 / (beta + 1.0));
    MatC h(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) h(r, c) = rng.cnormal();
    return w_los * los + w_nlos * h;
}

namespace detail {

// Substream tags, one per link. Fixed forever: appending new consumers must
// not disturb existing draws.
enum LinkTag : std::uint64_t {
    tag_h_bu = 1,
    tag_h_b1 = 2,
    tag_h_b2 = 3,
    tag_H_12 = 4,
    tag_h_1u = 5,
    tag_h_2u = 6,
    tag_h_br = 7,
    tag_H_1r = 8,
    tag_H_2r = 9,
};

inline MatC draw_link(const SceneConfig& cfg, const Rng& base, std::uint64_t tag,
                      int rows, int cols, const Position& from, const Position& to,
                      double exponent) {
    const double d = distance(from, to);
    if (d <= 0.0) throw std::domain_error("generate_channels: coincident node positions");
    const double pl_db = pathloss_db(d, exponent, cfg.pl0_db, cfg.d0);
    const double amp = std::sqrt(db_to_linear(pl_db));
    Rng rng = base.substream(tag);
    const double aoa = rng.uniform(0.0, 2.0 * M_PI);
    const double aod = rng.uniform(0.0, 2.0 * M_PI);
    return amp * rician_channel(rows, cols, cfg.beta, aoa, aod, cfg.spacing_ratio, rng);
}

} // namespace detail

// Draws one full channel realization. Deterministic given cfg.seed; each
// link consumes its own substream.
inline ChannelSet generate_channels(const SceneConfig& cfg, const Rng& base) {
    cfg.validate();
    using namespace detail;
    const auto& e = cfg.pathloss_exponents;
    ChannelSet ch;
    ch.h_bu = draw_link(cfg, base, tag_h_bu, 1, 1, cfg.bs, cfg.ue, e.bs_ue)(0, 0);
    ch.h_b1 = draw_link(cfg, base, tag_h_b1, cfg.N1, 1, cfg.bs, cfg.ris1, e.bs_ris1);
    ch.h_b2 = draw_link(cfg, base, tag_h_b2, cfg.N2, 1, cfg.bs, cfg.ris2, e.bs_ris2);
    ch.H_12 = draw_link(cfg, base, tag_H_12, cfg.N2, cfg.N1, cfg.ris1, cfg.ris2, e.ris1_ris2);
    // UE-side links are physically 1 x N rows; stored as the column h so the
    // row form is h^H.
    ch.h_1u = draw_link(cfg, base, tag_h_1u, 1, cfg.N1, cfg.ris1, cfg.ue, e.ris1_ue)
                  .adjoint();
    ch.h_2u = draw_link(cfg, base, tag_h_2u, 1, cfg.N2, cfg.ris2, cfg.ue, e.ris2_ue)
                  .adjoint();
    ch.h_br = draw_link(cfg, base, tag_h_br, cfg.M, 1, cfg.bs, cfg.radar, e.bs_radar);
    ch.H_1r = draw_link(cfg, base, tag_H_1r, cfg.M, cfg.N1, cfg.ris1, cfg.radar, e.ris1_radar);
    ch.H_2r = draw_link(cfg, base, tag_H_2r, cfg.M, cfg.N2, cfg.ris2, cfg.radar, e.ris2_radar);
    ch.A.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k)
        ch.A.push_back(target_response(cfg.theta_k[k], cfg.alpha_k[k], cfg.M, cfg.spacing_ratio));
    return ch;
}

inline ChannelSet generate_channels(const SceneConfig& cfg) {
    return generate_channels(cfg, Rng(cfg.seed));
}

} // namespace rcc
