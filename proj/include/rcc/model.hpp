#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rcc/channel.hpp"

namespace rcc {

// Transmit/receive beamformers plus both RIS reflection vectors.
// Theta_i = diag(phi_i).
struct BeamformerSolution {
    std::vector<VecC> w; // K transmit beamformers, sqrt-watt scale (M each)
    std::vector<VecC> d; // K receive beamformers, unitless (M each)
    VecC phi1;           // N1 reflecting coefficients of RIS 1
    VecC phi2;           // N2 reflecting coefficients of RIS 2
};

struct MetricsReport {
    double rate = 0.0;            // bits/s/Hz
    double snr_c = 0.0;           // linear
    std::vector<double> sinr_r;   // K linear values
    double p_radar = 0.0;         // watts
    double p_ris1 = 0.0;          // watts
    double p_ris2 = 0.0;          // watts
    bool feasible = false;
    double worst_violation = 0.0; // max relative constraint excess
};

// Which budget rows apply; masked or passive RIS carry no amplifier budget.
struct FeasibilityScope {
    bool ris1_budget = true;
    bool ris2_budget = true;
};

struct EquivalentMatrices {
    MatC B; // M x N1
    MatC C; // M x N2
    VecC q; // M
};

// B = H_2r Theta2 H_12 Theta1 + H_1r Theta1, C = H_2r Theta2,
// q = h_br + B h_b1 + C h_b2.
inline EquivalentMatrices equivalent_matrices(const ChannelSet& ch, const VecC& phi1,
                                              const VecC& phi2) {
    EquivalentMatrices em;
    const MatC t2h12 = phi2.asDiagonal() * ch.H_12;              // Theta2 H_12
    em.B = (ch.H_2r * t2h12 + ch.H_1r) * phi1.asDiagonal();
    em.C = ch.H_2r * phi2.asDiagonal();
    em.q = ch.h_br + em.B * ch.h_b1 + em.C * ch.h_b2;
    return em;
}

// Radar SINR toward direction k.
inline double radar_sinr(const ChannelSet& ch, const BeamformerSolution& sol,
                         const SceneConfig& cfg, int k) {
    const VecC& dk = sol.d.at(k);
    if (dk.norm() == 0.0) throw std::domain_error("radar_sinr: d_k must be nonzero");
    const auto em = equivalent_matrices(ch, sol.phi1, sol.phi2);
    const VecC& wk = sol.w.at(k);
    const double num = std::norm((dk.adjoint() * ch.A[k] * wk).value());
    double cross = 0.0;
    for (int m = 0; m < cfg.K; ++m) {
        if (m == k) continue;
        cross += std::norm((dk.adjoint() * ch.A[m] * wk).value());
    }
    const double bs_itf = cfg.P_t * std::norm(dk.dot(em.q));
    const double n1 = cfg.sigma1_2 * (dk.adjoint() * em.B).squaredNorm();
    const double n2 = cfg.sigma2_2 * (dk.adjoint() * em.C).squaredNorm();
    const double den = cross + bs_itf + n1 + n2 + cfg.sigma2 * dk.squaredNorm();
    return num / den;
}

// Communication SNR at the user.
inline double comm_snr(const ChannelSet& ch, const BeamformerSolution& sol,
                       const SceneConfig& cfg) {
    const VecC& phi1 = sol.phi1;
    const VecC& phi2 = sol.phi2;
    const MatC t2h12 = phi2.asDiagonal() * ch.H_12;
    // Row h_2u^H Theta2 H_12 Theta1 + h_1u^H Theta1, kept as its column form.
    const VecC amp_row = (phi1.conjugate().asDiagonal() *
                          (t2h12.adjoint() * ch.h_2u + ch.h_1u));
    const Complex gain = ch.h_bu +
                         (ch.h_2u.adjoint() * t2h12 * (phi1.cwiseProduct(ch.h_b1))).value() +
                         (ch.h_1u.adjoint() * (phi1.cwiseProduct(ch.h_b1))).value() +
                         (ch.h_2u.adjoint() * (phi2.cwiseProduct(ch.h_b2))).value();
    const double den = cfg.sigma1_2 * amp_row.squaredNorm() +
                       cfg.sigma2_2 * (phi2.cwiseProduct(ch.h_2u.conjugate())).squaredNorm() +
                       cfg.sigma0_2;
    return cfg.P_t * std::norm(gain) / den;
}

inline double achievable_rate(double snr) {
    if (snr < 0.0) throw std::domain_error("achievable_rate: snr must be >= 0");
    return std::log2(1.0 + snr);
}

// Power consumed by the reflect-and-amplify stage of one active RIS.
inline double active_ris_power(const ChannelSet& ch, const VecC& phi1, const VecC& phi2,
                               const SceneConfig& cfg, int which) {
    if (which == 1) {
        return (phi1.cwiseProduct(ch.h_b1)).squaredNorm() +
               cfg.sigma1_2 * phi1.squaredNorm();
    }
    if (which == 2) {
        const MatC t2h12t1 = phi2.asDiagonal() * ch.H_12 * phi1.asDiagonal();
        return (t2h12t1 * ch.h_b1).squaredNorm() +
               (phi2.cwiseProduct(ch.h_b2)).squaredNorm() +
               cfg.sigma1_2 * t2h12t1.squaredNorm() +
               cfg.sigma2_2 * phi2.squaredNorm();
    }
    throw std::invalid_argument("active_ris_power: which must be 1 or 2");
}

namespace detail {

// Relative excess of value over budget; zero when within budget.
inline double relative_excess(double value, double budget) {
    if (budget <= 0.0) return value > 1e-15 ? 1.0 : 0.0;
    return std::max(0.0, (value - budget) / budget);
}

} // namespace detail

// Checks a candidate against every constraint at relative slack 1e-6 and
// reports the metrics alongside the verdict.
inline MetricsReport check_feasibility(const ChannelSet& ch, const BeamformerSolution& sol,
                                       const SceneConfig& cfg,
                                       const FeasibilityScope& scope = {}) {
    constexpr double kSlack = 1e-6;
    MetricsReport rep;
    rep.snr_c = comm_snr(ch, sol, cfg);
    rep.rate = achievable_rate(rep.snr_c);
    rep.sinr_r.resize(cfg.K, 0.0);
    double worst = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        double s = 0.0;
        if (sol.d.at(k).norm() > 0.0) s = radar_sinr(ch, sol, cfg, k);
        rep.sinr_r[k] = s;
        // Shortfall relative to the requirement.
        worst = std::max(worst, std::max(0.0, (cfg.eta - s) / cfg.eta));
    }
    rep.p_radar = 0.0;
    for (const auto& wk : sol.w) rep.p_radar += wk.squaredNorm();
    worst = std::max(worst, detail::relative_excess(rep.p_radar, cfg.P_r));
    rep.p_ris1 = active_ris_power(ch, sol.phi1, sol.phi2, cfg, 1);
    rep.p_ris2 = active_ris_power(ch, sol.phi1, sol.phi2, cfg, 2);
    if (scope.ris1_budget) worst = std::max(worst, detail::relative_excess(rep.p_ris1, cfg.P_1));
    if (scope.ris2_budget) worst = std::max(worst, detail::relative_excess(rep.p_ris2, cfg.P_2));
    rep.worst_violation = worst;
    rep.feasible = worst <= kSlack;
    return rep;
}

// Flat serialization with fixed column order:
// rate, snr_c, sinr_r_1..K, p_radar, p_ris1, p_ris2, feasible, worst_violation.
inline std::string metrics_csv_header(int K) {
    std::string h = "rate,snr_c";
    for (int k = 1; k <= K; ++k) h += ",sinr_r_" + std::to_string(k);
    h += ",p_radar,p_ris1,p_ris2,feasible,worst_violation";
    return h;
}

inline std::string format_g12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string metrics_csv_row(const MetricsReport& r) {
    std::string row = format_g12(r.rate) + "," + format_g12(r.snr_c);
    for (double s : r.sinr_r) row += "," + format_g12(s);
    row += "," + format_g12(r.p_radar) + "," + format_g12(r.p_ris1) + "," +
           format_g12(r.p_ris2) + "," + (r.feasible ? "1" : "0") + "," +
           format_g12(r.worst_violation);
    return row;
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
    nlohmann::json j;
    j["rate"] = r.rate;
    j["snr_c"] = r.snr_c;
    for (std::size_t k = 0; k < r.sinr_r.size(); ++k)
        j["sinr_r_" + std::to_string(k + 1)] = r.sinr_r[k];
    j["p_radar"] = r.p_radar;
    j["p_ris1"] = r.p_ris1;
    j["p_ris2"] = r.p_ris2;
    j["feasible"] = r.feasible;
    j["worst_violation"] = r.worst_violation;
    return j;
}

} // namespace rcc
