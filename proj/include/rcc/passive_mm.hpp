#pragma once

#include "rcc/pdd_active.hpp"

namespace rcc {

// Passive variant reuses the penalized-state layout with the amplified-noise
// auxiliary families absent and unit-modulus reflection vectors.
using PassiveState = PddState;

namespace detail {

// Maximize phi^H Xi phi - 2 Re{phi^H s} over unit-modulus phi.
struct MmModel {
    MatC Xi;
    VecC s;
};

inline double mm_objective(const MmModel& mdl, const VecC& phi) {
    return std::real((phi.adjoint() * mdl.Xi * phi).value()) -
           2.0 * std::real((phi.adjoint() * mdl.s).value());
}

// Negated phi1 part of the augmented Lagrangian with x eliminated: the
// coherent-gain quadratic enters at P_t / sigma0^2 scale, the v-penalty
// supplies the concave part.
inline MmModel build_mm_phi1_model(const PassiveState& st, const ChannelSet& ch,
                                   const SceneConfig& cfg) {
    const VecC& phi2 = st.sol.phi2;
    const MatC t2h12 = phi2.asDiagonal() * ch.H_12;
    const MatC W1 = ch.H_2r * t2h12 + ch.H_1r;
    const MatC C = ch.H_2r * phi2.asDiagonal();
    const VecC g1c = t2h12.adjoint() * ch.h_2u + ch.h_1u;
    const VecC a = g1c.cwiseProduct(ch.h_b1.conjugate());
    const Complex a0 = ch.h_bu + (ch.h_2u.adjoint() * (phi2.cwiseProduct(ch.h_b2))).value();
    const double scale = cfg.P_t / cfg.sigma0_2;
    const double w = 0.5 / st.rho;

    MmModel mdl;
    mdl.Xi = scale * (a * a.adjoint());
    mdl.s = -(scale * a0) * a;
    const VecC fixed_q = ch.h_br + C * ch.h_b2;
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const VecC& dk = st.sol.d[k];
        const VecC bk = ch.h_b1.conjugate().cwiseProduct(W1.adjoint() * dk);
        const Complex mk = dk.dot(fixed_q) - st.v[k] - st.rho * st.lam2[k];
        mdl.Xi -= w * (bk * bk.adjoint());
        mdl.s += (w * mk) * bk;
    }
    mdl.Xi = 0.5 * (mdl.Xi + mdl.Xi.adjoint());
    return mdl;
}

inline MmModel build_mm_phi2_model(const PassiveState& st, const ChannelSet& ch,
                                   const SceneConfig& cfg) {
    const VecC& phi1 = st.sol.phi1;
    const VecC vcomb = ch.H_12 * (phi1.cwiseProduct(ch.h_b1)) + ch.h_b2;
    const VecC b = ch.h_2u.cwiseProduct(vcomb.conjugate());
    const Complex b0 = ch.h_bu + (ch.h_1u.adjoint() * (phi1.cwiseProduct(ch.h_b1))).value();
    const double scale = cfg.P_t / cfg.sigma0_2;
    const double w = 0.5 / st.rho;

    MmModel mdl;
    mdl.Xi = scale * (b * b.adjoint());
    mdl.s = -(scale * b0) * b;
    const VecC fixed_q = ch.h_br + ch.H_1r * (phi1.cwiseProduct(ch.h_b1));
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const VecC& dk = st.sol.d[k];
        const VecC rk = (ch.H_2r.adjoint() * dk).cwiseProduct(vcomb.conjugate());
        const Complex nk = dk.dot(fixed_q) - st.v[k] - st.rho * st.lam2[k];
        mdl.Xi -= w * (rk * rk.adjoint());
        mdl.s += (w * nk) * rk;
    }
    mdl.Xi = 0.5 * (mdl.Xi + mdl.Xi.adjoint());
    return mdl;
}

// Minorize-maximize iteration: the quadratic is linearized at the current
// point using its smallest eigenvalue, and the linear surrogate is maximized
// in closed form by pure phases.
inline VecC mm_iterate(const MmModel& mdl, VecC phi, double tol, int max_iter) {
    const double lmin = smallest_eigenvalue(mdl.Xi);
    MatC shifted = mdl.Xi;
    shifted.diagonal().array() -= lmin;
    double obj = mm_objective(mdl, phi);
    for (int it = 0; it < max_iter; ++it) {
        const VecC dir = shifted * phi - mdl.s;
        VecC next(phi.size());
        for (int n = 0; n < phi.size(); ++n) {
            const double mag = std::abs(dir(n));
            next(n) = mag > 0.0 ? dir(n) / mag : phi(n) / std::abs(phi(n));
        }
        const double next_obj = mm_objective(mdl, next);
        phi = next;
        if (std::abs(next_obj - obj) <= tol * (1.0 + std::abs(obj))) {
            obj = next_obj;
            break;
        }
        obj = next_obj;
    }
    return phi;
}

} // namespace detail

// One MM solve of the unit-modulus phi1 subproblem.
inline void mm_update_phi1(PassiveState& st, const ChannelSet& ch, const SceneConfig& cfg,
                           const SolverOptions& opts) {
    const auto mdl = detail::build_mm_phi1_model(st, ch, cfg);
    st.sol.phi1 = detail::mm_iterate(mdl, st.sol.phi1, opts.mm_tol, opts.mm_max_iter);
}

inline void mm_update_phi2(PassiveState& st, const ChannelSet& ch, const SceneConfig& cfg,
                           const SolverOptions& opts) {
    const auto mdl = detail::build_mm_phi2_model(st, ch, cfg);
    st.sol.phi2 = detail::mm_iterate(mdl, st.sol.phi2, opts.mm_tol, opts.mm_max_iter);
}

} // namespace rcc
