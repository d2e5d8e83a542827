#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "rcc/linalg.hpp"
#include "rcc/model.hpp"

namespace rcc {

// Solution variables plus the auxiliary families, dual multipliers, penalty
// parameter and the linearization anchor. Vector-family duals are stored
// conformal to the column residuals (the conjugate of the row-form
// multipliers), which keeps every update free of stray transposes.
struct PddState {
    BeamformerSolution sol;
    Complex x{};               // fractional-programming auxiliary
    std::vector<Complex> u, v; // K scalars each
    std::vector<VecC> y;       // K vectors of length K, entry m: cross-target
                               // auxiliary toward direction m (diagonal unused)
    std::vector<VecC> e;       // K vectors of length N1 (absent for passive)
    std::vector<VecC> t;       // K vectors of length N2 (absent for passive)
    std::vector<Complex> lam1, lam2;
    std::vector<VecC> lam3, lam_e, lam_t;
    double rho = 1.0;
    std::vector<Complex> u_anchor; // linearization point u^(i)
    Eigen::Vector2d theta1_kappa = Eigen::Vector2d::Zero(); // dual warm start

    bool has_et() const { return !e.empty(); }
};

struct TraceRow {
    int iter = 0;
    double al_obj = 0.0;
    double rate = 0.0;
    double violation = 0.0;
    double rho = 0.0;
    double ms = 0.0;
};

struct SolveTrace {
    std::vector<TraceRow> rows;
    std::vector<double> block_objectives; // filled when opts.track_blocks
    bool hit_iteration_cap = false;

    std::string csv() const {
        std::string out = "iter,al_obj,rate,violation,rho,ms\n";
        for (const auto& r : rows) {
            out += std::to_string(r.iter) + "," + format_g12(r.al_obj) + "," +
                   format_g12(r.rate) + "," + format_g12(r.violation) + "," +
                   format_g12(r.rho) + "," + format_g12(r.ms) + "\n";
        }
        return out;
    }
};

// Multiplier and end-state constraint value of one Lagrange-dual search,
// for complementary-slackness checks.
struct BlockDiag {
    double multiplier = 0.0;
    double constraint_value = 0.0;
    double budget = 0.0;
};

struct ThetaDiag {
    Eigen::Vector2d multipliers = Eigen::Vector2d::Zero();
    Eigen::Vector2d constraint_values = Eigen::Vector2d::Zero();
    Eigen::Vector2d budgets = Eigen::Vector2d::Zero();
};

struct SolveResult {
    BeamformerSolution sol;
    MetricsReport metrics;
    SolveTrace trace;
    bool converged = false;
    int outer_iterations = 0;
};

// ---------------------------------------------------------------------------
// Fractional-programming surrogate
// ---------------------------------------------------------------------------

namespace detail {

// Everything that depends on (phi1, phi2) only.
struct PhiContext {
    MatC t2h12; // Theta2 H_12                        (N2 x N1)
    MatC W1;    // H_2r Theta2 H_12 + H_1r            (M x N1)
    MatC B;     // W1 Theta1                          (M x N1)
    MatC C;     // H_2r Theta2                        (M x N2)
    VecC q;     // h_br + B h_b1 + C h_b2             (M)
    VecC g1c;   // (h_2u^H Theta2 H_12 + h_1u^H)^H    (N1)
    Complex gain{};
    double den = 0.0;
};

inline PhiContext make_phi_context(const ChannelSet& ch, const VecC& phi1, const VecC& phi2,
                                   const SceneConfig& cfg) {
    PhiContext cx;
    cx.t2h12 = phi2.asDiagonal() * ch.H_12;
    cx.W1 = ch.H_2r * cx.t2h12 + ch.H_1r;
    cx.B = cx.W1 * phi1.asDiagonal();
    cx.C = ch.H_2r * phi2.asDiagonal();
    cx.q = ch.h_br + cx.B * ch.h_b1 + cx.C * ch.h_b2;
    cx.g1c = cx.t2h12.adjoint() * ch.h_2u + ch.h_1u;
    cx.gain = ch.h_bu + cx.g1c.dot(phi1.cwiseProduct(ch.h_b1)) +
              (ch.h_2u.adjoint() * (phi2.cwiseProduct(ch.h_b2))).value();
    cx.den = cfg.sigma1_2 * (phi1.cwiseProduct(cx.g1c)).squaredNorm() +
             cfg.sigma2_2 * (phi2.cwiseProduct(ch.h_2u)).squaredNorm() + cfg.sigma0_2;
    return cx;
}

inline double fp_surrogate(const PhiContext& cx, Complex x, const SceneConfig& cfg) {
    return std::norm(x) * cx.den -
           2.0 * std::real(std::conj(x) * std::sqrt(cfg.P_t) * cx.gain);
}

inline Complex fp_optimal_x(const PhiContext& cx, const SceneConfig& cfg) {
    return std::sqrt(cfg.P_t) * cx.gain / cx.den;
}

} // namespace detail

inline double fp_surrogate(const ChannelSet& ch, const VecC& phi1, const VecC& phi2,
                           Complex x, const SceneConfig& cfg) {
    return detail::fp_surrogate(detail::make_phi_context(ch, phi1, phi2, cfg), x, cfg);
}

// Closed-form minimizer of the surrogate over x; plugging it back recovers
// the negated communication SNR.
inline Complex fp_optimal_x(const ChannelSet& ch, const VecC& phi1, const VecC& phi2,
                            const SceneConfig& cfg) {
    return detail::fp_optimal_x(detail::make_phi_context(ch, phi1, phi2, cfg), cfg);
}

// First-order minorant of |u|^2 at the anchor point.
inline double ccp_linearize(Complex u, Complex u_anchor) {
    return 2.0 * std::real(std::conj(u_anchor) * u) - std::norm(u_anchor);
}

// ---------------------------------------------------------------------------
// Residuals and objective
// ---------------------------------------------------------------------------

namespace detail {

struct Residuals {
    Complex r1{}, r2{};
    VecC r3;
    VecC re, rt;
};

// Cross-target responses d_k^H A_m w_k for all m; entry k zeroed.
inline VecC cross_targets(const ChannelSet& ch, const PddState& st, int k) {
    const VecC& dk = st.sol.d[k];
    const VecC& wk = st.sol.w[k];
    VecC out = VecC::Zero(ch.A.size());
    for (int m = 0; m < static_cast<int>(ch.A.size()); ++m) {
        if (m == k) continue;
        out(m) = (dk.adjoint() * ch.A[m] * wk).value();
    }
    return out;
}

// Equality residuals, optionally shifted by the scaled duals (the form that
// enters the augmented Lagrangian).
inline Residuals residuals(const PddState& st, const ChannelSet& ch, const MatC& B,
                           const MatC& C, const VecC& q, int k, bool shift) {
    Residuals r;
    const VecC& dk = st.sol.d[k];
    const double rho = shift ? st.rho : 0.0;
    r.r1 = st.u[k] - (dk.adjoint() * ch.A[k] * st.sol.w[k]).value() + rho * st.lam1[k];
    r.r2 = st.v[k] - dk.dot(q) + rho * st.lam2[k];
    r.r3 = st.y[k] - cross_targets(ch, st, k) + rho * st.lam3[k];
    r.r3(k) = Complex{};
    if (st.has_et()) {
        r.re = st.e[k] - B.adjoint() * dk + rho * st.lam_e[k];
        r.rt = st.t[k] - C.adjoint() * dk + rho * st.lam_t[k];
    }
    return r;
}

} // namespace detail

// Augmented-Lagrangian objective of the penalized problem.
inline double al_objective(const PddState& st, const ChannelSet& ch, const SceneConfig& cfg) {
    if (st.rho <= 0.0) throw std::domain_error("al_objective: rho must be > 0");
    const auto cx = detail::make_phi_context(ch, st.sol.phi1, st.sol.phi2, cfg);
    double obj = detail::fp_surrogate(cx, st.x, cfg);
    const double w = 0.5 / st.rho;
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const auto r = detail::residuals(st, ch, cx.B, cx.C, cx.q, k, true);
        double pen = std::norm(r.r1) + std::norm(r.r2) + r.r3.squaredNorm();
        if (st.has_et()) pen += r.re.squaredNorm() + r.rt.squaredNorm();
        obj += w * pen;
    }
    return obj;
}

// Max raw equality-constraint violation across all auxiliary families.
inline double constraint_violation(const PddState& st, const ChannelSet& ch) {
    const MatC t2h12 = st.sol.phi2.asDiagonal() * ch.H_12;
    const MatC B = (ch.H_2r * t2h12 + ch.H_1r) * st.sol.phi1.asDiagonal();
    const MatC C = ch.H_2r * st.sol.phi2.asDiagonal();
    const VecC q = ch.h_br + B * ch.h_b1 + C * ch.h_b2;
    double h = 0.0;
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const auto r = detail::residuals(st, ch, B, C, q, k, false);
        h = std::max({h, std::abs(r.r1), std::abs(r.r2), r.r3.norm()});
        if (st.has_et()) h = std::max({h, r.re.norm(), r.rt.norm()});
    }
    return h;
}

// ---------------------------------------------------------------------------
// Block updates
// ---------------------------------------------------------------------------

namespace detail {

// Resolvent of a Hermitian PSD matrix: one eigendecomposition makes
// x(mu) = (H + mu I)^{-1} z and its norm O(n) per multiplier query. Numerical
// null-space components of z are dropped, so mu = 0 yields the minimum-norm
// solution.
class Resolvent {
public:
    Resolvent(const MatC& H, const VecC& z) {
        Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (H + H.adjoint()));
        evals_ = es.eigenvalues().cwiseMax(0.0);
        vecs_ = es.eigenvectors();
        coef_ = vecs_.adjoint() * z;
        const double lmax = evals_.size() ? evals_.maxCoeff() : 0.0;
        const double zscale = z.norm();
        for (int i = 0; i < evals_.size(); ++i) {
            if (evals_(i) <= 1e-13 * lmax && std::abs(coef_(i)) <= 1e-9 * zscale) {
                evals_(i) = 0.0;
                coef_(i) = Complex{};
            }
        }
    }

    double squared_norm(double mu) const {
        double s = 0.0;
        for (int i = 0; i < evals_.size(); ++i) {
            const double c2 = std::norm(coef_(i));
            if (c2 == 0.0) continue;
            const double den = evals_(i) + mu;
            if (den <= 0.0) return std::numeric_limits<double>::infinity();
            s += c2 / (den * den);
        }
        return s;
    }

    VecC solve(double mu) const {
        VecC scaled = VecC::Zero(coef_.size());
        for (int i = 0; i < coef_.size(); ++i) {
            const double den = evals_(i) + mu;
            if (std::norm(coef_(i)) > 0.0 && den > 0.0) scaled(i) = coef_(i) / den;
        }
        return vecs_ * scaled;
    }

private:
    Eigen::VectorXd evals_;
    MatC vecs_;
    VecC coef_;
};

// eta-weighted part of the CCP-restricted radar constraint that does not
// involve d_k.
inline double eta_load(const PddState& st, const SceneConfig& cfg, int k) {
    double f = st.y[k].squaredNorm() + cfg.P_t * std::norm(st.v[k]);
    if (st.has_et())
        f += cfg.sigma1_2 * st.e[k].squaredNorm() + cfg.sigma2_2 * st.t[k].squaredNorm();
    return cfg.eta * f;
}

} // namespace detail

// Transmit-beamformer block: per-direction regularized solves with one
// shared power multiplier found by bisection.
inline void update_w(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                     const SolverOptions& opts, BlockDiag* diag = nullptr) {
    const int K = cfg.K;
    std::vector<detail::Resolvent> blocks;
    blocks.reserve(K);
    for (int k = 0; k < K; ++k) {
        const VecC& dk = st.sol.d[k];
        const VecC a1 = ch.A[k].adjoint() * dk;
        MatC gamma = a1 * a1.adjoint();
        VecC p = (st.u[k] + st.rho * st.lam1[k]) * a1;
        for (int m = 0; m < K; ++m) {
            if (m == k) continue;
            const VecC gm = ch.A[m].adjoint() * dk;
            gamma += gm * gm.adjoint();
            p += (st.y[k](m) + st.rho * st.lam3[k](m)) * gm;
        }
        blocks.emplace_back(gamma, p);
    }
    auto power_excess = [&](double mu) {
        double s = 0.0;
        for (const auto& b : blocks) s += b.squared_norm(mu);
        return s - cfg.P_r;
    };
    const auto bis = bisect_smallest_multiplier(power_excess, opts.max_bisect, opts.bisect_tol);
    for (int k = 0; k < K; ++k) st.sol.w[k] = blocks[k].solve(bis.multiplier);
    if (diag) *diag = {bis.multiplier, bis.constraint_value, cfg.P_r};
}

// Receive-beamformer block for one direction. Throws InfeasibleError when
// the CCP-restricted norm cap is empty; the caller keeps the previous d_k.
inline void update_d(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                     const SolverOptions& opts, int k, BlockDiag* diag = nullptr) {
    const auto cx = detail::make_phi_context(ch, st.sol.phi1, st.sol.phi2, cfg);
    const VecC& wk = st.sol.w[k];
    const VecC aw = ch.A[k] * wk;

    MatC quad = aw * aw.adjoint() + cx.q * cx.q.adjoint();
    VecC lin = std::conj(st.u[k] + st.rho * st.lam1[k]) * aw +
               std::conj(st.v[k] + st.rho * st.lam2[k]) * cx.q;
    for (int m = 0; m < cfg.K; ++m) {
        if (m == k) continue;
        const VecC gm = ch.A[m] * wk;
        quad += gm * gm.adjoint();
        lin += std::conj(st.y[k](m) + st.rho * st.lam3[k](m)) * gm;
    }
    if (st.has_et()) {
        quad += cx.B * cx.B.adjoint() + cx.C * cx.C.adjoint();
        lin += cx.B * (st.e[k] + st.rho * st.lam_e[k]) +
               cx.C * (st.t[k] + st.rho * st.lam_t[k]);
    }

    const double ghat = ccp_linearize(st.u[k], st.u_anchor[k]);
    const double etasig = cfg.eta * cfg.sigma2;
    // eta = 0 removes the receive vector from the restricted constraint.
    const double cap = etasig > 0.0
                           ? (ghat - detail::eta_load(st, cfg, k)) / etasig
                           : std::numeric_limits<double>::infinity();
    if (cap <= 0.0)
        throw InfeasibleError("update_d: empty norm cap for the receive beamformer");

    detail::Resolvent res(quad, lin);
    auto excess = [&](double delta) { return res.squared_norm(delta) - cap; };
    const auto bis = bisect_smallest_multiplier(excess, opts.max_bisect, opts.bisect_tol);
    st.sol.d[k] = res.solve(bis.multiplier);
    if (diag) *diag = {bis.multiplier, bis.constraint_value, cap};
}

inline void update_x(PddState& st, const ChannelSet& ch, const SceneConfig& cfg) {
    st.x = fp_optimal_x(ch, st.sol.phi1, st.sol.phi2, cfg);
}

// Value of the CCP-restricted radar constraint at the current state.
inline double ccp_constraint_value(const PddState& st, const SceneConfig& cfg, int k) {
    return detail::eta_load(st, cfg, k) +
           cfg.eta * cfg.sigma2 * st.sol.d[k].squaredNorm() -
           ccp_linearize(st.u[k], st.u_anchor[k]);
}

// Auxiliary u_k: shifted target plus a multiple of the anchor.
inline void update_aux_u(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                         const SolverOptions& opts, int k, BlockDiag* diag = nullptr) {
    const Complex target = (st.sol.d[k].adjoint() * ch.A[k] * st.sol.w[k]).value() -
                           st.rho * st.lam1[k];
    const double fixed = detail::eta_load(st, cfg, k) +
                         cfg.eta * cfg.sigma2 * st.sol.d[k].squaredNorm();
    const Complex anchor = st.u_anchor[k];
    auto violation = [&](double mu) {
        return fixed - ccp_linearize(target + mu * anchor, anchor);
    };
    const double at_zero = violation(0.0);
    if (at_zero <= 0.0) {
        st.u[k] = target;
        if (diag) *diag = {0.0, at_zero, 0.0};
        return;
    }
    if (std::norm(anchor) <= 1e-300)
        throw InfeasibleError("update_aux_u: constraint unsatisfiable with zero anchor");
    const auto bis = bisect_smallest_multiplier(violation, opts.max_bisect, opts.bisect_tol);
    st.u[k] = target + bis.multiplier * anchor;
    if (diag) *diag = {bis.multiplier, bis.constraint_value, 0.0};
}

namespace detail {

// Shared shape of the v/y/e/t updates: damped shifted target with the
// multiplier driven by the CCP constraint. Candidate norm enters the
// constraint as eta * weight * |target|^2 / (1 + mu * coef)^2.
template <typename Install>
inline BlockDiag damped_family_update(double target_sq, double weight, double coef,
                                      double rest, double ghat, const SolverOptions& opts,
                                      Install&& install) {
    auto violation = [&](double mu) {
        const double s = 1.0 + mu * coef;
        return rest + weight * target_sq / (s * s) - ghat;
    };
    const double at_zero = violation(0.0);
    if (coef <= 0.0 || at_zero <= 0.0) {
        install(0.0);
        return {0.0, at_zero, 0.0};
    }
    const auto bis = bisect_smallest_multiplier(violation, opts.max_bisect, opts.bisect_tol);
    install(bis.multiplier);
    return {bis.multiplier, bis.constraint_value, 0.0};
}

} // namespace detail

// Auxiliaries v, y, e, t for one direction, optimized in sequence.
inline void update_aux_rest(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                            const SolverOptions& opts, int k,
                            std::array<BlockDiag, 4>* diag = nullptr) {
    const auto cx = detail::make_phi_context(ch, st.sol.phi1, st.sol.phi2, cfg);
    const VecC& dk = st.sol.d[k];
    const double ghat = ccp_linearize(st.u[k], st.u_anchor[k]);
    const double d_noise = cfg.eta * cfg.sigma2 * dk.squaredNorm();

    auto et_load = [&]() {
        return st.has_et() ? cfg.eta * (cfg.sigma1_2 * st.e[k].squaredNorm() +
                                        cfg.sigma2_2 * st.t[k].squaredNorm())
                           : 0.0;
    };

    { // v_k
        const Complex target = dk.dot(cx.q) - st.rho * st.lam2[k];
        const double rest = cfg.eta * st.y[k].squaredNorm() + et_load() + d_noise;
        const auto bd = detail::damped_family_update(
            std::norm(target), cfg.eta * cfg.P_t, cfg.eta * cfg.P_t, rest, ghat, opts,
            [&](double mu) { st.v[k] = target / (1.0 + mu * cfg.eta * cfg.P_t); });
        if (diag) (*diag)[0] = bd;
    }
    { // y_{k,m}: one multiplier for the whole cross-target family
        VecC target = detail::cross_targets(ch, st, k) - st.rho * st.lam3[k];
        target(k) = Complex{};
        const double rest = cfg.eta * cfg.P_t * std::norm(st.v[k]) + et_load() + d_noise;
        const auto bd = detail::damped_family_update(
            target.squaredNorm(), cfg.eta, cfg.eta, rest, ghat, opts,
            [&](double mu) { st.y[k] = target / (1.0 + mu * cfg.eta); });
        if (diag) (*diag)[1] = bd;
    }
    if (!st.has_et()) return;
    { // e_k
        const VecC target = cx.B.adjoint() * dk - st.rho * st.lam_e[k];
        const double rest = cfg.eta * (st.y[k].squaredNorm() + cfg.P_t * std::norm(st.v[k]) +
                                       cfg.sigma2_2 * st.t[k].squaredNorm()) +
                            d_noise;
        const double coef = cfg.eta * cfg.sigma1_2;
        const auto bd = detail::damped_family_update(
            target.squaredNorm(), coef, coef, rest, ghat, opts,
            [&](double mu) { st.e[k] = target / (1.0 + mu * coef); });
        if (diag) (*diag)[2] = bd;
    }
    { // t_k
        const VecC target = cx.C.adjoint() * dk - st.rho * st.lam_t[k];
        const double rest = cfg.eta * (st.y[k].squaredNorm() + cfg.P_t * std::norm(st.v[k]) +
                                       cfg.sigma1_2 * st.e[k].squaredNorm()) +
                            d_noise;
        const double coef = cfg.eta * cfg.sigma2_2;
        const auto bd = detail::damped_family_update(
            target.squaredNorm(), coef, coef, rest, ghat, opts,
            [&](double mu) { st.t[k] = target / (1.0 + mu * coef); });
        if (diag) (*diag)[3] = bd;
    }
}

// ---------------------------------------------------------------------------
// Reflection-vector blocks
// ---------------------------------------------------------------------------

namespace detail {

// Exact quadratic model of the augmented Lagrangian in phi1:
// AL(phi1) = phi1^H Xi phi1 - 2 Re{lin^H phi1} + const, subject to
// phi1^H P phi1 <= budget1 and phi1^H V phi1 <= budget2.
struct Phi1Model {
    MatC Xi;
    VecC lin;
    MatC P;
    MatC V;
    double budget1 = 0.0;
    double budget2 = 0.0;
};

inline Phi1Model build_phi1_model(const PddState& st, const ChannelSet& ch,
                                  const SceneConfig& cfg) {
    const VecC& phi2 = st.sol.phi2;
    const MatC t2h12 = phi2.asDiagonal() * ch.H_12;
    const MatC W1 = ch.H_2r * t2h12 + ch.H_1r;
    const MatC C = ch.H_2r * phi2.asDiagonal();
    const VecC g1c = t2h12.adjoint() * ch.h_2u + ch.h_1u;
    const double w = 0.5 / st.rho;

    Phi1Model mdl;
    mdl.Xi = (std::norm(st.x) * cfg.sigma1_2) *
             MatC(g1c.cwiseAbs2().cast<Complex>().asDiagonal());
    mdl.lin = (st.x * std::sqrt(cfg.P_t)) * g1c.cwiseProduct(ch.h_b1.conjugate());

    const VecC fixed_q = ch.h_br + C * ch.h_b2;
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const VecC& dk = st.sol.d[k];
        const VecC W1Hd = W1.adjoint() * dk;
        const VecC bk = ch.h_b1.conjugate().cwiseProduct(W1Hd);
        const Complex mk = dk.dot(fixed_q) - st.v[k] - st.rho * st.lam2[k];
        mdl.Xi += w * (bk * bk.adjoint());
        mdl.Xi += w * MatC(W1Hd.cwiseAbs2().cast<Complex>().asDiagonal());
        mdl.lin -= (w * mk) * bk;
        if (st.has_et()) {
            const VecC et = st.e[k] + st.rho * st.lam_e[k];
            mdl.lin += w * et.conjugate().cwiseProduct(W1Hd);
        }
    }

    mdl.P = MatC(ch.h_b1.cwiseAbs2().cast<Complex>().asDiagonal());
    mdl.P.diagonal().array() += cfg.sigma1_2;
    const MatC M2 = t2h12.adjoint() * t2h12;
    mdl.V = ch.h_b1.conjugate().asDiagonal() * M2 * ch.h_b1.asDiagonal();
    mdl.V += cfg.sigma1_2 * MatC(M2.diagonal().asDiagonal());
    mdl.budget1 = cfg.P_1;
    mdl.budget2 = cfg.P_2 - (phi2.cwiseProduct(ch.h_b2)).squaredNorm() -
                  cfg.sigma2_2 * phi2.squaredNorm();
    mdl.Xi = 0.5 * (mdl.Xi + mdl.Xi.adjoint());
    mdl.V = 0.5 * (mdl.V + mdl.V.adjoint());
    return mdl;
}

// Exact quadratic model of the augmented Lagrangian in phi2, subject to
// phi2^H Z phi2 <= budget. Z is diagonal and positive definite.
struct Phi2Model {
    MatC Xi;
    VecC lin;
    Eigen::VectorXd zdiag;
    double budget = 0.0;
};

inline Phi2Model build_phi2_model(const PddState& st, const ChannelSet& ch,
                                  const SceneConfig& cfg) {
    const VecC& phi1 = st.sol.phi1;
    const MatC Mblk = ch.H_12 * phi1.asDiagonal();
    const VecC w1vec = Mblk * ch.h_b1;
    const VecC vcomb = w1vec + ch.h_b2;
    const MatC R2 = Mblk * Mblk.adjoint();
    const MatC R2t = R2.transpose();
    const double w = 0.5 / st.rho;

    Phi2Model mdl;
    const MatC outer_h2u = ch.h_2u * ch.h_2u.adjoint();
    mdl.Xi = std::norm(st.x) *
             outer_h2u.cwiseProduct(cfg.sigma1_2 * R2t +
                                    cfg.sigma2_2 * MatC::Identity(cfg.N2, cfg.N2));
    mdl.lin = (st.x * std::sqrt(cfg.P_t)) * ch.h_2u.cwiseProduct(vcomb.conjugate());
    const VecC hcross = Mblk * (phi1.conjugate().cwiseProduct(ch.h_1u));
    mdl.lin -= (std::norm(st.x) * cfg.sigma1_2) * ch.h_2u.cwiseProduct(hcross.conjugate());

    const VecC fixed_q = ch.h_br + ch.H_1r * (phi1.cwiseProduct(ch.h_b1));
    for (int k = 0; k < static_cast<int>(st.u.size()); ++k) {
        const VecC& dk = st.sol.d[k];
        const VecC sk = ch.H_2r.adjoint() * dk;
        const VecC rk = sk.cwiseProduct(vcomb.conjugate());
        const Complex nk = dk.dot(fixed_q) - st.v[k] - st.rho * st.lam2[k];
        mdl.Xi += w * (rk * rk.adjoint());
        mdl.lin -= (w * nk) * rk;
        if (st.has_et()) {
            const MatC outer_sk = sk * sk.adjoint();
            mdl.Xi += w * outer_sk.cwiseProduct(R2t + MatC::Identity(cfg.N2, cfg.N2));
            const VecC ck = (st.e[k] + st.rho * st.lam_e[k]) -
                            phi1.conjugate().cwiseProduct(ch.H_1r.adjoint() * dk);
            mdl.lin += w * sk.cwiseProduct((Mblk * ck).conjugate());
            const VecC tt = st.t[k] + st.rho * st.lam_t[k];
            mdl.lin += w * tt.conjugate().cwiseProduct(sk);
        }
    }

    mdl.zdiag = w1vec.cwiseAbs2() + ch.h_b2.cwiseAbs2() +
                cfg.sigma1_2 * R2.diagonal().real();
    mdl.zdiag.array() += cfg.sigma2_2;
    mdl.budget = cfg.P_2;
    mdl.Xi = 0.5 * (mdl.Xi + mdl.Xi.adjoint());
    return mdl;
}

inline double quad_objective(const MatC& Xi, const VecC& lin, const VecC& phi) {
    return std::real((phi.adjoint() * Xi * phi).value()) - 2.0 * std::real(lin.dot(phi));
}

} // namespace detail

// RIS-1 block: two-constraint convex QCQP solved through its Lagrange dual.
// The single-active-multiplier case reduces to a whitened norm-cap bisection;
// the coupled case runs a damped Newton ascent on the two-multiplier dual
// (warm-started across passes) with an adaptive-radius ellipsoid fallback.
inline void update_theta1(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                          const SolverOptions& opts, ThetaDiag* diag = nullptr) {
    const auto mdl = detail::build_phi1_model(st, ch, cfg);
    // Without a through-path the coupled budget cannot be loaded by phi1 and
    // the second constraint is vacuous.
    const bool coupled = mdl.V.cwiseAbs().maxCoeff() > 0.0;
    if (coupled && mdl.budget2 <= 0.0)
        throw InfeasibleError("update_theta1: RIS-2 budget exhausted by phi1-independent terms");

    auto primal = [&](const Eigen::Vector2d& kappa) {
        return solve_regularized_hpd(mdl.Xi + kappa(0) * mdl.P + kappa(1) * mdl.V, mdl.lin);
    };
    auto constraint_values = [&](const VecC& phi) {
        Eigen::Vector2d c(std::real((phi.adjoint() * mdl.P * phi).value()) - mdl.budget1,
                          -1.0);
        if (coupled)
            c(1) = std::real((phi.adjoint() * mdl.V * phi).value()) - mdl.budget2;
        return c;
    };
    const Eigen::Vector2d tol(1e-6 * std::max(mdl.budget1, 1e-12),
                              1e-6 * std::max(mdl.budget2, 1e-12));
    auto feasible_at = [&](const Eigen::Vector2d& c) {
        return c(0) <= tol(0) && c(1) <= tol(1);
    };
    // Feasible plus complementary slackness within the constraint tolerance.
    auto kkt_at = [&](const Eigen::Vector2d& kappa, const Eigen::Vector2d& c) {
        if (!feasible_at(c)) return false;
        for (int i = 0; i < 2; ++i)
            if (kappa(i) > 1e-12 * (1.0 + kappa.norm()) && c(i) < -3.0 * tol(i)) return false;
        return true;
    };

    Eigen::Vector2d kappa = Eigen::Vector2d::Zero();
    VecC cand = primal(kappa);
    Eigen::Vector2d cons = constraint_values(cand);
    bool solved = feasible_at(cons);

    double kappa1_cap = 0.0;
    if (!solved) {
        // Exact single-multiplier solve in the whitened coordinates of the
        // diagonal budget quadratic.
        const Eigen::VectorXd pisqrt =
            mdl.P.diagonal().real().cwiseSqrt().cwiseInverse();
        const MatC Xi_w = pisqrt.cast<Complex>().asDiagonal() * mdl.Xi *
                          pisqrt.cast<Complex>().asDiagonal();
        const VecC lin_w = pisqrt.cast<Complex>().asDiagonal() * mdl.lin;
        detail::Resolvent res(Xi_w, lin_w);
        auto excess = [&](double k1) { return res.squared_norm(k1) - mdl.budget1; };
        const auto bis = bisect_smallest_multiplier(excess, opts.max_bisect, opts.bisect_tol);
        kappa1_cap = bis.multiplier;
        const VecC phi1 = pisqrt.cast<Complex>().asDiagonal() * res.solve(bis.multiplier);
        const Eigen::Vector2d c1 = constraint_values(phi1);
        if (c1(1) <= tol(1)) { // slack coupled constraint: this is the KKT point
            kappa << bis.multiplier, 0.0;
            cand = phi1;
            cons = c1;
            solved = true;
        }
    }

    if (!solved) {
        // Damped Newton ascent on the concave two-multiplier dual.
        auto dual_value = [&](const Eigen::Vector2d& k) {
            const VecC phi = primal(k);
            return -std::real(mdl.lin.dot(phi)) - k(0) * mdl.budget1 - k(1) * mdl.budget2;
        };
        Eigen::Vector2d k = st.theta1_kappa.cwiseMax(0.0);
        if (k.norm() <= 0.0) k << std::max(kappa1_cap, 1.0), 1.0;
        double theta = dual_value(k);
        for (int it = 0; it < 40 && !solved; ++it) {
            const MatC Msys = mdl.Xi + k(0) * mdl.P + k(1) * mdl.V;
            Eigen::LLT<MatC> llt(Msys);
            if (llt.info() != Eigen::Success) break;
            const VecC phi = llt.solve(mdl.lin);
            const VecC qp = mdl.P * phi;
            const VecC qv = mdl.V * phi;
            const Eigen::Vector2d c(std::real(phi.dot(qp)) - mdl.budget1,
                                    std::real(phi.dot(qv)) - mdl.budget2);
            if (kkt_at(k, c)) {
                kappa = k;
                cand = phi;
                cons = c;
                solved = true;
                break;
            }
            const VecC sp = llt.solve(qp);
            const VecC sv = llt.solve(qv);
            Eigen::Matrix2d hess;
            hess(0, 0) = -2.0 * std::real(qp.dot(sp));
            hess(0, 1) = -2.0 * std::real(qp.dot(sv));
            hess(1, 0) = hess(0, 1);
            hess(1, 1) = -2.0 * std::real(qv.dot(sv));
            hess.diagonal().array() -= 1e-14 * (1.0 + std::abs(hess.trace()));
            Eigen::Vector2d step = -hess.ldlt().solve(c);
            if (!step.allFinite()) break;
            double t = 1.0;
            bool moved = false;
            for (int bt = 0; bt < 10; ++bt, t *= 0.5) {
                const Eigen::Vector2d knew = (k + t * step).cwiseMax(0.0);
                const double th = dual_value(knew);
                if (th >= theta - 1e-12 * (1.0 + std::abs(theta))) {
                    k = knew;
                    theta = th;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
    }

    if (!solved) {
        // Ellipsoid fallback. Each constraint value decreases in its own
        // multiplier, so the single-constraint multipliers bound the optimum
        // and fix a containing ball.
        double kappa2_cap = 1.0;
        {
            auto excess2 = [&](double k2) {
                return constraint_values(primal(Eigen::Vector2d(0.0, k2)))(1);
            };
            try {
                kappa2_cap = bisect_smallest_multiplier(excess2, opts.max_bisect,
                                                        opts.bisect_tol)
                                 .multiplier;
            } catch (const NumericalError&) {
                kappa2_cap = 1e12;
            }
        }
        const Eigen::Vector2d center(0.5 * kappa1_cap, 0.5 * kappa2_cap);
        const double radius =
            std::max(opts.ellipsoid_radius,
                     0.51 * std::hypot(kappa1_cap, kappa2_cap) + 1.0);
        auto dual = [&](const Eigen::VectorXd& kap) {
            const VecC phi = primal(Eigen::Vector2d(kap));
            const Eigen::Vector2d g = constraint_values(phi);
            const double val = -std::real(mdl.lin.dot(phi)) - kap(0) * mdl.budget1 -
                               kap(1) * mdl.budget2;
            return std::make_pair(val, Eigen::VectorXd(g));
        };
        const auto er = ellipsoid_solve(dual, 2, opts.ellipsoid_tol, opts.ellipsoid_max_iter,
                                        radius, center);
        kappa = er.multipliers;
        // Complementary-slackness polish: per-coordinate bisection cleans up
        // the finite dual tolerance.
        for (int sweep = 0; sweep < 4; ++sweep) {
            bool touched = false;
            for (int i = 0; i < 2; ++i) {
                cons = constraint_values(primal(kappa));
                auto cons_i = [&](double v) {
                    Eigen::Vector2d kap = kappa;
                    kap(i) = v;
                    return constraint_values(primal(kap))(i);
                };
                if (cons(i) > tol(i)) {
                    double lo = kappa(i);
                    double hi = std::max(2.0 * kappa(i), 1e-8);
                    int grow = 0;
                    while (cons_i(hi) > 0.0 && ++grow < 120) {
                        lo = hi;
                        hi *= 2.0;
                    }
                    for (int b = 0; b < 60 && hi - lo > 1e-11 * (1.0 + hi); ++b) {
                        const double mid = 0.5 * (lo + hi);
                        (cons_i(mid) > 0.0 ? lo : hi) = mid;
                    }
                    kappa(i) = hi;
                    touched = true;
                } else if (kappa(i) > 0.0 && cons(i) < -tol(i)) {
                    if (cons_i(0.0) <= tol(i)) {
                        kappa(i) = 0.0;
                    } else {
                        double lo = 0.0, hi = kappa(i);
                        for (int b = 0; b < 60 && hi - lo > 1e-11 * (1.0 + hi); ++b) {
                            const double mid = 0.5 * (lo + hi);
                            (cons_i(mid) > 0.0 ? lo : hi) = mid;
                        }
                        kappa(i) = hi;
                    }
                    touched = true;
                }
            }
            if (!touched) break;
        }
        cand = primal(kappa);
        cons = constraint_values(cand);
    }

    // A block update must never increase the objective; keep the previous
    // (still feasible) point if the dual search came back worse.
    const double before = detail::quad_objective(mdl.Xi, mdl.lin, st.sol.phi1);
    const double after = detail::quad_objective(mdl.Xi, mdl.lin, cand);
    const bool ok = cons(0) <= tol(0) && cons(1) <= tol(1) &&
                    after <= before + 1e-9 * (1.0 + std::abs(before));
    if (ok) {
        st.sol.phi1 = cand;
        st.theta1_kappa = kappa;
    } else {
        cand = st.sol.phi1;
        cons = constraint_values(cand);
    }
    if (diag) {
        diag->multipliers = kappa;
        diag->constraint_values = cons;
        diag->budgets = Eigen::Vector2d(mdl.budget1, mdl.budget2);
    }
}


// RIS-2 block: single-constraint convex QCQP. The diagonal budget quadratic
// is whitened away so the multiplier search reduces to a norm-cap bisection
// on one precomputed eigensystem.
inline void update_theta2(PddState& st, const ChannelSet& ch, const SceneConfig& cfg,
                          const SolverOptions& opts, BlockDiag* diag = nullptr) {
    const auto mdl = detail::build_phi2_model(st, ch, cfg);
    const Eigen::VectorXd zsqrt = mdl.zdiag.cwiseSqrt();
    const Eigen::VectorXd zisqrt = zsqrt.cwiseInverse();
    const MatC Xi_w = zisqrt.cast<Complex>().asDiagonal() * mdl.Xi *
                      zisqrt.cast<Complex>().asDiagonal();
    const VecC lin_w = zisqrt.cast<Complex>().asDiagonal() * mdl.lin;

    detail::Resolvent res(Xi_w, lin_w);
    auto excess = [&](double xi) { return res.squared_norm(xi) - mdl.budget; };
    const auto bis = bisect_smallest_multiplier(excess, opts.max_bisect, opts.bisect_tol);
    VecC cand = zisqrt.cast<Complex>().asDiagonal() * res.solve(bis.multiplier);

    const double before = detail::quad_objective(mdl.Xi, mdl.lin, st.sol.phi2);
    const double after = detail::quad_objective(mdl.Xi, mdl.lin, cand);
    double cons = (zsqrt.cast<Complex>().asDiagonal() * cand).squaredNorm() - mdl.budget;
    const double tol = 1e-6 * std::max(mdl.budget, 1e-12);
    if (cons <= tol && after <= before + 1e-9 * (1.0 + std::abs(before))) {
        st.sol.phi2 = cand;
    } else {
        cand = st.sol.phi2;
        cons = (zsqrt.cast<Complex>().asDiagonal() * cand).squaredNorm() - mdl.budget;
    }
    if (diag) *diag = {bis.multiplier, cons, mdl.budget};
}

} // namespace rcc
