#include <catch2/catch_amalgamated.hpp>

#include "oracle_utils.hpp"

using namespace rcc;

namespace {

struct Instance {
    SceneConfig cfg;
    ChannelSet ch;
    PddState st;
};

Instance make_instance(std::uint64_t seed, bool with_et = true) {
    Instance in;
    in.cfg = oracle::tiny_config(seed);
    if (!with_et) {
        in.cfg.sigma1_2 = 0.0;
        in.cfg.sigma2_2 = 0.0;
    }
    in.ch = generate_channels(in.cfg);
    in.st = oracle::random_state(in.ch, in.cfg, seed * 7 + 1, with_et);
    return in;
}

double rel_gap(const oracle::BlockCompare& c) {
    const double scale = std::abs(c.oracle) + std::abs(c.start) + 1e-9;
    return std::abs(c.impl - c.oracle) / scale;
}

} // namespace

TEST_CASE("FP surrogate: zero point, optimal point, minimization identity") {
    auto [cfg, ch, st] = make_instance(1);
    CHECK(fp_surrogate(ch, st.sol.phi1, st.sol.phi2, Complex{}, cfg) == 0.0);

    const Complex xopt = fp_optimal_x(ch, st.sol.phi1, st.sol.phi2, cfg);
    const double fopt = fp_surrogate(ch, st.sol.phi1, st.sol.phi2, xopt, cfg);
    const double snr = comm_snr(ch, st.sol, cfg);
    CHECK(fopt == Catch::Approx(-snr).epsilon(1e-8));

    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const Complex x = 3.0 * rng.cnormal() + xopt;
        CHECK(fp_surrogate(ch, st.sol.phi1, st.sol.phi2, x, cfg) >= fopt - 1e-12);
    }
}

TEST_CASE("FP optimal x: direct-link reduction and grid-search oracle") {
    auto [cfg, ch, st] = make_instance(2);
    const VecC z1 = VecC::Zero(cfg.N1), z2 = VecC::Zero(cfg.N2);
    const Complex direct = fp_optimal_x(ch, z1, z2, cfg);
    CHECK(std::abs(direct - std::sqrt(cfg.P_t) * ch.h_bu / cfg.sigma0_2) < 1e-12);

    ChannelSet nod = ch;
    nod.h_bu = 0.0;
    CHECK(std::abs(fp_optimal_x(nod, z1, z2, cfg)) == 0.0);

    // Coarse grid plus local refinement over the complex plane.
    const Complex xopt = fp_optimal_x(ch, st.sol.phi1, st.sol.phi2, cfg);
    auto f = [&](Complex x) { return fp_surrogate(ch, st.sol.phi1, st.sol.phi2, x, cfg); };
    const double span = 2.0 * std::abs(xopt) + 1.0;
    Complex best{};
    double best_val = f(best);
    const int n = 80;
    for (int i = -n; i <= n; ++i)
        for (int j = -n; j <= n; ++j) {
            const Complex x(span * i / n, span * j / n);
            const double v = f(x);
            if (v < best_val) {
                best_val = v;
                best = x;
            }
        }
    double step = span / n;
    for (int refine = 0; refine < 40; ++refine) {
        bool moved = false;
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j) {
                const Complex x = best + Complex(step * i, step * j);
                if (f(x) < best_val) {
                    best_val = f(x);
                    best = x;
                    moved = true;
                }
            }
        if (!moved) step *= 0.5;
    }
    CHECK(std::abs(best - xopt) <= 1e-4 * (1.0 + std::abs(xopt)));
}

TEST_CASE("CCP linearization is a minorant with equality at the anchor") {
    CHECK(ccp_linearize(Complex(1, 1), Complex(1, 1)) == Catch::Approx(2.0));
    CHECK(ccp_linearize(Complex(0, 0), Complex(1, 0)) == Catch::Approx(-1.0));
    Rng rng(4);
    for (int trial = 0; trial < 100000; ++trial) {
        const Complex u = 3.0 * rng.cnormal();
        const Complex anchor = 3.0 * rng.cnormal();
        CHECK(ccp_linearize(u, anchor) <= std::norm(u) + 1e-12);
    }
    for (int trial = 0; trial < 100; ++trial) {
        const Complex anchor = 3.0 * rng.cnormal();
        CHECK(ccp_linearize(anchor, anchor) == Catch::Approx(std::norm(anchor)).margin(1e-12));
    }
}

TEST_CASE("AL objective matches the dense term-by-term oracle") {
    for (std::uint64_t seed : {5, 6, 7}) {
        auto [cfg, ch, st] = make_instance(seed);
        CHECK(al_objective(st, ch, cfg) ==
              Catch::Approx(oracle::naive_al(st, ch, cfg)).epsilon(1e-10));
    }

    // Zero residuals and optimal x: the objective is the negated SNR.
    auto [cfg, ch, st] = make_instance(8);
    detail::pin_auxiliaries(st, ch, cfg, true);
    CHECK(al_objective(st, ch, cfg) ==
          Catch::Approx(-comm_snr(ch, st.sol, cfg)).epsilon(1e-8));

    // A single unit residual with rho = 0.5 adds exactly 1.
    const double base = al_objective(st, ch, cfg);
    st.rho = 0.5;
    st.u[0] += 1.0;
    CHECK(al_objective(st, ch, cfg) == Catch::Approx(base + 1.0).epsilon(1e-9));

    st.rho = 0.0;
    CHECK_THROWS_AS(al_objective(st, ch, cfg), std::domain_error);
}

TEST_CASE("constraint violation picks the largest residual") {
    auto [cfg, ch, st] = make_instance(9);
    detail::pin_auxiliaries(st, ch, cfg, true);
    CHECK(constraint_violation(st, ch) < 1e-14);
    st.v[1] += Complex(0.0, 0.3);
    CHECK(constraint_violation(st, ch) == Catch::Approx(0.3).epsilon(1e-12));
    st.e[0](1) += Complex(0.5, 0.0);
    CHECK(constraint_violation(st, ch) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("reflection-block quadratic models reproduce the AL exactly") {
    Rng rng(10);
    for (std::uint64_t seed : {11, 12, 13}) {
        auto [cfg, ch, st] = make_instance(seed);
        const auto m1 = detail::build_phi1_model(st, ch, cfg);
        const auto m2 = detail::build_phi2_model(st, ch, cfg);

        PddState zero1 = st;
        zero1.sol.phi1 = VecC::Zero(cfg.N1);
        const double base1 = oracle::naive_al(zero1, ch, cfg);
        PddState zero2 = st;
        zero2.sol.phi2 = VecC::Zero(cfg.N2);
        const double base2 = oracle::naive_al(zero2, ch, cfg);

        for (int trial = 0; trial < 8; ++trial) {
            VecC p1(cfg.N1), p2(cfg.N2);
            for (int n = 0; n < cfg.N1; ++n) p1(n) = rng.cnormal();
            for (int n = 0; n < cfg.N2; ++n) p2(n) = rng.cnormal();

            PddState probe1 = st;
            probe1.sol.phi1 = p1;
            const double lhs1 = oracle::naive_al(probe1, ch, cfg) - base1;
            const double rhs1 = detail::quad_objective(m1.Xi, m1.lin, p1);
            CHECK(lhs1 == Catch::Approx(rhs1).margin(1e-9 * (1.0 + std::abs(lhs1))));

            PddState probe2 = st;
            probe2.sol.phi2 = p2;
            const double lhs2 = oracle::naive_al(probe2, ch, cfg) - base2;
            const double rhs2 = detail::quad_objective(m2.Xi, m2.lin, p2);
            CHECK(lhs2 == Catch::Approx(rhs2).margin(1e-9 * (1.0 + std::abs(lhs2))));
        }

        // Constraint quadratics against the power formulas.
        const auto set1 = oracle::phi1_budget_set(ch, cfg);
        const auto setv = oracle::phi1_ris2_set(ch, st.sol.phi2, cfg);
        const auto setz = oracle::phi2_budget_set(ch, st.sol.phi1, cfg);
        CHECK((m1.P - set1.Q).norm() < 1e-12);
        CHECK((m1.V - setv.Q).norm() < 1e-10);
        CHECK(m1.budget2 == Catch::Approx(setv.budget).epsilon(1e-12));
        CHECK(active_ris_power(ch, st.sol.phi1, st.sol.phi2, cfg, 2) ==
              Catch::Approx(
                  std::real((st.sol.phi2.adjoint() * setz.Q * st.sol.phi2).value()))
                  .epsilon(1e-10));
        CHECK(active_ris_power(ch, st.sol.phi1, VecC::Ones(cfg.N2), cfg, 1) ==
              Catch::Approx(
                  std::real((st.sol.phi1.adjoint() * set1.Q * st.sol.phi1).value()))
                  .epsilon(1e-10));
    }
}

TEST_CASE("closed-form block updates match convex oracles") {
    const SolverOptions opts;
    for (std::uint64_t seed : {21, 22, 23, 24}) {
        auto [cfg, ch, st] = make_instance(seed);

        const auto cw = oracle::compare_w_block(st, ch, cfg, opts);
        CHECK(cw.impl <= cw.start + 1e-9);
        CHECK(rel_gap(cw) < 1e-4);

        const auto cd = oracle::compare_d_block(st, ch, cfg, opts, 0);
        CHECK(cd.impl <= cd.start + 1e-9);
        CHECK(rel_gap(cd) < 1e-4);

        const auto c1 = oracle::compare_theta1_block(st, ch, cfg, opts);
        CHECK(c1.impl <= c1.start + 1e-9);
        CHECK(rel_gap(c1) < 1e-4);

        const auto c2 = oracle::compare_theta2_block(st, ch, cfg, opts);
        CHECK(c2.impl <= c2.start + 1e-9);
        CHECK(rel_gap(c2) < 1e-4);
    }
}

TEST_CASE("auxiliary updates match projection and dual oracles") {
    const SolverOptions opts;
    for (std::uint64_t seed : {31, 32, 33, 34, 35}) {
        auto [cfg, ch, st] = make_instance(seed);
        for (int k = 0; k < cfg.K; ++k) {
            PddState s = st;
            update_aux_u(s, ch, cfg, opts, k);
            const Complex u_star = oracle::aux::oracle_u(st, ch, cfg, k);
            const Complex u_dual = oracle::aux::oracle_u_dual(st, ch, cfg, k);
            CHECK(std::abs(s.u[k] - u_star) <= 1e-6 * (1.0 + std::abs(u_star)));
            CHECK(std::abs(s.u[k] - u_dual) <= 1e-6 * (1.0 + std::abs(u_dual)));

            PddState s2 = s;
            update_aux_rest(s2, ch, cfg, opts, k);

            PddState shadow = s;
            const Complex v_star = oracle::aux::oracle_v(shadow, ch, cfg, k);
            CHECK(std::abs(s2.v[k] - v_star) <= 1e-6 * (1.0 + std::abs(v_star)));
            shadow.v[k] = s2.v[k];
            const VecC y_star = oracle::aux::oracle_y(shadow, ch, cfg, k);
            CHECK((s2.y[k] - y_star).norm() <= 1e-6 * (1.0 + y_star.norm()));
            shadow.y[k] = s2.y[k];
            const VecC e_star = oracle::aux::oracle_e(shadow, ch, cfg, k);
            CHECK((s2.e[k] - e_star).norm() <= 1e-6 * (1.0 + e_star.norm()));
            shadow.e[k] = s2.e[k];
            const VecC t_star = oracle::aux::oracle_t(shadow, ch, cfg, k);
            CHECK((s2.t[k] - t_star).norm() <= 1e-6 * (1.0 + t_star.norm()));
        }
    }
}

TEST_CASE("complementary slackness holds for every bisection multiplier") {
    const SolverOptions opts;
    for (std::uint64_t seed : {41, 42, 43}) {
        auto [cfg, ch, st] = make_instance(seed);

        BlockDiag dw;
        PddState sw = st;
        update_w(sw, ch, cfg, opts, &dw);
        double pw = 0.0;
        for (const auto& wk : sw.sol.w) pw += wk.squaredNorm();
        CHECK(std::abs(dw.multiplier * (pw - cfg.P_r)) <= 1e-5 * cfg.P_r);

        BlockDiag dd;
        PddState sd = st;
        update_d(sd, ch, cfg, opts, 0, &dd);
        CHECK(std::abs(dd.multiplier * (sd.sol.d[0].squaredNorm() - dd.budget)) <=
              1e-5 * std::max(dd.budget, 1.0));

        BlockDiag d2;
        PddState s2 = st;
        update_theta2(s2, ch, cfg, opts, &d2);
        CHECK(std::abs(d2.multiplier * d2.constraint_value) <= 1e-5 * std::max(d2.budget, 1.0));

        ThetaDiag d1;
        PddState s1 = st;
        update_theta1(s1, ch, cfg, opts, &d1);
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(d1.multipliers(i) * d1.constraint_values(i)) <=
                  1e-4 * std::max(d1.budgets(i), 1.0));
    }
}

TEST_CASE("update_d reports an empty feasible set") {
    auto [cfg, ch, st] = make_instance(55);
    // Shrink u until the linearized constraint cannot admit any d.
    st.u[0] *= 1e-6;
    st.u_anchor = st.u;
    st.y[0].setConstant(10.0);
    st.y[0](0) = Complex{};
    CHECK_THROWS_AS(update_d(st, ch, cfg, SolverOptions{}, 0), InfeasibleError);
}

TEST_CASE("update_aux_u with zero anchor and violated constraint is infeasible") {
    auto [cfg, ch, st] = make_instance(56);
    st.u_anchor[0] = 0.0;
    st.y[0].setConstant(100.0); // force a violation no multiplier can fix
    st.y[0](0) = Complex{};
    CHECK_THROWS_AS(update_aux_u(st, ch, cfg, SolverOptions{}, 0), InfeasibleError);
}
