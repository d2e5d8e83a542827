#include <catch2/catch_amalgamated.hpp>

#include "oracle_utils.hpp"

using namespace rcc;

namespace {

SceneConfig passive_config(std::uint64_t seed) {
    SceneConfig cfg = oracle::tiny_config(seed, 5, 6, 6, 2);
    cfg.sigma2 = cfg.sigma0_2 = 1e-7;
    cfg.sigma1_2 = cfg.sigma2_2 = 0.0; // passive surfaces add no noise
    cfg.eta = 8.0;
    cfg.P_r = 4.0;
    cfg.P_t = 0.5;
    return cfg;
}

PddState passive_state(const ChannelSet& ch, const SceneConfig& cfg, std::uint64_t seed) {
    PddState st = oracle::random_state(ch, cfg, seed, false);
    for (int n = 0; n < st.sol.phi1.size(); ++n)
        st.sol.phi1(n) /= std::abs(st.sol.phi1(n));
    for (int n = 0; n < st.sol.phi2.size(); ++n)
        st.sol.phi2(n) /= std::abs(st.sol.phi2(n));
    return st;
}

} // namespace

TEST_CASE("MM step closed forms") {
    // Direction with positive real entries maps to the all-ones phase vector.
    const MatC eye = MatC::Identity(3, 3);
    rcc::detail::MmModel mdl{0.5 * eye, VecC::Zero(3)};
    VecC phi = VecC::Ones(3);
    mdl.s = -VecC::Ones(3); // direction = (Xi - lmin I) phi - s = ones
    const VecC next = rcc::detail::mm_iterate(mdl, phi, 1e-9, 1);
    for (int n = 0; n < 3; ++n) CHECK(std::abs(next(n) - Complex(1.0, 0.0)) < 1e-12);

    // Xi = lmin I exactly and s = -(1+j) ones: every entry lands on pi/4.
    rcc::detail::MmModel flat{eye, VecC::Constant(3, Complex(-1.0, -1.0))};
    const VecC rot = rcc::detail::mm_iterate(flat, phi, 1e-9, 1);
    for (int n = 0; n < 3; ++n)
        CHECK(std::abs(rot(n) - std::polar(1.0, M_PI / 4)) < 1e-12);
}

TEST_CASE("MM objective is non-decreasing at every iteration") {
    for (std::uint64_t seed : {3, 4, 5}) {
        const SceneConfig cfg = passive_config(seed);
        const ChannelSet ch = generate_channels(cfg);
        PddState st = passive_state(ch, cfg, seed + 50);
        const auto mdl = rcc::detail::build_mm_phi1_model(st, ch, cfg);
        VecC phi = st.sol.phi1;
        double obj = rcc::detail::mm_objective(mdl, phi);
        for (int it = 0; it < 40; ++it) {
            phi = rcc::detail::mm_iterate(mdl, phi, 0.0, 1);
            const double next = rcc::detail::mm_objective(mdl, phi);
            CHECK(next >= obj - 1e-9 * (1.0 + std::abs(obj)));
            obj = next;
            for (int n = 0; n < phi.size(); ++n)
                CHECK(std::abs(std::abs(phi(n)) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("minorant inequality holds with equality at the expansion point") {
    Rng rng(8);
    const SceneConfig cfg = passive_config(9);
    const ChannelSet ch = generate_channels(cfg);
    PddState st = passive_state(ch, cfg, 77);
    const auto mdl = rcc::detail::build_mm_phi1_model(st, ch, cfg);
    const double lmin = smallest_eigenvalue(mdl.Xi);
    const int n1 = cfg.N1;

    auto minorant = [&](const VecC& phi, const VecC& anchor) {
        MatC shifted = mdl.Xi;
        shifted.diagonal().array() -= lmin;
        return 2.0 * std::real((phi.adjoint() * shifted * anchor).value()) +
               std::real((anchor.adjoint() * (lmin * MatC::Identity(n1, n1) - mdl.Xi) * anchor)
                             .value()) +
               lmin * n1;
    };
    for (int trial = 0; trial < 200; ++trial) {
        VecC phi(n1), anchor(n1);
        for (int n = 0; n < n1; ++n) {
            phi(n) = std::polar(1.0, rng.uniform(0.0, 2 * M_PI));
            anchor(n) = std::polar(1.0, rng.uniform(0.0, 2 * M_PI));
        }
        const double quad = std::real((phi.adjoint() * mdl.Xi * phi).value());
        CHECK(quad >= minorant(phi, anchor) - 1e-9 * (1.0 + std::abs(quad)));
        CHECK(std::abs(std::real((anchor.adjoint() * mdl.Xi * anchor).value()) -
                       minorant(anchor, anchor)) < 1e-9);
    }
}

TEST_CASE("MM beats a coarse exhaustive phase search within 2 percent") {
    const SceneConfig cfg = passive_config(10);
    SceneConfig c5 = cfg;
    c5.N1 = 5;
    const ChannelSet ch = generate_channels(c5);
    PddState st = passive_state(ch, c5, 99);
    const auto mdl = rcc::detail::build_mm_phi1_model(st, ch, c5);
    const VecC phi = rcc::detail::mm_iterate(mdl, st.sol.phi1, 1e-10, 400);
    const double impl = rcc::detail::mm_objective(mdl, phi);

    double best = -1e300;
    const int q = 12;
    std::array<int, 5> idx{};
    for (idx[0] = 0; idx[0] < q; ++idx[0])
        for (idx[1] = 0; idx[1] < q; ++idx[1])
            for (idx[2] = 0; idx[2] < q; ++idx[2])
                for (idx[3] = 0; idx[3] < q; ++idx[3])
                    for (idx[4] = 0; idx[4] < q; ++idx[4]) {
                        VecC cand(5);
                        for (int n = 0; n < 5; ++n)
                            cand(n) = std::polar(1.0, 2.0 * M_PI * idx[n] / q);
                        best = std::max(best, rcc::detail::mm_objective(mdl, cand));
                    }
    CHECK(impl >= best - 0.02 * std::abs(best));
}

TEST_CASE("phi2 MM converges to a phase fixed point") {
    const SceneConfig cfg = passive_config(12);
    const ChannelSet ch = generate_channels(cfg);
    PddState st = passive_state(ch, cfg, 101);
    const auto mdl = rcc::detail::build_mm_phi2_model(st, ch, cfg);
    const double before = rcc::detail::mm_objective(mdl, st.sol.phi2);
    VecC phi = rcc::detail::mm_iterate(mdl, st.sol.phi2, 1e-12, 500);
    CHECK(rcc::detail::mm_objective(mdl, phi) >= before - 1e-9);

    const double lmin = smallest_eigenvalue(mdl.Xi);
    MatC shifted = mdl.Xi;
    shifted.diagonal().array() -= lmin;
    const VecC dir = shifted * phi - mdl.s;
    for (int n = 0; n < phi.size(); ++n) {
        if (std::abs(dir(n)) < 1e-12) continue;
        CHECK(std::abs(phi(n) - dir(n) / std::abs(dir(n))) < 1e-5);
    }
}

TEST_CASE("passive solve returns unit-modulus phases and a consistent report") {
    const SceneConfig cfg = passive_config(14);
    const ChannelSet ch = generate_channels(cfg);
    const SolveResult res = passive_solve(ch, cfg);
    for (int n = 0; n < res.sol.phi1.size(); ++n)
        CHECK(std::abs(std::abs(res.sol.phi1(n)) - 1.0) < 1e-9);
    for (int n = 0; n < res.sol.phi2.size(); ++n)
        CHECK(std::abs(std::abs(res.sol.phi2(n)) - 1.0) < 1e-9);
    CHECK(res.metrics.rate >= 0.0);

    // Passive evaluation carries no amplified-noise terms.
    SceneConfig quiet = cfg;
    quiet.sigma1_2 = 0.0;
    quiet.sigma2_2 = 0.0;
    CHECK(res.metrics.snr_c == Catch::Approx(comm_snr(ch, res.sol, quiet)).epsilon(1e-12));

    const SolveResult res2 = passive_solve(ch, cfg);
    CHECK(res.sol.phi1 == res2.sol.phi1);
    CHECK(res.metrics.rate == res2.metrics.rate);
}

TEST_CASE("zero transmit power pins the passive rate at zero") {
    SceneConfig cfg = passive_config(15);
    cfg.P_t = 0.0;
    const ChannelSet ch = generate_channels(cfg);
    try {
        const SolveResult res = passive_solve(ch, cfg);
        CHECK(res.metrics.rate == 0.0);
    } catch (const InfeasibleError&) {
        SUCCEED("zero-power scenario reported infeasible");
    }
}
