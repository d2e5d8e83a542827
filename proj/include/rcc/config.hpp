#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace rcc {

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

using Position = std::array<double, 2>;

inline double distance(const Position& a, const Position& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

// Large-scale path-loss exponents, one per link.
struct PathlossExponents {
    double bs_ue = 3.75;
    double bs_ris1 = 2.5;
    double bs_ris2 = 3.0;
    double ris1_ris2 = 2.2;
    double ris1_ue = 3.0;
    double ris2_ue = 2.5;
    double bs_radar = 2.2;
    double ris1_radar = 2.2;
    double ris2_radar = 2.2;
};

// Scene geometry, array sizes, power budgets, noise levels and the radar
// requirement. Defaults reproduce the desk-scale evaluation setup.
struct SceneConfig {
    Position bs{0.0, 0.0};
    Position ue{100.0, 0.0};
    Position ris1{0.0, 5.0};
    Position ris2{100.0, 5.0};
    Position radar{50.0, 25.0};

    int M = 12;  // radar antennas
    int N1 = 40; // RIS 1 elements
    int N2 = 40; // RIS 2 elements
    int K = 7;   // detection directions

    // Detection grid equispaced in sine space. A half-wavelength array maps
    // the two endfire angles onto one steering vector, which would make the
    // mirrored-endfire interference indistinguishable from the echo and the
    // detection constraint unsatisfiable, so the grid stops short of them.
    std::vector<double> theta_k{std::asin(-0.9), std::asin(-0.6), std::asin(-0.3), 0.0,
                                std::asin(0.3),  std::asin(0.6),  std::asin(0.9)};
    std::vector<double> alpha_k{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};

    double beta = 3.0;      // Rician factor
    double pl0_db = -30.0;  // reference path loss at d0
    double d0 = 1.0;        // reference distance, meters
    PathlossExponents pathloss_exponents{};
    double spacing_ratio = 0.5; // antenna spacing over wavelength

    // Noise powers in watts (-80 dBm defaults).
    double sigma2 = 1e-11;   // radar receiver
    double sigma0_2 = 1e-11; // user receiver
    double sigma1_2 = 1e-11; // RIS 1 amplifier
    double sigma2_2 = 1e-11; // RIS 2 amplifier

    double eta = 100.0; // radar SINR requirement, linear (20 dB)

    double P_r = 10.0; // radar power budget, watts
    double P_t = 0.4;  // BS transmit power, watts
    double P_1 = 0.4;  // RIS 1 amplifier budget, watts
    double P_2 = 0.4;  // RIS 2 amplifier budget, watts

    std::uint64_t seed = 1;

    void validate() const {
        if (M < 1 || N1 < 1 || N2 < 1 || K < 1)
            throw std::invalid_argument("SceneConfig: M, N1, N2, K must be >= 1");
        if (static_cast<int>(theta_k.size()) != K || static_cast<int>(alpha_k.size()) != K)
            throw std::invalid_argument("SceneConfig: theta_k/alpha_k must have K entries");
        if (P_r <= 0 || P_t < 0 || P_1 < 0 || P_2 < 0)
            throw std::invalid_argument("SceneConfig: power budgets must be positive");
        if (sigma2 <= 0 || sigma0_2 <= 0 || sigma1_2 < 0 || sigma2_2 < 0)
            throw std::invalid_argument("SceneConfig: noise powers must be positive");
        if (beta < 0) throw std::invalid_argument("SceneConfig: beta must be >= 0");
        if (eta <= 0) throw std::invalid_argument("SceneConfig: eta must be > 0");
        if (spacing_ratio <= 0) throw std::invalid_argument("SceneConfig: spacing_ratio must be > 0");
        for (double th : theta_k)
            if (th < -M_PI / 2 - 1e-12 || th > M_PI / 2 + 1e-12)
                throw std::invalid_argument("SceneConfig: theta_k outside [-pi/2, pi/2]");
    }
};

// Two-loop solver controls. Caps are deliberately generous; the loops exit
// on their tolerance tests long before hitting them in normal runs.
struct SolverOptions {
    double eps = 1e-3;             // relative objective / rate change tolerance
    double rho0 = 1.0;             // initial penalty parameter
    double c = 0.7;                // penalty shrink factor, 0 < c < 1
    double sigma0 = 0.1;           // initial violation threshold for dual updates
    double sigma_decay = 0.35;     // threshold shrink applied after each dual update
    double violation_target = 1e-6; // required equality-residual level at exit
    int max_inner = 100;
    int max_outer = 50;
    int max_bisect = 200;
    double bisect_tol = 1e-8;
    double ellipsoid_tol = 1e-6;
    int ellipsoid_max_iter = 500;
    double ellipsoid_radius = 1e3;
    double mm_tol = 1e-6;
    int mm_max_iter = 200;
    double sinr_margin = 1e-3;     // internal tightening of eta so the finite
                                   // penalty residual cannot push the returned
                                   // solution below the true requirement
    int repair_passes = 5;
    bool track_blocks = false;     // record the objective after every block update
};

inline void from_json_required(const nlohmann::json& j, const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
}

inline void to_json(nlohmann::json& j, const PathlossExponents& e) {
    j = nlohmann::json{{"bs_ue", e.bs_ue},           {"bs_ris1", e.bs_ris1},
                       {"bs_ris2", e.bs_ris2},       {"ris1_ris2", e.ris1_ris2},
                       {"ris1_ue", e.ris1_ue},       {"ris2_ue", e.ris2_ue},
                       {"bs_radar", e.bs_radar},     {"ris1_radar", e.ris1_radar},
                       {"ris2_radar", e.ris2_radar}};
}

inline void from_json(const nlohmann::json& j, PathlossExponents& e) {
    from_json_required(j, "bs_ue", e.bs_ue);
    from_json_required(j, "bs_ris1", e.bs_ris1);
    from_json_required(j, "bs_ris2", e.bs_ris2);
    from_json_required(j, "ris1_ris2", e.ris1_ris2);
    from_json_required(j, "ris1_ue", e.ris1_ue);
    from_json_required(j, "ris2_ue", e.ris2_ue);
    from_json_required(j, "bs_radar", e.bs_radar);
    from_json_required(j, "ris1_radar", e.ris1_radar);
    from_json_required(j, "ris2_radar", e.ris2_radar);
}

inline void to_json(nlohmann::json& j, const SceneConfig& c) {
    j = nlohmann::json{
        {"bs", c.bs},           {"ue", c.ue},
        {"ris1", c.ris1},       {"ris2", c.ris2},
        {"radar", c.radar},     {"M", c.M},
        {"N1", c.N1},           {"N2", c.N2},
        {"K", c.K},             {"theta_k", c.theta_k},
        {"alpha_k", c.alpha_k}, {"beta", c.beta},
        {"pl0_db", c.pl0_db},   {"d0", c.d0},
        {"pathloss_exponents", c.pathloss_exponents},
        {"spacing_ratio", c.spacing_ratio},
        {"sigma2", c.sigma2},   {"sigma0_2", c.sigma0_2},
        {"sigma1_2", c.sigma1_2}, {"sigma2_2", c.sigma2_2},
        {"eta", c.eta},         {"P_r", c.P_r},
        {"P_t", c.P_t},         {"P_1", c.P_1},
        {"P_2", c.P_2},         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SceneConfig& c) {
    if (j.contains("bs")) c.bs = j.at("bs").get<Position>();
    if (j.contains("ue")) c.ue = j.at("ue").get<Position>();
    if (j.contains("ris1")) c.ris1 = j.at("ris1").get<Position>();
    if (j.contains("ris2")) c.ris2 = j.at("ris2").get<Position>();
    if (j.contains("radar")) c.radar = j.at("radar").get<Position>();
    if (j.contains("M")) c.M = j.at("M").get<int>();
    if (j.contains("N1")) c.N1 = j.at("N1").get<int>();
    if (j.contains("N2")) c.N2 = j.at("N2").get<int>();
    if (j.contains("K")) c.K = j.at("K").get<int>();
    if (j.contains("theta_k")) c.theta_k = j.at("theta_k").get<std::vector<double>>();
    if (j.contains("alpha_k")) c.alpha_k = j.at("alpha_k").get<std::vector<double>>();
    from_json_required(j, "beta", c.beta);
    from_json_required(j, "pl0_db", c.pl0_db);
    from_json_required(j, "d0", c.d0);
    if (j.contains("pathloss_exponents"))
        c.pathloss_exponents = j.at("pathloss_exponents").get<PathlossExponents>();
    from_json_required(j, "spacing_ratio", c.spacing_ratio);
    from_json_required(j, "sigma2", c.sigma2);
    from_json_required(j, "sigma0_2", c.sigma0_2);
    from_json_required(j, "sigma1_2", c.sigma1_2);
    from_json_required(j, "sigma2_2", c.sigma2_2);
    from_json_required(j, "eta", c.eta);
    from_json_required(j, "P_r", c.P_r);
    from_json_required(j, "P_t", c.P_t);
    from_json_required(j, "P_1", c.P_1);
    from_json_required(j, "P_2", c.P_2);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
}

inline void to_json(nlohmann::json& j, const SolverOptions& o) {
    j = nlohmann::json{{"eps", o.eps},
                       {"rho0", o.rho0},
                       {"c", o.c},
                       {"sigma0", o.sigma0},
                       {"sigma_decay", o.sigma_decay},
                       {"violation_target", o.violation_target},
                       {"sinr_margin", o.sinr_margin},
                       {"caps",
                        {{"inner", o.max_inner},
                         {"outer", o.max_outer},
                         {"bisection", o.max_bisect},
                         {"ellipsoid", o.ellipsoid_max_iter},
                         {"mm", o.mm_max_iter}}}};
}

inline void from_json(const nlohmann::json& j, SolverOptions& o) {
    from_json_required(j, "eps", o.eps);
    from_json_required(j, "rho0", o.rho0);
    from_json_required(j, "c", o.c);
    from_json_required(j, "sigma0", o.sigma0);
    from_json_required(j, "sigma_decay", o.sigma_decay);
    from_json_required(j, "violation_target", o.violation_target);
    from_json_required(j, "sinr_margin", o.sinr_margin);
    if (j.contains("caps")) {
        const auto& caps = j.at("caps");
        if (caps.contains("inner")) o.max_inner = caps.at("inner").get<int>();
        if (caps.contains("outer")) o.max_outer = caps.at("outer").get<int>();
        if (caps.contains("bisection")) o.max_bisect = caps.at("bisection").get<int>();
        if (caps.contains("ellipsoid")) o.ellipsoid_max_iter = caps.at("ellipsoid").get<int>();
        if (caps.contains("mm")) o.mm_max_iter = caps.at("mm").get<int>();
    }
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

} // namespace rcc
