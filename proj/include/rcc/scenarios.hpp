#pragma once

#include <string>

#include "rcc/channel.hpp"
#include "rcc/linalg.hpp"
#include "rcc/model.hpp"

namespace rcc {

enum class Scheme {
    double_active,
    double_passive,
    single_active_1,
    single_active_2,
    no_ris,
};

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::double_active: return "double_active";
        case Scheme::double_passive: return "double_passive";
        case Scheme::single_active_1: return "single_active_1";
        case Scheme::single_active_2: return "single_active_2";
        case Scheme::no_ris: return "no_ris";
    }
    return "unknown";
}

inline Scheme parse_scheme(const std::string& name) {
    if (name == "double_active") return Scheme::double_active;
    if (name == "double_passive") return Scheme::double_passive;
    if (name == "single_active_1") return Scheme::single_active_1;
    if (name == "single_active_2") return Scheme::single_active_2;
    if (name == "no_ris") return Scheme::no_ris;
    throw std::invalid_argument("unknown scheme: " + name);
}

inline bool is_passive(Scheme s) { return s == Scheme::double_passive; }

// Unified total-power bookkeeping across schemes.
struct SchemeSpec {
    Scheme scheme = Scheme::double_active;
    double Q_total = 11.0;            // watts
    double gamma = 0.9;               // radar share
    double P_SW = dbm_to_watt(-10.0); // switch/control overhead per element
    double P_DC = dbm_to_watt(-5.0);  // amplifier bias per active element

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0)
            throw std::invalid_argument("SchemeSpec: gamma must be in [0, 1]");
        if (Q_total <= 0.0) throw std::invalid_argument("SchemeSpec: Q_total must be > 0");
        if (P_SW < 0.0 || P_DC < 0.0)
            throw std::invalid_argument("SchemeSpec: overheads must be >= 0");
    }
};

struct PowerSplit {
    double P_r = 0.0;
    double P_t = 0.0;
    double P_1 = 0.0;
    double P_2 = 0.0;
};

// Splits the total budget into radar, transmit and amplifier shares after
// charging the per-element overheads of the deployed surfaces.
inline PowerSplit power_allocation(const SchemeSpec& spec, int N1, int N2) {
    spec.validate();
    PowerSplit p;
    p.P_r = spec.gamma * spec.Q_total;
    const double rest = spec.Q_total - p.P_r;
    double split = 0.0;
    switch (spec.scheme) {
        case Scheme::double_active:
            split = rest - (N1 + N2) * (spec.P_SW + spec.P_DC);
            if (split < 0.0) throw InfeasibleError("power_allocation: negative residual budget");
            p.P_t = p.P_1 = p.P_2 = split / 3.0;
            break;
        case Scheme::double_passive:
            split = rest - (N1 + N2) * spec.P_SW;
            if (split < 0.0) throw InfeasibleError("power_allocation: negative residual budget");
            p.P_t = split;
            break;
        case Scheme::single_active_1:
            split = rest - N1 * (spec.P_SW + spec.P_DC);
            if (split < 0.0) throw InfeasibleError("power_allocation: negative residual budget");
            p.P_t = p.P_1 = split / 2.0;
            break;
        case Scheme::single_active_2:
            split = rest - N2 * (spec.P_SW + spec.P_DC);
            if (split < 0.0) throw InfeasibleError("power_allocation: negative residual budget");
            p.P_t = p.P_2 = split / 2.0;
            break;
        case Scheme::no_ris:
            p.P_t = rest;
            break;
    }
    if (p.P_t < 0.0) throw InfeasibleError("power_allocation: negative residual budget");
    return p;
}

// Removes the links of undeployed surfaces. Double-RIS schemes pass through
// unchanged; the solver later skips the reflection update of a surface whose
// outgoing links are all zero.
inline ChannelSet build_scenario(Scheme scheme, ChannelSet ch) {
    switch (scheme) {
        case Scheme::double_active:
        case Scheme::double_passive:
            break;
        case Scheme::single_active_1:
            ch.H_12.setZero();
            ch.H_2r.setZero();
            ch.h_b2.setZero();
            ch.h_2u.setZero();
            break;
        case Scheme::single_active_2:
            ch.H_12.setZero();
            ch.H_1r.setZero();
            ch.h_b1.setZero();
            ch.h_1u.setZero();
            break;
        case Scheme::no_ris:
            ch.H_1r.setZero();
            ch.H_2r.setZero();
            ch.H_12.setZero();
            ch.h_1u.setZero();
            ch.h_2u.setZero();
            break;
    }
    return ch;
}

// Element split for a fair comparison at a fixed total count: double-RIS
// schemes halve it, single-RIS schemes concentrate everything on the
// deployed surface. The undeployed side keeps one dummy (masked) element.
inline void apply_scheme_elements(SceneConfig& cfg, Scheme scheme, int total) {
    switch (scheme) {
        case Scheme::double_active:
        case Scheme::double_passive:
            cfg.N1 = total / 2;
            cfg.N2 = total - cfg.N1;
            break;
        case Scheme::single_active_1:
            cfg.N1 = total;
            cfg.N2 = 1;
            break;
        case Scheme::single_active_2:
            cfg.N1 = 1;
            cfg.N2 = total;
            break;
        case Scheme::no_ris:
            cfg.N1 = 1;
            cfg.N2 = 1;
            break;
    }
}

// Overhead-charged element counts per scheme under the unified power model.
inline std::pair<int, int> charged_elements(Scheme scheme, const SceneConfig& cfg) {
    switch (scheme) {
        case Scheme::double_active:
        case Scheme::double_passive: return {cfg.N1, cfg.N2};
        case Scheme::single_active_1: return {cfg.N1, 0};
        case Scheme::single_active_2: return {0, cfg.N2};
        case Scheme::no_ris: return {0, 0};
    }
    return {0, 0};
}

} // namespace rcc
