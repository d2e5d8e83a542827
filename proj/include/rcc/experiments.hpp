#pragma once

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <thread>

#include "rcc/scenarios.hpp"
#include "rcc/solver.hpp"

namespace rcc {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { convergence, elements, location, power, eta, gamma };

inline const char* experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::convergence: return "convergence";
        case ExperimentKind::elements: return "elements";
        case ExperimentKind::location: return "location";
        case ExperimentKind::power: return "power";
        case ExperimentKind::eta: return "eta";
        case ExperimentKind::gamma: return "gamma";
    }
    return "unknown";
}

inline ExperimentKind parse_experiment_kind(const std::string& name) {
    if (name == "convergence") return ExperimentKind::convergence;
    if (name == "elements") return ExperimentKind::elements;
    if (name == "location") return ExperimentKind::location;
    if (name == "power") return ExperimentKind::power;
    if (name == "eta") return ExperimentKind::eta;
    if (name == "gamma") return ExperimentKind::gamma;
    throw UsageError("unknown experiment kind: " + name);
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::convergence;
    std::vector<double> sweep;         // empty -> kind default
    std::vector<Scheme> schemes;       // empty -> kind default
    std::vector<std::uint64_t> seeds;  // empty -> kind default
    SceneConfig base;
    SolverOptions solver;
    SchemeSpec power_model;
    int threads = 0; // 0 -> hardware concurrency
    bool quiet = false;

    void fill_defaults() {
        if (sweep.empty()) {
            switch (kind) {
                case ExperimentKind::convergence: sweep = {0.0}; break;
                case ExperimentKind::elements: sweep = {40, 60, 80, 100}; break;
                case ExperimentKind::location: sweep = {10, 20, 30, 40, 45}; break;
                case ExperimentKind::power: sweep = {9, 10, 11, 12, 13}; break;
                case ExperimentKind::eta:
                    for (int db = 20; db <= 30; ++db) sweep.push_back(db);
                    break;
                case ExperimentKind::gamma:
                    for (int g = 1; g <= 9; ++g) sweep.push_back(0.1 * g);
                    break;
            }
        }
        if (schemes.empty()) {
            if (kind == ExperimentKind::convergence) {
                schemes = {Scheme::double_active};
            } else {
                schemes = {Scheme::double_active, Scheme::single_active_1,
                           Scheme::single_active_2, Scheme::double_passive, Scheme::no_ris};
            }
        }
        if (seeds.empty()) {
            const int n = kind == ExperimentKind::eta ? 50 : 20;
            for (int s = 1; s <= n; ++s) seeds.push_back(s);
        }
        if (sweep.empty() || seeds.empty()) throw UsageError("empty sweep or seed list");
    }
};

struct ResultRow {
    std::string scheme;
    double sweep = 0.0;
    std::uint64_t seed = 0;
    double rate = 0.0;
    bool feasible = false;
    int iters = 0;
    double violation = 0.0;
    double ms = 0.0;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<SolveTrace> traces; // parallel to rows
};

namespace detail {

// Scene + budgets for one (scheme, sweep value) grid point.
inline SceneConfig point_config(const ExperimentSpec& spec, Scheme scheme, double sweep,
                                std::uint64_t seed) {
    SceneConfig cfg = spec.base;
    cfg.seed = seed;

    const int base_total = spec.base.N1 + spec.base.N2;
    int total = base_total;
    if (spec.kind == ExperimentKind::elements) total = static_cast<int>(sweep);
    apply_scheme_elements(cfg, scheme, total);

    if (spec.kind == ExperimentKind::location) {
        cfg.ris1 = {sweep, 0.0};
        cfg.ris2 = {spec.base.ue[0] - sweep, 0.0};
    }
    if (spec.kind == ExperimentKind::eta) cfg.eta = db_to_linear(sweep);

    if (spec.kind != ExperimentKind::convergence) {
        // Unified-budget allocation; the convergence study instead uses the
        // explicitly configured powers.
        SchemeSpec pm = spec.power_model;
        pm.scheme = scheme;
        if (spec.kind == ExperimentKind::power) pm.Q_total = sweep;
        if (spec.kind == ExperimentKind::gamma) pm.gamma = sweep;
        const auto [n1c, n2c] = charged_elements(scheme, cfg);
        const PowerSplit split = power_allocation(pm, n1c, n2c);
        cfg.P_r = split.P_r;
        cfg.P_t = split.P_t;
        cfg.P_1 = split.P_1;
        cfg.P_2 = split.P_2;
    }
    return cfg;
}

} // namespace detail

// Runs the full (scheme, sweep, seed) grid on a bounded worker pool; rows
// come back in deterministic spec order regardless of completion order.
inline ExperimentResult run_experiment(ExperimentSpec spec) {
    spec.fill_defaults();
    struct Item {
        Scheme scheme;
        double sweep;
        std::uint64_t seed;
    };
    std::vector<Item> items;
    for (Scheme sch : spec.schemes)
        for (double sv : spec.sweep)
            for (std::uint64_t seed : spec.seeds) items.push_back({sch, sv, seed});

    ExperimentResult result;
    result.rows.resize(items.size());
    result.traces.resize(items.size());

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex log_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            const Item& item = items[i];
            ResultRow row;
            row.scheme = scheme_name(item.scheme);
            row.sweep = item.sweep;
            row.seed = item.seed;
            try {
                const SceneConfig cfg = detail::point_config(spec, item.scheme, item.sweep, item.seed);
                const ChannelSet ch = build_scenario(item.scheme, generate_channels(cfg));
                const SolveResult res = is_passive(item.scheme)
                                            ? passive_solve(ch, cfg, spec.solver)
                                            : pdd_solve(ch, cfg, spec.solver);
                row.rate = res.metrics.rate;
                row.feasible = res.metrics.feasible && res.converged;
                row.iters = res.outer_iterations;
                row.violation = res.trace.rows.empty() ? 0.0 : res.trace.rows.back().violation;
                row.ms = res.trace.rows.empty() ? 0.0 : res.trace.rows.back().ms;
                result.traces[i] = res.trace;
            } catch (const InfeasibleError&) {
                row.feasible = false; // no feasible point for this draw
            } catch (const std::exception& ex) {
                row.feasible = false;
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "[rcc] solver failure (" << row.scheme << ", sweep=" << row.sweep
                          << ", seed=" << row.seed << "): " << ex.what() << "\n";
            }
            result.rows[i] = row;
            const std::size_t finished = done.fetch_add(1) + 1;
            if (!spec.quiet && (finished % 25 == 0 || finished == items.size())) {
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "[rcc] " << experiment_name(spec.kind) << ": " << finished << "/"
                          << items.size() << " runs done\n";
            }
        }
    };

    int n_threads = spec.threads > 0 ? spec.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(items.size())));
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return result;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string rows_to_csv(const std::vector<ResultRow>& rows) {
    std::string out = "scheme,sweep,seed,rate,feasible,iters,violation,ms\n";
    for (const auto& r : rows) {
        out += r.scheme + "," + format_g12(r.sweep) + "," + std::to_string(r.seed) + "," +
               format_g12(r.rate) + "," + (r.feasible ? "1" : "0") + "," +
               std::to_string(r.iters) + "," + format_g12(r.violation) + "," +
               format_g12(r.ms) + "\n";
    }
    return out;
}

inline nlohmann::json rows_to_json(const std::vector<ResultRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"scheme", r.scheme},
                       {"sweep", r.sweep},
                       {"seed", r.seed},
                       {"rate", r.rate},
                       {"feasible", r.feasible},
                       {"iters", r.iters},
                       {"violation", r.violation},
                       {"ms", r.ms}});
    }
    return arr;
}

inline void emit_results(const std::vector<ResultRow>& rows, const std::string& format,
                         const std::string& path) {
    std::string payload;
    if (format == "csv") {
        payload = rows_to_csv(rows);
    } else if (format == "json") {
        payload = rows_to_json(rows).dump(2);
        payload += "\n";
    } else {
        throw UsageError("unknown output format: " + format);
    }
    if (path == "-" || path.empty()) {
        std::fwrite(payload.data(), 1, payload.size(), stdout);
        return;
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    const std::size_t n = std::fwrite(payload.data(), 1, payload.size(), f);
    std::fclose(f);
    if (n != payload.size()) throw std::runtime_error("short write to output file: " + path);
}

} // namespace rcc
