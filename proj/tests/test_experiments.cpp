#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include "oracle_utils.hpp"
#include "rcc/experiments.hpp"

using namespace rcc;

namespace {

ExperimentSpec tiny_spec() {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::elements;
    spec.base = oracle::tiny_config(1, 3, 3, 3, 2);
    spec.base.sigma2 = spec.base.sigma0_2 = spec.base.sigma1_2 = spec.base.sigma2_2 = 1e-7;
    spec.base.eta = 4.0;
    spec.sweep = {4};
    spec.schemes = {Scheme::no_ris, Scheme::double_active};
    spec.seeds = {1, 2};
    spec.power_model.Q_total = 6.0;
    spec.power_model.gamma = 0.7;
    spec.quiet = true;
    spec.threads = 2;
    return spec;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("emit_results formats") {
    std::vector<ResultRow> rows;
    const std::string dir = "emit_test_out";
    emit_results(rows, "csv", dir + ".empty.csv");
    CHECK(read_file(dir + ".empty.csv") == "scheme,sweep,seed,rate,feasible,iters,violation,ms\n");

    ResultRow r;
    r.scheme = "no_ris";
    r.sweep = 4;
    r.seed = 9;
    r.rate = 1.234567890123456;
    r.feasible = true;
    r.iters = 3;
    r.violation = 1e-7;
    r.ms = 12.5;
    rows.push_back(r);
    emit_results(rows, "csv", dir + ".one.csv");
    const std::string body = read_file(dir + ".one.csv");
    CHECK(body == "scheme,sweep,seed,rate,feasible,iters,violation,ms\n"
                  "no_ris,4,9,1.23456789012,1,3,1e-07,12.5\n");

    emit_results(rows, "csv", dir + ".two.csv");
    CHECK(read_file(dir + ".one.csv") == read_file(dir + ".two.csv"));

    emit_results(rows, "json", dir + ".one.json");
    const auto parsed = nlohmann::json::parse(read_file(dir + ".one.json"));
    REQUIRE(parsed.is_array());
    CHECK(parsed[0].at("scheme") == "no_ris");
    CHECK(parsed[0].at("feasible").get<bool>());
    CHECK(parsed[0].at("seed").get<std::uint64_t>() == 9);

    CHECK_THROWS_AS(emit_results(rows, "yaml", "x"), UsageError);
}

TEST_CASE("experiment rows are deterministic and isolated per sweep value") {
    ExperimentSpec spec = tiny_spec();
    const auto a = run_experiment(spec);
    const auto b = run_experiment(spec);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].scheme == b.rows[i].scheme);
        CHECK(a.rows[i].sweep == b.rows[i].sweep);
        CHECK(a.rows[i].seed == b.rows[i].seed);
        CHECK(a.rows[i].rate == b.rows[i].rate);
        CHECK(a.rows[i].feasible == b.rows[i].feasible);
        CHECK(a.rows[i].iters == b.rows[i].iters);
        CHECK(a.rows[i].violation == b.rows[i].violation);
    }

    ExperimentSpec wider = spec;
    wider.sweep = {4, 6};
    const auto c = run_experiment(wider);
    // Rows of the shared sweep value are unchanged by adding another value.
    std::size_t matched = 0;
    for (const auto& row : c.rows) {
        if (row.sweep != 4) continue;
        for (const auto& ref : a.rows) {
            if (ref.scheme == row.scheme && ref.seed == row.seed) {
                CHECK(row.rate == ref.rate);
                CHECK(row.feasible == ref.feasible);
                ++matched;
            }
        }
    }
    CHECK(matched == a.rows.size());
}

TEST_CASE("experiment kinds parse and reject unknowns") {
    CHECK(parse_experiment_kind("convergence") == ExperimentKind::convergence);
    CHECK(parse_experiment_kind("eta") == ExperimentKind::eta);
    CHECK_THROWS_AS(parse_experiment_kind("bogus"), UsageError);
}

TEST_CASE("eta experiment maps the sweep to the linear requirement") {
    ExperimentSpec spec = tiny_spec();
    spec.kind = ExperimentKind::eta;
    spec.sweep = {3.0};
    spec.schemes = {Scheme::no_ris};
    spec.seeds = {1};
    const auto res = run_experiment(spec);
    REQUIRE(res.rows.size() == 1);
    // Row exists regardless of feasibility and never aborts the sweep.
    CHECK(res.rows[0].scheme == "no_ris");
}

#ifdef RCC_BENCH_PATH
TEST_CASE("CLI exit codes and output") {
    const std::string bench = RCC_BENCH_PATH;
    CHECK(std::system((bench + " --experiment bogus --quiet >/dev/null 2>&1").c_str()) !=
          0);
    const int code = WEXITSTATUS(
        std::system((bench + " --experiment bogus --quiet >/dev/null 2>&1").c_str()));
    CHECK(code == 2);

    const int fmt = WEXITSTATUS(std::system(
        (bench + " --experiment eta --format yaml --quiet >/dev/null 2>&1").c_str()));
    CHECK(fmt == 2);

    // A tiny but real run through the CLI with a config file.
    nlohmann::json cfg;
    cfg["scene"] = oracle::tiny_config(1, 3, 3, 3, 2);
    cfg["scene"]["sigma2"] = 1e-7;
    cfg["scene"]["sigma0_2"] = 1e-7;
    cfg["scene"]["sigma1_2"] = 1e-7;
    cfg["scene"]["sigma2_2"] = 1e-7;
    cfg["scheme"] = {{"Q_total", 6.0}, {"gamma", 0.7}};
    {
        std::ofstream out("cli_test_cfg.json");
        out << cfg.dump(2);
    }
    const int ok = WEXITSTATUS(std::system(
        (bench +
         " --config cli_test_cfg.json --experiment elements --schemes no_ris --sweep 4 "
         "--seed-list 1 --out cli_test_out.csv --quiet >/dev/null 2>&1")
            .c_str()));
    CHECK(ok == 0);
    const std::string body = read_file("cli_test_out.csv");
    CHECK(body.rfind("scheme,sweep,seed,rate,feasible,iters,violation,ms\n", 0) == 0);
    CHECK(body.find("no_ris,4,1,") != std::string::npos);
}
#endif
