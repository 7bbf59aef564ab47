#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "kiteopt/config.hpp"
#include "kiteopt/trajectory_io.hpp"

using namespace kiteopt;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "kiteopt_io_test";
    fs::create_directories(dir);
    return dir / name;
}

Trajectory sample_trajectory() {
    KiteParams p;
    OcpState x0;
    x0.q = euler_to_quat(0.1, 1.0, 0.4);
    x0.l = 250.0;
    x0.delta = 0.05;
    const ControlSchedule u = ControlSchedule::constant(0.02, 1.5, 50, true);
    return simulate_quat(x0, u, 0.1, 5.0, p);
}

}  // namespace

TEST_CASE("trajectory round trip is bitwise exact") {
    const KiteParams p;
    const Trajectory a = sample_trajectory();
    const fs::path path = tmp_file("roundtrip.csv");
    write_trajectory(a, p, path.string());

    KiteParams p2;
    p2.E = 0.0;  // overwritten by the header echo
    const Trajectory b = read_trajectory(path.string(), &p2);

    REQUIRE(b.points.size() == a.points.size());
    REQUIRE(b.controls.size() == a.controls.size());
    for (std::size_t k = 0; k < a.points.size(); ++k) {
        const auto& x = a.points[k];
        const auto& y = b.points[k];
        CHECK(x.t == y.t);
        for (int c = 0; c < 4; ++c) CHECK(x.q(c) == y.q(c));
        CHECK(x.l == y.l);
        CHECK(x.delta == y.delta);
        CHECK(x.W == y.W);
        CHECK(x.v_a == y.v_a);
        CHECK(x.F_tether == y.F_tether);
        CHECK(x.power == y.power);
        CHECK(x.phi == y.phi);
        CHECK(x.theta == y.theta);
        CHECK(x.psi == y.psi);
        for (int c = 0; c < 3; ++c) CHECK(x.pos(c) == y.pos(c));
    }
    for (std::size_t k = 0; k < a.controls.size(); ++k) {
        CHECK(a.controls[k].deltadot_s == b.controls[k].deltadot_s);
        CHECK(a.controls[k].v_winch == b.controls[k].v_winch);
    }
    CHECK(b.failed == a.failed);
    CHECK(p2.E == p.E);
    CHECK(p2.theta_min == p.theta_min);

    // round-trip metrics are bitwise equal
    const OcpMetrics ma = compute_metrics(a, p);
    const OcpMetrics mb = compute_metrics(b, p);
    CHECK(ma.mean_power == mb.mean_power);
    CHECK(ma.eta_loyd == mb.eta_loyd);
    CHECK(ma.cycle_time == mb.cycle_time);
}

TEST_CASE("failure marker survives the round trip") {
    Trajectory t = sample_trajectory();
    t.failed = true;
    t.failure_reason = "left the Euler chart theta in (0, pi)";
    t.failure_time = 3.25;
    const fs::path path = tmp_file("failed.csv");
    write_trajectory(t, KiteParams{}, path.string());
    const Trajectory r = read_trajectory(path.string());
    CHECK(r.failed);
    CHECK(r.failure_reason == t.failure_reason);
    CHECK(r.failure_time == t.failure_time);
}

TEST_CASE("empty and headerless files are rejected") {
    const fs::path empty = tmp_file("empty.csv");
    std::ofstream(empty).close();
    CHECK_THROWS_AS(read_trajectory(empty.string()), std::runtime_error);

    const fs::path headerless = tmp_file("headerless.csv");
    std::ofstream(headerless) << "0,1,0,0,0,250,0,0,0,0,40,1,0,0,1,0,100,0,-200\n";
    CHECK_THROWS_WITH_AS(read_trajectory(headerless.string()),
                         doctest::Contains("format-version"), std::runtime_error);
}

TEST_CASE("version mismatch is rejected") {
    const fs::path path = tmp_file("badversion.csv");
    std::ofstream(path) << "# kiteopt-trajectory 999\n0,1,0,0,0,250,0,0,0,0,40,1,0,0,1,0,1,0,0\n";
    CHECK_THROWS_WITH_AS(read_trajectory(path.string()), doctest::Contains("version"),
                         std::runtime_error);
}

TEST_CASE("non-monotone times are rejected with the line number") {
    const KiteParams p;
    Trajectory t = sample_trajectory();
    t.points[5].t = t.points[3].t;  // duplicate time
    const fs::path path = tmp_file("nonmono.csv");
    write_trajectory(t, p, path.string());
    CHECK_THROWS_WITH_AS(read_trajectory(path.string()), doctest::Contains(":10:"),
                         std::runtime_error);
}

TEST_CASE("wrong column count and malformed numbers carry line numbers") {
    const fs::path path = tmp_file("badcols.csv");
    std::ofstream(path) << "# kiteopt-trajectory 1\n1,2,3\n";
    CHECK_THROWS_WITH_AS(read_trajectory(path.string()), doctest::Contains(":2:"),
                         std::runtime_error);

    const fs::path path2 = tmp_file("badnum.csv");
    std::ofstream(path2) << "# kiteopt-trajectory 1\n"
                         << "zero,1,0,0,0,250,0,0,0,0,40,1,0,0,1,0,1,0,0\n";
    CHECK_THROWS_WITH_AS(read_trajectory(path2.string()), doctest::Contains("malformed"),
                         std::runtime_error);
}

TEST_CASE("config: defaults, overrides, and field diagnostics") {
    using nlohmann::json;

    const RunConfig d = parse_config(json::object());
    CHECK(d.params.E == 5.0);
    CHECK(d.solver.kkt_tol == 1e-6);
    CHECK(d.output_dir == "out");

    const json j = {{"params", {{"v_w", 12.5}, {"E", 4.0}}},
                    {"plan",
                     {{"N", 2},
                      {"K", 3},
                      {"n_i", {8, 8}},
                      {"sign_pattern", {1, -1}},
                      {"T_init", {15.0, 15.0}}}},
                    {"weights", {{"eps_delta", 5.0}}},
                    {"guess", {{"n_lemniscates", 1}, {"center", {0.0, 1.1}}, {"l_start", 200.0}}},
                    {"solver", {{"max_outer", 25}, {"verbosity", 1}}},
                    {"seed", 42},
                    {"output_dir", "/tmp/kite_out"}};
    const RunConfig c = parse_config(j);
    CHECK(c.params.v_w == 12.5);
    CHECK(c.params.E == 4.0);
    CHECK(c.params.g_k == 0.1);  // untouched default
    CHECK(c.plan.N == 2);
    CHECK(c.weights.eps_delta == 5.0);
    CHECK(c.weights.eps_v == 0.01);
    CHECK(c.guess.theta0 == 1.1);
    CHECK(c.guess.l_start == 200.0);
    CHECK(c.solver.max_outer == 25);
    CHECK(c.seed == 42);
    CHECK(c.output_dir == "/tmp/kite_out");

    // unknown field names and type mismatches name the offending field
    CHECK_THROWS_WITH_AS(parse_config(json{{"params", {{"windspeed", 10}}}}),
                         doctest::Contains("params.windspeed"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config(json{{"solver", {{"max_outer", "many"}}}}),
                         doctest::Contains("solver.max_outer"), std::invalid_argument);
    // invariant violations surface through the sub-config validation
    CHECK_THROWS_AS(parse_config(json{{"params", {{"E", -1.0}}}}), std::invalid_argument);
}

TEST_CASE("config echo reparses to the same values") {
    using nlohmann::json;
    RunConfig c;
    c.params.v_w = 11.0;
    c.guess.n_lemniscates = 2;
    c.seed = 7;
    const RunConfig r = parse_config(config_echo(c));
    CHECK(r.params.v_w == 11.0);
    CHECK(r.guess.n_lemniscates == 2);
    CHECK(r.seed == 7);
    CHECK(r.solver.kkt_tol == c.solver.kkt_tol);
}
