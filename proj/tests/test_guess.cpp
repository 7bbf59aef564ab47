#include <cmath>

#include "doctest.h"
#include "kiteopt/guess.hpp"

using namespace kiteopt;

namespace {

StagePlan plan_with_return(int L, int n_per_stage, double T_stage) {
    StagePlan plan;
    plan.N = 2 * L + 2;
    plan.K = 3;
    for (int i = 0; i < plan.N; ++i) {
        plan.n_i.push_back(n_per_stage);
        plan.sign_pattern.push_back(i % 2 == 0 ? 1 : -1);
        plan.T_init.push_back(T_stage);
    }
    validate(plan);
    return plan;
}

GuessSpec reference_spec(int L) {
    GuessSpec g;
    g.n_lemniscates = L;
    g.phi0 = 0.0;
    g.theta0 = 1.0;
    g.a_phi = 0.6;
    g.a_theta = 0.25;
    g.reel_out = 2.5;
    g.reel_in = -5.0;
    g.l_start = 250.0;
    g.l_band = 50.0;
    return g;
}

}  // namespace

TEST_CASE("reference guess: tether closure and zero topological violation") {
    KiteParams p;
    const StagePlan plan = plan_with_return(2, 10, 15.0);
    const GuessResult r = generate_guess(reference_spec(2), plan, p);
    const VarLayout L(plan);

    // tether length returns to l_start
    const int last = L.state_index(plan.N - 1, plan.n_i[plan.N - 1]);
    CHECK(std::abs(r.w(last + IL) - 250.0) <= 1e-9);

    // the topological stage-sign inequality holds at every node
    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    const VectorXd c = nlp.constraints(r.w);
    for (int k = 0; k < plan.total_intervals(); ++k) {
        CHECK(c(nlp.n_eq + 3 * k + 0) <= 1e-12);  // airspeed
        CHECK(c(nlp.n_eq + 3 * k + 1) <= 1e-12);  // elevation
        CHECK(c(nlp.n_eq + 3 * k + 2) <= 1e-12);  // topological sign
    }
    // seam equalities hold exactly; continuity residuals are finite
    CHECK(c.allFinite());
    const int seam0 = 7 * plan.total_intervals();
    CHECK(c.segment(seam0, 7 * (plan.N - 1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("guess respects variable bounds and unit quaternion norms") {
    KiteParams p;
    const StagePlan plan = plan_with_return(2, 8, 12.0);
    const GuessResult r = generate_guess(reference_spec(2), plan, p);
    const VarLayout L(plan);

    for (int i = 0; i < plan.N; ++i) {
        for (int j = 0; j <= plan.n_i[i]; ++j) {
            const int s = L.state_index(i, j);
            CHECK(std::abs(r.w(s + IDELTA)) <= p.delta_max + 1e-15);
            CHECK(r.w(s + IL) <= p.l_max + 1e-12);
            CHECK(std::abs(r.w.segment<4>(s + IQ0).norm() - 1.0) <= 1e-12);
        }
        for (int j = 0; j < plan.n_i[i]; ++j) {
            for (int k = 0; k < plan.K; ++k)
                CHECK(std::abs(r.w(L.deltadot_index(i, j, k))) <= p.deltadot_max + 1e-15);
            CHECK(r.w(L.v_winch_index(i, j)) >= p.v_winch_min - 1e-12);
        }
    }
}

TEST_CASE("guess closure in (q, l, delta)") {
    KiteParams p;
    const StagePlan plan = plan_with_return(3, 6, 10.0);
    const GuessResult r = generate_guess(reference_spec(3), plan, p);
    const VarLayout L(plan);
    const int a = L.state_index(0, 0);
    const int b = L.state_index(plan.N - 1, plan.n_i[plan.N - 1]);
    CHECK((r.w.segment<4>(a + IQ0) - r.w.segment<4>(b + IQ0)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(r.w(a + IL) - r.w(b + IL)) <= 1e-9);
    CHECK(std::abs(r.w(a + IDELTA) - r.w(b + IDELTA)) <= 1e-9);
    CHECK(r.w(a + IW) == 0.0);
}

TEST_CASE("single symmetric figure-eight is mirror-symmetric in phi") {
    KiteParams p;
    StagePlan plan;
    plan.N = 2;
    plan.K = 3;
    plan.n_i = {8, 8};
    plan.sign_pattern = {1, -1};
    plan.T_init = {15.0, 15.0};
    validate(plan);

    GuessSpec g = reference_spec(1);
    const GuessResult r = generate_guess(g, plan, p);
    // node j of stage 1 sits at curve parameter s + pi of node j of stage 0,
    // so phi mirrors about phi0
    for (int j = 0; j <= 8; ++j) {
        const double phi_a = r.traj.points[j].phi;
        const double phi_b = r.traj.points[8 + j].phi;
        CHECK(std::abs((phi_a - g.phi0) + (phi_b - g.phi0)) <= 1e-9);
    }
}

TEST_CASE("stage-sign pattern holds strictly at interior nodes") {
    KiteParams p;
    const StagePlan plan = plan_with_return(2, 10, 15.0);
    const GuessResult r = generate_guess(reference_spec(2), plan, p);
    const VarLayout L(plan);
    for (int i = 0; i < plan.N; ++i)
        for (int j = 1; j < plan.n_i[i]; ++j) {
            const Vec4 q = r.w.segment<4>(L.state_index(i, j) + IQ0);
            CHECK(plan.sign_pattern[i] * topo_indicator(q) > 0.0);
        }
}

TEST_CASE("infeasible synthesis is reported with the offending nodes") {
    KiteParams p;
    const StagePlan plan = plan_with_return(1, 6, 10.0);
    GuessSpec g = reference_spec(1);
    g.theta0 = 1.5;  // nearly crosswind: reel-out starves the airspeed
    CHECK_THROWS_WITH_AS(generate_guess(g, plan, p), doctest::Contains("v_a"),
                         std::runtime_error);
}

TEST_CASE("plan/spec stage-count mismatch is rejected") {
    KiteParams p;
    const StagePlan plan = plan_with_return(2, 6, 10.0);  // 6 stages
    GuessSpec g = reference_spec(4);                      // wants 8 or 10
    CHECK_THROWS_AS(generate_guess(g, plan, p), std::invalid_argument);
    g.n_lemniscates = 2;
    CHECK_NOTHROW(generate_guess(g, plan, p));
}
