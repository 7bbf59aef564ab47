#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "kiteopt/transcription.hpp"

using namespace kiteopt;

namespace {

StagePlan toy_plan() {
    StagePlan plan;
    plan.N = 2;
    plan.n_i = {5, 5};
    plan.K = 3;
    plan.sign_pattern = {1, -1};
    plan.T_init = {10.0, 10.0};
    validate(plan);
    return plan;
}

/// A physically plausible random variable vector: near-unit quaternions in the
/// upwind hemisphere, moderate tether lengths and controls.
VectorXd random_point(const StagePlan& plan, const KiteParams& p, std::mt19937& rng) {
    const VarLayout L(plan);
    std::uniform_real_distribution<double> uphi(-0.5, 0.5), uth(0.5, 1.3), upsi(-0.8, 0.8);
    std::uniform_real_distribution<double> ul(100.0, 250.0), uw(-1.0e4, 1.0e4);
    std::uniform_real_distribution<double> ud(-0.3, 0.3), uv(-2.0, 2.0), uT(8.0, 15.0);
    std::normal_distribution<double> n(0.0, 0.01);

    VectorXd w(L.n_vars());
    for (int i = 0; i < plan.N; ++i) {
        w(L.duration_index(i)) = uT(rng);
        for (int j = 0; j <= plan.n_i[i]; ++j) {
            const int s = L.state_index(i, j);
            Vec4 q = euler_to_quat(uphi(rng), uth(rng), upsi(rng));
            for (int c = 0; c < 4; ++c) q(c) += n(rng);  // off the unit sphere
            w(s + IW) = uw(rng);
            w(s + IDELTA) = ud(rng);
            w(s + IL) = ul(rng);
            w.segment<4>(s + IQ0) = q;
        }
        for (int j = 0; j < plan.n_i[i]; ++j) {
            for (int k = 0; k < plan.K; ++k) w(L.deltadot_index(i, j, k)) = ud(rng);
            w(L.v_winch_index(i, j)) = uv(rng);
        }
    }
    return w;
}

}  // namespace

TEST_CASE("variable counts: flat layout and seam-identified convention") {
    CHECK(VarLayout(toy_plan()).n_vars() == 126);

    // full-scale grid: 12 stages, 250 intervals in total, 3 substeps each
    StagePlan big;
    big.N = 12;
    big.K = 3;
    big.n_i = {21, 21, 21, 21, 21, 21, 21, 21, 21, 21, 20, 20};
    CHECK(std::accumulate(big.n_i.begin(), big.n_i.end(), 0) == 250);
    for (int i = 0; i < big.N; ++i) {
        big.sign_pattern.push_back(i % 2 == 0 ? 1 : -1);
        big.T_init.push_back(10.0);
    }
    validate(big);
    CHECK(paper_variable_count(big) == 2762);
}

TEST_CASE("layout indices tile the vector exactly once") {
    const StagePlan plan = toy_plan();
    const VarLayout L(plan);
    std::vector<int> hit(L.n_vars(), 0);
    for (int i = 0; i < plan.N; ++i) {
        for (int j = 0; j <= plan.n_i[i]; ++j)
            for (int c = 0; c < kStateDim; ++c) ++hit[L.state_index(i, j) + c];
        for (int j = 0; j < plan.n_i[i]; ++j) {
            for (int k = 0; k < plan.K; ++k) ++hit[L.deltadot_index(i, j, k)];
            ++hit[L.v_winch_index(i, j)];
        }
        ++hit[L.duration_index(i)];
    }
    for (int v : hit) CHECK(v == 1);
}

TEST_CASE("shoot_cell reproduces the plain RK4 recurrence") {
    KiteParams p;
    OcpState s0;
    s0.q = euler_to_quat(0.1, std::atan(p.E), -0.2);
    s0.l = 150.0;
    s0.delta = 0.1;
    const std::vector<double> dd = {0.2, -0.1, 0.05};
    const double vw = -1.0, T = 9.0;
    const int n_i = 3;  // tau = 1.0

    const CellResult cell = shoot_cell(s0.vec(), dd, vw, T, n_i, p, false);
    State7 x = s0.vec();
    for (double d : dd) x = rk4_step_quat(x, Controls{d, vw}, T / (3 * n_i), p, true);
    CHECK((cell.x - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shoot_cell at equilibrium with zero controls is a fixed point") {
    KiteParams p;
    OcpState s0;
    s0.q = euler_to_quat(0.0, std::atan(p.E), 0.0);
    s0.l = 200.0;
    const std::vector<double> dd = {0.0, 0.0, 0.0};
    const CellResult cell = shoot_cell(s0.vec(), dd, 0.0, 12.0, 4, p, true);
    CHECK((cell.x - s0.vec()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rollout variables give vanishing continuity and seam residuals") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    const int cells = plan.total_intervals();

    OcpState s0;
    s0.q = euler_to_quat(0.0, 0.9, 0.3);
    s0.l = 200.0;
    s0.delta = 0.05;
    std::vector<std::vector<double>> dd(cells, std::vector<double>(plan.K, 0.0));
    std::vector<double> vw(cells, 0.0);
    for (int c = 0; c < cells; ++c) {
        vw[c] = (c % 2 == 0) ? 0.5 : -0.5;
        for (int k = 0; k < plan.K; ++k) dd[c][k] = 0.05 * std::sin(0.7 * (c * plan.K + k));
    }
    const VectorXd w = rollout_variables(plan, p, s0.vec(), dd, vw, {10.0, 10.0});

    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    const VectorXd c = nlp.constraints(w);
    // first 7 * cells rows: interval continuity; next 7 * (N-1): stage seams
    CHECK(c.head(7 * cells + 7 * (plan.N - 1)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("constraint Jacobian matches central finite differences") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    std::mt19937 rng(17);

    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd w = random_point(plan, p, rng);
        const SparseMat J = nlp.jacobian(w);
        const Eigen::MatrixXd Jd = Eigen::MatrixXd(J);

        Eigen::MatrixXd Jfd(nlp.n_eq + nlp.n_ineq, nlp.n_vars);
        for (int c = 0; c < nlp.n_vars; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(w(c)));
            VectorXd wp = w, wm = w;
            wp(c) += h;
            wm(c) -= h;
            Jfd.col(c) = (nlp.constraints(wp) - nlp.constraints(wm)) / (2.0 * h);
        }
        const double denom = std::max(1e-8 / 1e-6, Jd.cwiseAbs().maxCoeff());
        CHECK((Jd - Jfd).cwiseAbs().maxCoeff() / denom <= 1e-6);
    }
}

TEST_CASE("objective gradient matches central finite differences") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    ObjectiveWeights w8;
    const NlpProblem nlp = build_nlp(plan, p, w8);
    std::mt19937 rng(23);

    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd w = random_point(plan, p, rng);
        const VectorXd g = nlp.objective_grad(w);
        for (int c = 0; c < nlp.n_vars; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(w(c)));
            VectorXd wp = w, wm = w;
            wp(c) += h;
            wm(c) -= h;
            const double gfd = (nlp.objective(wp) - nlp.objective(wm)) / (2.0 * h);
            const double scale = std::max({1e-2, std::abs(g(c)), std::abs(gfd)});
            CHECK(std::abs(g(c) - gfd) / scale <= 1e-6);
        }
    }
}

TEST_CASE("jacobian nonzeros stay inside the declared sparsity pattern") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    std::mt19937 rng(31);
    const VectorXd w = random_point(plan, p, rng);

    std::set<std::pair<int, int>> pattern(nlp.sparsity.begin(), nlp.sparsity.end());
    const SparseMat J = nlp.jacobian(w);
    for (int k = 0; k < J.outerSize(); ++k)
        for (SparseMat::InnerIterator it(J, k); it; ++it)
            if (it.value() != 0.0)
                CHECK(pattern.count({static_cast<int>(it.row()), static_cast<int>(it.col())}) == 1);
}

TEST_CASE("dimensions and bounds of the assembled problem") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    const VarLayout L(plan);

    CHECK(nlp.n_vars == 126);
    CHECK(nlp.n_eq == 7 * 10 + 7 * 1 + 7 + 1);
    CHECK(nlp.n_ineq == 3 * 10);

    CHECK(nlp.ub(L.state_index(0, 2) + IDELTA) == doctest::Approx(p.delta_max));
    CHECK(nlp.lb(L.deltadot_index(1, 0, 2)) == doctest::Approx(-p.deltadot_max));
    CHECK(nlp.lb(L.v_winch_index(0, 4)) == doctest::Approx(p.v_winch_min));
    CHECK(std::isinf(nlp.ub(L.v_winch_index(0, 4))));
    CHECK(nlp.ub(L.state_index(1, 5) + IL) == doctest::Approx(p.l_max));
    CHECK(nlp.lb(L.duration_index(0)) == doctest::Approx(plan.T_min));
    CHECK(nlp.ub(L.duration_index(1)) == doctest::Approx(plan.T_max));
    CHECK(std::isinf(nlp.lb(L.state_index(0, 0) + IW)));
}

TEST_CASE("topological inequality sign follows the stage pattern") {
    KiteParams p;
    const StagePlan plan = toy_plan();
    const NlpProblem nlp = build_nlp(plan, p, ObjectiveWeights{});
    const VarLayout L(plan);
    std::mt19937 rng(41);
    VectorXd w = random_point(plan, p, rng);

    // place node (0,0) at positive indicator, node (1,0) at the mirrored state
    const Vec4 qp = euler_to_quat(0.2, 1.0, 0.6);
    const Vec4 qm = euler_to_quat(0.2, 1.0, -0.6);
    w.segment<4>(L.state_index(0, 0) + IQ0) = qp;
    w.segment<4>(L.state_index(1, 0) + IQ0) = qm;

    const VectorXd c = nlp.constraints(w);
    const int ineq0 = nlp.n_eq;
    CHECK(c(ineq0 + 2) < 0.0);                         // sign +1 stage, positive indicator: ok
    CHECK(c(ineq0 + 3 * plan.n_i[0] + 2) < 0.0);       // sign -1 stage, negative indicator: ok
    CHECK(c(ineq0 + 2) == doctest::Approx(-topo_indicator(qp)));
    CHECK(c(ineq0 + 3 * plan.n_i[0] + 2) == doctest::Approx(topo_indicator(qm)));
}
