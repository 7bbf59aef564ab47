#ifndef KITEOPT_TRANSCRIPTION_HPP
#define KITEOPT_TRANSCRIPTION_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kiteopt/dynamics.hpp"
#include "kiteopt/integrator.hpp"
#include "kiteopt/ocp.hpp"
#include "kiteopt/params.hpp"

namespace kiteopt {

using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>;

/// Flat-vector layout of the multiple-shooting NLP. Per stage i the block is
///   [s_{i,0}, u_{i,0}, ..., s_{i,n_i-1}, u_{i,n_i-1}, s_{i,n_i}, T_i]
/// with 7 state components per node and K+1 controls per interval
/// (deltadot_{1..K}, v_winch).
class VarLayout {
public:
    explicit VarLayout(const StagePlan& plan) : plan_(plan) {
        validate(plan);
        stage_offset_.resize(plan.N + 1);
        stage_offset_[0] = 0;
        for (int i = 0; i < plan.N; ++i)
            stage_offset_[i + 1] = stage_offset_[i] + stage_size(i);
    }

    const StagePlan& plan() const { return plan_; }
    int n_vars() const { return stage_offset_.back(); }
    int node_stride() const { return kStateDim + plan_.K + 1; }
    int stage_size(int i) const { return plan_.n_i[i] * node_stride() + kStateDim + 1; }

    /// Offset of state node s_{i,j}, j in [0, n_i].
    int state_index(int i, int j) const { return stage_offset_[i] + j * node_stride(); }
    /// Offset of the control block u_{i,j}, j in [0, n_i).
    int control_index(int i, int j) const { return state_index(i, j) + kStateDim; }
    int deltadot_index(int i, int j, int k) const { return control_index(i, j) + k; }
    int v_winch_index(int i, int j) const { return control_index(i, j) + plan_.K; }
    int duration_index(int i) const { return stage_offset_[i + 1] - 1; }

private:
    StagePlan plan_;
    std::vector<int> stage_offset_;
};

/// Variable count under the paper's counting convention, which identifies the
/// seam node s_{i,n_i} with s_{i+1,0} and the terminal node with the periodic
/// initial node: sum_i [n_i (7 + K + 1) + 1].
inline int paper_variable_count(const StagePlan& plan) {
    int count = 0;
    for (int i = 0; i < plan.N; ++i) count += plan.n_i[i] * (kStateDim + plan.K + 1) + 1;
    return count;
}

/// Result of integrating one multiple-shooting cell with its sensitivities.
struct CellResult {
    State7 x;                                      ///< final state
    Eigen::Matrix<double, 7, 7> dxds;              ///< d x / d s
    Eigen::Matrix<double, 7, Eigen::Dynamic> dxdu; ///< d x / d [deltadot_1..K, v_winch]
    State7 dxdT;                                   ///< d x / d T_i
};

/// Integrate one cell: K RK4 substeps of length tau = T_i / (K n_i), substep k
/// driven by deltadot_k and the shared winch speed. Stabilization is active.
/// With want_sensitivities the exact forward derivatives are propagated
/// through the RK4 recurrence, including the step-size dependence on T_i.
inline CellResult shoot_cell(const State7& s, std::span<const double> deltadot, double v_winch,
                             double T_i, int n_i, const KiteParams& p,
                             bool want_sensitivities = true) {
    const int K = static_cast<int>(deltadot.size());
    if (K < 1 || n_i < 1 || T_i <= 0.0)
        throw std::invalid_argument("shoot_cell: invalid cell dimensions");
    const double tau = T_i / (K * n_i);

    CellResult r;
    r.x = s;
    const int ndir = kStateDim + K + 2;  // s, deltadot_1..K, v_winch, tau
    using SensMat = Eigen::Matrix<double, 7, Eigen::Dynamic>;
    SensMat P;
    Eigen::RowVectorXd dtau_row;
    if (want_sensitivities) {
        P = SensMat::Zero(kStateDim, ndir);
        P.leftCols<7>().setIdentity();
        dtau_row = Eigen::RowVectorXd::Zero(ndir);
        dtau_row(ndir - 1) = 1.0;
    }

    for (int k = 0; k < K; ++k) {
        const Controls u{deltadot[k], v_winch};
        auto f = [&](const State7& y) { return quat_rhs(y, u, p, true); };

        const State7 x1 = r.x;
        const State7 k1 = f(x1);
        const State7 x2 = x1 + 0.5 * tau * k1;
        const State7 k2 = f(x2);
        const State7 x3 = x1 + 0.5 * tau * k2;
        const State7 k3 = f(x3);
        const State7 x4 = x1 + tau * k3;
        const State7 k4 = f(x4);
        const State7 ksum = k1 + 2.0 * k2 + 2.0 * k3 + k4;
        const State7 xn = x1 + tau / 6.0 * ksum;
        if (!xn.allFinite())
            throw std::domain_error("shoot_cell: non-finite state in RK4 substep");

        if (want_sensitivities) {
            // direction derivatives of the controls: substep k's deltadot and
            // the shared v_winch each occupy one seed column
            Eigen::Matrix<double, 2, Eigen::Dynamic> Udir =
                Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, ndir);
            Udir(0, kStateDim + k) = 1.0;
            Udir(1, kStateDim + K) = 1.0;

            const RhsJacobian J1 = quat_rhs_jacobian(x1, u, p, true);
            const RhsJacobian J2 = quat_rhs_jacobian(x2, u, p, true);
            const RhsJacobian J3 = quat_rhs_jacobian(x3, u, p, true);
            const RhsJacobian J4 = quat_rhs_jacobian(x4, u, p, true);

            const SensMat K1 = J1.dfdx * P + J1.dfdu * Udir;
            const SensMat P2 = P + 0.5 * tau * K1 + 0.5 * k1 * dtau_row;
            const SensMat K2 = J2.dfdx * P2 + J2.dfdu * Udir;
            const SensMat P3 = P + 0.5 * tau * K2 + 0.5 * k2 * dtau_row;
            const SensMat K3 = J3.dfdx * P3 + J3.dfdu * Udir;
            const SensMat P4 = P + tau * K3 + k3 * dtau_row;
            const SensMat K4 = J4.dfdx * P4 + J4.dfdu * Udir;
            P += tau / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4) + (1.0 / 6.0) * ksum * dtau_row;
        }
        r.x = xn;
    }

    if (want_sensitivities) {
        r.dxds = P.leftCols<7>();
        r.dxdu = P.middleCols(kStateDim, K + 1);
        r.dxdT = P.col(ndir - 1) / (K * n_i);  // chain rule through tau = T_i/(K n_i)
    }
    return r;
}

/// Flat NLP produced by the multiple-shooting transcription. Constraints are
/// stacked equalities first, then inequalities (g <= 0). The evaluators are
/// pure functions of the variable vector and re-entrant.
struct NlpProblem {
    int n_vars = 0;
    int n_eq = 0;
    int n_ineq = 0;
    VectorXd lb, ub;
    std::function<double(const VectorXd&)> objective;
    std::function<VectorXd(const VectorXd&)> objective_grad;
    /// Optional analytic objective Hessian (symmetric, may be indefinite).
    /// Solvers fall back to a first-order model when absent.
    std::function<SparseMat(const VectorXd&)> objective_hessian;
    std::function<VectorXd(const VectorXd&)> constraints;
    std::function<SparseMat(const VectorXd&)> jacobian;
    /// Optional weighted constraint curvature sum_r y_r nabla^2 c_r(w); rows
    /// of y follow the constraint order. Enables exact-Hessian inner steps in
    /// solvers; they fall back to a quasi-Newton estimate when absent.
    std::function<Eigen::MatrixXd(const VectorXd&, const VectorXd&)> constraint_hessian;
    std::vector<std::pair<int, int>> sparsity;  ///< superset of Jacobian nonzeros
};

namespace detail {

inline void check_dims(const StagePlan& plan, const KiteParams& p) {
    validate(plan);
    validate(p);
}

}  // namespace detail

/// Assemble the discretized pumping-cycle OCP.
///
/// Equality rows (in order):
///   - interval continuity x_{i,j}(s_{i,j}, u_{i,j}, T_i) - s_{i,j+1}, 7 rows
///     per cell, cells in (i, j) lexicographic order;
///   - stage seams s_{i,n_i} - s_{i+1,0}, 7 rows each, i = 0..N-2;
///   - boundary residuals [q(T)-q(0), l(T)-l(0), delta(T)-delta(0), W(0)];
///   - unit-norm gauge |q_{0,0}|^2 - 1 at the initial node.
/// Inequality rows (g <= 0), 3 per node (i, j), j = 0..n_i-1:
///   - v_a_min - v_a(q_{i,j}, v_winch_{i,j});
///   - elevation cone residual;
///   - -sign_i * topo_indicator(q_{i,j}).
/// Steering deflection/rate, winch speed, tether length and the stage
/// durations are enforced through variable bounds.
inline NlpProblem build_nlp(const StagePlan& plan, const KiteParams& p,
                            const ObjectiveWeights& w8) {
    detail::check_dims(plan, p);
    const VarLayout L(plan);
    const int n_cells = plan.total_intervals();
    const double inf = std::numeric_limits<double>::infinity();

    NlpProblem nlp;
    nlp.n_vars = L.n_vars();
    nlp.n_eq = 7 * n_cells + 7 * (plan.N - 1) + 7 + 1;
    nlp.n_ineq = 3 * n_cells;

    // ---- variable bounds ----
    nlp.lb = VectorXd::Constant(nlp.n_vars, -inf);
    nlp.ub = VectorXd::Constant(nlp.n_vars, inf);
    for (int i = 0; i < plan.N; ++i) {
        for (int j = 0; j <= plan.n_i[i]; ++j) {
            const int s = L.state_index(i, j);
            nlp.lb(s + IDELTA) = -p.delta_max;
            nlp.ub(s + IDELTA) = p.delta_max;
            nlp.lb(s + IL) = 1.0;
            nlp.ub(s + IL) = p.l_max;
            for (int c = 0; c < 4; ++c) {
                nlp.lb(s + IQ0 + c) = -1.5;
                nlp.ub(s + IQ0 + c) = 1.5;
            }
        }
        for (int j = 0; j < plan.n_i[i]; ++j) {
            for (int k = 0; k < plan.K; ++k) {
                nlp.lb(L.deltadot_index(i, j, k)) = -p.deltadot_max;
                nlp.ub(L.deltadot_index(i, j, k)) = p.deltadot_max;
            }
            nlp.lb(L.v_winch_index(i, j)) = p.v_winch_min;
        }
        nlp.lb(L.duration_index(i)) = plan.T_min;
        nlp.ub(L.duration_index(i)) = plan.T_max;
    }

    const double power_scale = resolve_power_scale(w8, p);
    const int terminal = L.state_index(plan.N - 1, plan.n_i[plan.N - 1]);
    const int initial = L.state_index(0, 0);

    // ---- objective ----
    nlp.objective = [L, plan, w8, power_scale, terminal](const VectorXd& w) {
        double T_total = 0.0;
        for (int i = 0; i < plan.N; ++i) T_total += w(L.duration_index(i));
        double f = -power_scale * w(terminal + IW) / T_total;
        for (int i = 0; i < plan.N; ++i) {
            const double T_i = w(L.duration_index(i));
            const double tau_i = T_i / (plan.n_i[i] * plan.K);
            for (int j = 0; j < plan.n_i[i]; ++j)
                for (int k = 0; k < plan.K; ++k) {
                    const double dd = w(L.deltadot_index(i, j, k));
                    f += tau_i * w8.eps_delta * dd * dd;
                }
        }
        // winch acceleration penalty, periodic wrap in time
        for (int i = 0; i < plan.N; ++i) {
            const double dt = w(L.duration_index(i)) / plan.n_i[i];
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const int i2 = (j + 1 < plan.n_i[i]) ? i : (i + 1) % plan.N;
                const int j2 = (j + 1 < plan.n_i[i]) ? j + 1 : 0;
                const double dv = w(L.v_winch_index(i, j)) - w(L.v_winch_index(i2, j2));
                f += dt * w8.eps_v * dv * dv;
            }
        }
        return f;
    };

    nlp.objective_grad = [L, plan, w8, power_scale, terminal](const VectorXd& w) {
        VectorXd g = VectorXd::Zero(w.size());
        double T_total = 0.0;
        for (int i = 0; i < plan.N; ++i) T_total += w(L.duration_index(i));
        const double W_T = w(terminal + IW);
        g(terminal + IW) = -power_scale / T_total;
        for (int i = 0; i < plan.N; ++i)
            g(L.duration_index(i)) = power_scale * W_T / (T_total * T_total);
        for (int i = 0; i < plan.N; ++i) {
            const double T_i = w(L.duration_index(i));
            const double tau_i = T_i / (plan.n_i[i] * plan.K);
            double sq = 0.0;
            for (int j = 0; j < plan.n_i[i]; ++j)
                for (int k = 0; k < plan.K; ++k) {
                    const double dd = w(L.deltadot_index(i, j, k));
                    sq += dd * dd;
                    g(L.deltadot_index(i, j, k)) += 2.0 * tau_i * w8.eps_delta * dd;
                }
            g(L.duration_index(i)) += w8.eps_delta * sq / (plan.n_i[i] * plan.K);
        }
        for (int i = 0; i < plan.N; ++i) {
            const double dt = w(L.duration_index(i)) / plan.n_i[i];
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const int i2 = (j + 1 < plan.n_i[i]) ? i : (i + 1) % plan.N;
                const int j2 = (j + 1 < plan.n_i[i]) ? j + 1 : 0;
                const double dv = w(L.v_winch_index(i, j)) - w(L.v_winch_index(i2, j2));
                g(L.v_winch_index(i, j)) += 2.0 * dt * w8.eps_v * dv;
                g(L.v_winch_index(i2, j2)) -= 2.0 * dt * w8.eps_v * dv;
                g(L.duration_index(i)) += w8.eps_v * dv * dv / plan.n_i[i];
            }
        }
        return g;
    };

    const int n_vars = nlp.n_vars;
    nlp.objective_hessian = [L, plan, w8, power_scale, terminal, n_vars](const VectorXd& w) {
        std::vector<Eigen::Triplet<double>> t;
        double T_total = 0.0;
        for (int i = 0; i < plan.N; ++i) T_total += w(L.duration_index(i));
        const double W_T = w(terminal + IW);
        const double T2 = T_total * T_total;
        for (int i = 0; i < plan.N; ++i) {
            const int ti = L.duration_index(i);
            t.emplace_back(terminal + IW, ti, power_scale / T2);
            t.emplace_back(ti, terminal + IW, power_scale / T2);
            for (int j = 0; j < plan.N; ++j)
                t.emplace_back(ti, L.duration_index(j), -2.0 * power_scale * W_T / (T2 * T_total));
        }
        for (int i = 0; i < plan.N; ++i) {
            const int ti = L.duration_index(i);
            const int sub = plan.n_i[i] * plan.K;
            const double tau_i = w(ti) / sub;
            for (int j = 0; j < plan.n_i[i]; ++j)
                for (int k = 0; k < plan.K; ++k) {
                    const int di = L.deltadot_index(i, j, k);
                    const double dd = w(di);
                    t.emplace_back(di, di, 2.0 * tau_i * w8.eps_delta);
                    t.emplace_back(di, ti, 2.0 * w8.eps_delta * dd / sub);
                    t.emplace_back(ti, di, 2.0 * w8.eps_delta * dd / sub);
                }
        }
        for (int i = 0; i < plan.N; ++i) {
            const int ti = L.duration_index(i);
            const double dt = w(ti) / plan.n_i[i];
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const int i2 = (j + 1 < plan.n_i[i]) ? i : (i + 1) % plan.N;
                const int j2 = (j + 1 < plan.n_i[i]) ? j + 1 : 0;
                const int a = L.v_winch_index(i, j);
                const int b = L.v_winch_index(i2, j2);
                const double dv = w(a) - w(b);
                t.emplace_back(a, a, 2.0 * dt * w8.eps_v);
                t.emplace_back(b, b, 2.0 * dt * w8.eps_v);
                t.emplace_back(a, b, -2.0 * dt * w8.eps_v);
                t.emplace_back(b, a, -2.0 * dt * w8.eps_v);
                const double cross = 2.0 * w8.eps_v * dv / plan.n_i[i];
                t.emplace_back(a, ti, cross);
                t.emplace_back(ti, a, cross);
                t.emplace_back(b, ti, -cross);
                t.emplace_back(ti, b, -cross);
            }
        }
        SparseMat H(n_vars, n_vars);
        H.setFromTriplets(t.begin(), t.end());
        return H;
    };

    // ---- constraints ----
    const int n_eq = nlp.n_eq;
    nlp.constraints = [L, plan, p, n_eq, terminal, initial](const VectorXd& w) {
        VectorXd c(n_eq + 3 * L.plan().total_intervals());
        int row = 0;
        for (int i = 0; i < plan.N; ++i) {
            const double T_i = w(L.duration_index(i));
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const State7 s = w.segment<7>(L.state_index(i, j));
                std::vector<double> dd(plan.K);
                for (int k = 0; k < plan.K; ++k) dd[k] = w(L.deltadot_index(i, j, k));
                const CellResult cell =
                    shoot_cell(s, dd, w(L.v_winch_index(i, j)), T_i, plan.n_i[i], p, false);
                c.segment<7>(row) = cell.x - w.segment<7>(L.state_index(i, j + 1));
                row += 7;
            }
        }
        for (int i = 0; i + 1 < plan.N; ++i) {
            c.segment<7>(row) = w.segment<7>(L.state_index(i, plan.n_i[i])) -
                                w.segment<7>(L.state_index(i + 1, 0));
            row += 7;
        }
        const State7 xs = w.segment<7>(initial);
        const State7 xe = w.segment<7>(terminal);
        c.segment<4>(row) = xe.segment<4>(IQ0) - xs.segment<4>(IQ0);
        c(row + 4) = xe(IL) - xs(IL);
        c(row + 5) = xe(IDELTA) - xs(IDELTA);
        c(row + 6) = xs(IW);
        row += 7;
        c(row++) = xs.segment<4>(IQ0).squaredNorm() - 1.0;

        for (int i = 0; i < plan.N; ++i) {
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const Vec4 q = w.segment<4>(L.state_index(i, j) + IQ0);
                const double vw = w(L.v_winch_index(i, j));
                c(row++) = p.v_a_min - air_path_speed(q, vw, p);
                c(row++) = elevation_residual(q, p);
                c(row++) = -plan.sign_pattern[i] * topo_indicator(q);
            }
        }
        return c;
    };

    nlp.jacobian = [L, plan, p, n_eq, terminal, initial](const VectorXd& w) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(64) * L.plan().total_intervals());
        int row = 0;
        for (int i = 0; i < plan.N; ++i) {
            const double T_i = w(L.duration_index(i));
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const State7 s = w.segment<7>(L.state_index(i, j));
                std::vector<double> dd(plan.K);
                for (int k = 0; k < plan.K; ++k) dd[k] = w(L.deltadot_index(i, j, k));
                const CellResult cell =
                    shoot_cell(s, dd, w(L.v_winch_index(i, j)), T_i, plan.n_i[i], p, true);
                const int si = L.state_index(i, j);
                const int ui = L.control_index(i, j);
                for (int r = 0; r < 7; ++r) {
                    for (int ccol = 0; ccol < 7; ++ccol)
                        trip.emplace_back(row + r, si + ccol, cell.dxds(r, ccol));
                    for (int cc = 0; cc < plan.K + 1; ++cc)
                        trip.emplace_back(row + r, ui + cc, cell.dxdu(r, cc));
                    trip.emplace_back(row + r, L.duration_index(i), cell.dxdT(r));
                    trip.emplace_back(row + r, L.state_index(i, j + 1) + r, -1.0);
                }
                row += 7;
            }
        }
        for (int i = 0; i + 1 < plan.N; ++i) {
            for (int r = 0; r < 7; ++r) {
                trip.emplace_back(row + r, L.state_index(i, plan.n_i[i]) + r, 1.0);
                trip.emplace_back(row + r, L.state_index(i + 1, 0) + r, -1.0);
            }
            row += 7;
        }
        for (int r = 0; r < 4; ++r) {
            trip.emplace_back(row + r, terminal + IQ0 + r, 1.0);
            trip.emplace_back(row + r, initial + IQ0 + r, -1.0);
        }
        trip.emplace_back(row + 4, terminal + IL, 1.0);
        trip.emplace_back(row + 4, initial + IL, -1.0);
        trip.emplace_back(row + 5, terminal + IDELTA, 1.0);
        trip.emplace_back(row + 5, initial + IDELTA, -1.0);
        trip.emplace_back(row + 6, initial + IW, 1.0);
        row += 7;
        for (int c4 = 0; c4 < 4; ++c4)
            trip.emplace_back(row, initial + IQ0 + c4, 2.0 * w(initial + IQ0 + c4));
        ++row;

        for (int i = 0; i < plan.N; ++i) {
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const int qi = L.state_index(i, j) + IQ0;
                const Vec4 q = w.segment<4>(qi);
                const double tt = std::tan(p.theta_min);
                // v_a row
                const Vec4 dva = p.E * p.v_w * Vec4(2 * q(0), 2 * q(1), -2 * q(2), -2 * q(3));
                for (int c4 = 0; c4 < 4; ++c4) trip.emplace_back(row, qi + c4, -dva(c4));
                trip.emplace_back(row, L.v_winch_index(i, j), p.E);
                ++row;
                // elevation row
                const Vec4 de(2 * q(0) * tt - 2 * q(2), 2 * q(1) * tt + 2 * q(3),
                              -2 * q(2) * tt - 2 * q(0), -2 * q(3) * tt + 2 * q(1));
                for (int c4 = 0; c4 < 4; ++c4) trip.emplace_back(row, qi + c4, de(c4));
                ++row;
                // topological sign row
                const double sg = -plan.sign_pattern[i];
                trip.emplace_back(row, qi + 0, sg * q(3));
                trip.emplace_back(row, qi + 1, -sg * q(2));
                trip.emplace_back(row, qi + 2, -sg * q(1));
                trip.emplace_back(row, qi + 3, sg * q(0));
                ++row;
            }
        }

        SparseMat J(n_eq + 3 * plan.total_intervals(), L.n_vars());
        J.setFromTriplets(trip.begin(), trip.end());
        return J;
    };

    nlp.constraint_hessian = [L, plan, p, n_eq, initial](const VectorXd& w, const VectorXd& y) {
        if (y.size() != n_eq + 3 * plan.total_intervals())
            throw std::invalid_argument("constraint_hessian: weight vector has wrong dimension");
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(w.size(), w.size());
        const int m_in = kStateDim + plan.K + 2;  // cell inputs: state, controls, duration

        // y-weighted continuity rows: Hessian of v -> y_cell . x_cell(v) by
        // central differences of the analytic cell gradient
        int row = 0;
        for (int i = 0; i < plan.N; ++i) {
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const Eigen::Matrix<double, 7, 1> yc = y.segment<7>(row);
                row += 7;
                if (yc.cwiseAbs().maxCoeff() == 0.0) continue;

                std::vector<int> idx(m_in);
                for (int c = 0; c < kStateDim; ++c) idx[c] = L.state_index(i, j) + c;
                for (int k = 0; k < plan.K + 1; ++k)
                    idx[kStateDim + k] = L.control_index(i, j) + k;
                idx[m_in - 1] = L.duration_index(i);

                VectorXd v(m_in);
                for (int c = 0; c < m_in; ++c) v(c) = w(idx[c]);

                const auto cell_grad = [&](const VectorXd& vv) {
                    const State7 s = vv.head<7>();
                    std::vector<double> dd(plan.K);
                    for (int k = 0; k < plan.K; ++k) dd[k] = vv(kStateDim + k);
                    const CellResult cell = shoot_cell(s, dd, vv(kStateDim + plan.K),
                                                       vv(m_in - 1), plan.n_i[i], p, true);
                    VectorXd g(m_in);
                    g.head<7>() = cell.dxds.transpose() * yc;
                    g.segment(kStateDim, plan.K + 1) = cell.dxdu.transpose() * yc;
                    g(m_in - 1) = cell.dxdT.dot(yc);
                    return g;
                };

                Eigen::MatrixXd Hc(m_in, m_in);
                for (int c = 0; c < m_in; ++c) {
                    const double h = 1e-5 * std::max(1.0, std::abs(v(c)));
                    VectorXd vp = v, vm = v;
                    vp(c) += h;
                    vm(c) -= h;
                    Hc.col(c) = (cell_grad(vp) - cell_grad(vm)) / (2.0 * h);
                }
                Hc = 0.5 * (Hc + Hc.transpose()).eval();
                for (int a = 0; a < m_in; ++a)
                    for (int b = 0; b < m_in; ++b) H(idx[a], idx[b]) += Hc(a, b);
            }
        }
        row += 7 * (plan.N - 1) + 7;  // seams and boundary rows are linear

        // unit-norm gauge row: 2 I on the initial quaternion block
        for (int c = 0; c < 4; ++c) H(initial + IQ0 + c, initial + IQ0 + c) += 2.0 * y(row);
        ++row;

        // path inequality rows, all quadratic in the node quaternion
        const double tt = std::tan(p.theta_min);
        for (int i = 0; i < plan.N; ++i) {
            for (int j = 0; j < plan.n_i[i]; ++j) {
                const int qi = L.state_index(i, j) + IQ0;
                const double y_va = y(row), y_el = y(row + 1), y_tp = y(row + 2);
                row += 3;
                // airspeed row: -2 E v_w diag(1, 1, -1, -1)
                const double a = 2.0 * p.E * p.v_w * y_va;
                H(qi + 0, qi + 0) -= a;
                H(qi + 1, qi + 1) -= a;
                H(qi + 2, qi + 2) += a;
                H(qi + 3, qi + 3) += a;
                // elevation row
                H(qi + 0, qi + 0) += 2.0 * tt * y_el;
                H(qi + 1, qi + 1) += 2.0 * tt * y_el;
                H(qi + 2, qi + 2) -= 2.0 * tt * y_el;
                H(qi + 3, qi + 3) -= 2.0 * tt * y_el;
                H(qi + 0, qi + 2) -= 2.0 * y_el;
                H(qi + 2, qi + 0) -= 2.0 * y_el;
                H(qi + 1, qi + 3) += 2.0 * y_el;
                H(qi + 3, qi + 1) += 2.0 * y_el;
                // topological sign row
                const double sg = -plan.sign_pattern[i] * y_tp;
                H(qi + 0, qi + 3) += sg;
                H(qi + 3, qi + 0) += sg;
                H(qi + 1, qi + 2) -= sg;
                H(qi + 2, qi + 1) -= sg;
            }
        }
        return H;
    };

    // structural sparsity from a reference evaluation with nonzero entries
    {
        VectorXd w_ref = VectorXd::Constant(nlp.n_vars, 0.1);
        for (int i = 0; i < plan.N; ++i) {
            w_ref(L.duration_index(i)) = std::max(plan.T_min, 10.0);
            for (int j = 0; j <= plan.n_i[i]; ++j) {
                const int s = L.state_index(i, j);
                w_ref(s + IL) = 0.5 * p.l_max;
                w_ref.segment<4>(s + IQ0) = Vec4(0.4, 0.3, 0.6, 0.2);
            }
        }
        const SparseMat J = nlp.jacobian(w_ref);
        for (int k = 0; k < J.outerSize(); ++k)
            for (SparseMat::InnerIterator it(J, k); it; ++it)
                nlp.sparsity.emplace_back(it.row(), it.col());
    }

    return nlp;
}

/// Pack a model rollout into the NLP variable vector: starting from x0, each
/// cell's terminal state seeds the next node, so the continuity residuals of
/// the result vanish identically. `deltadot[cell][k]` and `v_winch[cell]` are
/// indexed by global cell number.
inline VectorXd rollout_variables(const StagePlan& plan, const KiteParams& p, const State7& x0,
                                  const std::vector<std::vector<double>>& deltadot,
                                  const std::vector<double>& v_winch,
                                  const std::vector<double>& T) {
    const VarLayout L(plan);
    if (static_cast<int>(deltadot.size()) != plan.total_intervals() ||
        static_cast<int>(v_winch.size()) != plan.total_intervals() ||
        static_cast<int>(T.size()) != plan.N)
        throw std::invalid_argument("rollout_variables: dimension mismatch");

    VectorXd w = VectorXd::Zero(L.n_vars());
    State7 x = x0;
    int cell = 0;
    for (int i = 0; i < plan.N; ++i) {
        w(L.duration_index(i)) = T[i];
        for (int j = 0; j < plan.n_i[i]; ++j, ++cell) {
            w.segment<7>(L.state_index(i, j)) = x;
            for (int k = 0; k < plan.K; ++k)
                w(L.deltadot_index(i, j, k)) = deltadot[cell][k];
            w(L.v_winch_index(i, j)) = v_winch[cell];
            x = shoot_cell(x, deltadot[cell], v_winch[cell], T[i], plan.n_i[i], p, false).x;
        }
        w.segment<7>(L.state_index(i, plan.n_i[i])) = x;
    }
    return w;
}

/// Dense rollout of the controls stored in a variable vector, starting from
/// its initial node. Returns a Trajectory sampled at every RK4 substep.
inline Trajectory rollout_trajectory(const StagePlan& plan, const KiteParams& p,
                                     const VectorXd& w) {
    const VarLayout L(plan);
    Trajectory traj;
    State7 x = w.segment<7>(L.state_index(0, 0));
    double t = 0.0;
    traj.points.push_back(detail::make_point_quat(t, x, w(L.v_winch_index(0, 0)), p));
    for (int i = 0; i < plan.N; ++i) {
        const double tau = w(L.duration_index(i)) / (plan.n_i[i] * plan.K);
        for (int j = 0; j < plan.n_i[i]; ++j) {
            const double vw = w(L.v_winch_index(i, j));
            for (int k = 0; k < plan.K; ++k) {
                const Controls u{w(L.deltadot_index(i, j, k)), vw};
                x = rk4_step_quat(x, u, tau, p, true);
                t += tau;
                traj.controls.push_back(u);
                traj.points.push_back(detail::make_point_quat(t, x, vw, p));
            }
        }
    }
    return traj;
}

/// Node states of a variable vector as a Trajectory (no re-integration).
inline Trajectory node_trajectory(const StagePlan& plan, const KiteParams& p,
                                  const VectorXd& w) {
    const VarLayout L(plan);
    Trajectory traj;
    double t = 0.0;
    for (int i = 0; i < plan.N; ++i) {
        const double dt = w(L.duration_index(i)) / plan.n_i[i];
        for (int j = 0; j < plan.n_i[i]; ++j) {
            const State7 x = w.segment<7>(L.state_index(i, j));
            const double vw = w(L.v_winch_index(i, j));
            TrajectoryPoint pt = detail::make_point_quat(t, x, vw, p);
            traj.points.push_back(pt);
            traj.controls.push_back(Controls{w(L.deltadot_index(i, j, 0)), vw});
            t += dt;
        }
    }
    const State7 xe = w.segment<7>(L.state_index(plan.N - 1, plan.n_i[plan.N - 1]));
    traj.points.push_back(
        detail::make_point_quat(t, xe, w(L.v_winch_index(plan.N - 1, plan.n_i[plan.N - 1] - 1)), p));
    return traj;
}

}  // namespace kiteopt

#endif
