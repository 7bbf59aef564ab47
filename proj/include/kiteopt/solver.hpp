#ifndef KITEOPT_SOLVER_HPP
#define KITEOPT_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kiteopt/transcription.hpp"

namespace kiteopt {

struct SolverOptions {
    double kkt_tol = 1e-6;         ///< projected Lagrangian-gradient tolerance
    double constraint_tol = 1e-6;  ///< scaled constraint violation tolerance
    int max_outer = 60;
    int max_inner = 400;
    double mu0 = 10.0;        ///< initial penalty
    double mu_growth = 10.0;  ///< penalty growth on insufficient feasibility progress
    double mu_max = 1e12;
    double lambda_max = 1e8;  ///< multiplier safeguard bound
    double feas_decrease = 0.7;  ///< required per-outer violation decrease factor
    double omega0 = 0.1;         ///< initial inner (projected-gradient) tolerance
    double omega_shrink = 0.3;   ///< inner-tolerance decrease per outer iteration
    int lbfgs_memory = 20;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_linesearch = 40;
    int verbosity = 0;  ///< 0 silent, 1 outer iterations, 2 inner details
    /// Inner subproblem method. The Gauss-Newton step (regularized, projected
    /// onto the active bounds) handles the severe ill-conditioning of
    /// shooting-based constraint Jacobians; the projected L-BFGS fallback
    /// needs no factorizations but converges far more slowly there.
    bool newton_inner = true;
    double lm_reg0 = 1.0;      ///< initial Levenberg regularization
    double lm_reg_min = 1e-8;  ///< regularization floor
    double lm_shrink = 0.25;   ///< regularization decrease on accepted steps
    double lm_grow = 10.0;     ///< regularization increase on rejected steps
    double lm_step_cap = 10.0;  ///< trust cap on the step infinity norm (scaled variables)
    /// Optional observer called after every outer iteration with the current
    /// iterate in the caller's variable space (for snapshot export).
    std::function<void(const struct OuterIterate&, const VectorXd&)> outer_callback;
};

struct OuterIterate {
    int outer = 0;
    int inner_iters = 0;
    double mu = 0.0;
    double objective = 0.0;
    double violation = 0.0;  ///< scaled max constraint violation
    double kkt = 0.0;        ///< projected Lagrangian gradient, extended space
    double omega = 0.0;      ///< inner tolerance used
};

struct SolveReport {
    bool converged = false;
    std::string message;
    int outer_iters = 0;
    int inner_iters = 0;
    double objective = 0.0;
    double kkt_residual = 0.0;
    double constraint_violation = 0.0;
    double mu_final = 0.0;
    VectorXd w;           ///< final primal point (original variables)
    VectorXd multipliers; ///< final scaled constraint multipliers
    std::vector<OuterIterate> log;
};

namespace detail {

inline VectorXd clamp_box(const VectorXd& z, const VectorXd& lb, const VectorXd& ub) {
    return z.cwiseMax(lb).cwiseMin(ub);
}

/// Two-loop L-BFGS recursion; falls back to steepest descent on empty memory.
class LbfgsMemory {
public:
    explicit LbfgsMemory(int m) : m_(m) {}

    void clear() { s_.clear(); y_.clear(); rho_.clear(); }

    void push(const VectorXd& s, const VectorXd& y) {
        const double sy = s.dot(y);
        if (sy <= 1e-10 * s.norm() * y.norm()) return;  // curvature guard
        s_.push_back(s);
        y_.push_back(y);
        rho_.push_back(1.0 / sy);
        if (static_cast<int>(s_.size()) > m_) {
            s_.pop_front();
            y_.pop_front();
            rho_.pop_front();
        }
    }

    VectorXd direction(const VectorXd& g) const {
        VectorXd q = -g;
        const int k = static_cast<int>(s_.size());
        std::vector<double> alpha(k);
        for (int i = k - 1; i >= 0; --i) {
            alpha[i] = rho_[i] * s_[i].dot(q);
            q -= alpha[i] * y_[i];
        }
        if (k > 0) {
            const double gamma = s_[k - 1].dot(y_[k - 1]) / y_[k - 1].squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < k; ++i) {
            const double beta = rho_[i] * y_[i].dot(q);
            q += (alpha[i] - beta) * s_[i];
        }
        return q;
    }

private:
    int m_;
    std::deque<VectorXd> s_, y_;
    std::deque<double> rho_;
};

}  // namespace detail

/// First-order optimality measure at (w, multipliers): infinity norm of the
/// Lagrangian gradient projected onto the variable box, plus the
/// complementarity measure |min(-g_j, lambda_j)| over the inequality rows.
inline double kkt_residual(const NlpProblem& nlp, const VectorXd& w, const VectorXd& lambda) {
    if (w.size() != nlp.n_vars || lambda.size() != nlp.n_eq + nlp.n_ineq)
        throw std::invalid_argument("kkt_residual: dimension mismatch");
    VectorXd g = nlp.objective_grad(w);
    double res = 0.0;
    if (lambda.size() > 0) {
        const SparseMat J = nlp.jacobian(w);
        g += J.transpose() * lambda;
        const VectorXd c = nlp.constraints(w);
        for (int j = nlp.n_eq; j < nlp.n_eq + nlp.n_ineq; ++j)
            res = std::max(res, std::abs(std::min(-c(j), lambda(j))));
    }
    res = std::max(res, (detail::clamp_box(w - g, nlp.lb, nlp.ub) - w).cwiseAbs().maxCoeff());
    return res;
}

/// Solve an NlpProblem with a bound-constrained augmented Lagrangian method.
///
/// Inequalities g(w) <= 0 get slack variables s >= 0 and become g(w) + s = 0,
/// so the subproblem is minimizing the augmented Lagrangian over the box
/// [lb, ub] x [0, inf). Constraint rows are scaled once at w0 by
/// 1 / max(1, ||row gradient||_inf). The inner minimizer is projected L-BFGS
/// with Armijo backtracking; evaluation failures (exceptions or non-finite
/// values) are treated as rejected steps and trigger further backtracking.
/// Multiplier and penalty updates follow the classic two-tolerance schedule:
/// a first-order multiplier update when the violation target eta is met,
/// otherwise a penalty increase.
namespace detail {

inline SolveReport solve_nlp_core(const NlpProblem& nlp, const VectorXd& w0,
                                  const SolverOptions& opt) {
    const int n = nlp.n_vars;
    const int m_eq = nlp.n_eq;
    const int m = nlp.n_eq + nlp.n_ineq;
    if (w0.size() != n) throw std::invalid_argument("solve_nlp: w0 has wrong dimension");

    SolveReport rep;

    auto safe_constraints = [&](const VectorXd& w, VectorXd& out) {
        try {
            out = nlp.constraints(w);
        } catch (const std::exception&) {
            return false;
        }
        return out.allFinite();
    };

    // ---- row scaling at the initial point ----
    VectorXd c0;
    if (!safe_constraints(w0, c0)) {
        rep.message = "constraint evaluation failed at the initial point";
        rep.w = w0;
        return rep;
    }
    VectorXd scale = VectorXd::Ones(m);
    {
        const SparseMat J0 = nlp.jacobian(w0);
        VectorXd row_inf = VectorXd::Zero(m);
        for (int k = 0; k < J0.outerSize(); ++k)
            for (SparseMat::InnerIterator it(J0, k); it; ++it)
                row_inf(it.row()) = std::max(row_inf(it.row()), std::abs(it.value()));
        for (int r = 0; r < m; ++r) scale(r) = 1.0 / std::max(1.0, row_inf(r));
    }

    // ---- extended variables z = [w; slacks] ----
    const int nz = n + nlp.n_ineq;
    const double inf = std::numeric_limits<double>::infinity();
    VectorXd lb(nz), ub(nz);
    lb.head(n) = nlp.lb;
    ub.head(n) = nlp.ub;
    lb.tail(nlp.n_ineq).setZero();
    ub.tail(nlp.n_ineq).setConstant(inf);

    VectorXd z(nz);
    z.head(n) = detail::clamp_box(w0, nlp.lb, nlp.ub);
    for (int j = 0; j < nlp.n_ineq; ++j)
        z(n + j) = std::max(0.0, -scale(m_eq + j) * c0(m_eq + j));

    // scaled residual c(z) = D [c_eq; g + s/D] (slacks live in scaled space)
    auto residual = [&](const VectorXd& zz, VectorXd& out) {
        VectorXd c;
        if (!safe_constraints(zz.head(n), c)) return false;
        out = scale.cwiseProduct(c);
        out.tail(nlp.n_ineq) += zz.tail(nlp.n_ineq);
        return true;
    };

    VectorXd lambda = VectorXd::Zero(m);
    double mu = opt.mu0;
    double omega = opt.omega0;

    struct Eval {
        double value = 0.0;
        VectorXd grad;   // size nz
        VectorXd c;      // scaled residual, size m
        double f = 0.0;  // objective alone
        SparseMat J;     // row-scaled constraint Jacobian over [w; slacks]
        bool ok = false;
    };

    auto evaluate = [&](const VectorXd& zz, bool want_grad) {
        Eval e;
        if (!residual(zz, e.c)) return e;
        double f;
        try {
            f = nlp.objective(zz.head(n));
        } catch (const std::exception&) {
            return e;
        }
        if (!std::isfinite(f)) return e;
        e.f = f;
        e.value = f + lambda.dot(e.c) + 0.5 * mu * e.c.squaredNorm();
        if (!std::isfinite(e.value)) return e;
        if (want_grad) {
            VectorXd y = lambda + mu * e.c;
            VectorXd gw;
            try {
                gw = nlp.objective_grad(zz.head(n));
            } catch (const std::exception&) {
                return e;
            }
            const SparseMat J = nlp.jacobian(zz.head(n));
            // extended Jacobian: row-scaled primal block plus the slack identity
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(J.nonZeros() + nlp.n_ineq);
            for (int k = 0; k < J.outerSize(); ++k)
                for (SparseMat::InnerIterator it(J, k); it; ++it)
                    trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                      scale(it.row()) * it.value());
            for (int j = 0; j < nlp.n_ineq; ++j) trip.emplace_back(m_eq + j, n + j, 1.0);
            e.J.resize(m, nz);
            e.J.setFromTriplets(trip.begin(), trip.end());

            e.grad = VectorXd::Zero(nz);
            e.grad = e.J.transpose() * y;
            e.grad.head(n) += gw;
            if (!e.grad.allFinite()) return e;
        }
        e.ok = true;
        return e;
    };

    auto projected_grad_norm = [&](const VectorXd& zz, const VectorXd& g) {
        return (detail::clamp_box(zz - g, lb, ub) - zz).cwiseAbs().maxCoeff();
    };

    // KKT residual of the original (scaled) problem at (z, lambda):
    // projected gradient of the plain Lagrangian over the extended box. The
    // slack block carries complementarity: its gradient is lambda_ineq.
    auto kkt_residual = [&](const VectorXd& zz) {
        VectorXd gw = nlp.objective_grad(zz.head(n));
        const SparseMat J = nlp.jacobian(zz.head(n));
        VectorXd g(nz);
        g.head(n) = gw + J.transpose() * scale.cwiseProduct(lambda);
        g.tail(nlp.n_ineq) = lambda.tail(nlp.n_ineq);
        return projected_grad_norm(zz, g);
    };

    Eval cur = evaluate(z, true);
    if (!cur.ok) {
        rep.message = "augmented Lagrangian evaluation failed at the initial point";
        rep.w = z.head(n);
        return rep;
    }

    // Armijo backtracking along direction d with projection onto the box;
    // returns true and advances (z, cur) when a step is accepted. Evaluation
    // failures behave like rejected steps and trigger further backtracking.
    double last_alpha = 0.0;  // step fraction of the latest accepted line search
    auto line_search = [&](const VectorXd& d) {
        double alpha = 1.0;
        for (int ls = 0; ls < opt.max_linesearch; ++ls, alpha *= opt.backtrack) {
            const VectorXd z_new = detail::clamp_box(z + alpha * d, lb, ub);
            const VectorXd step = z_new - z;
            if (step.cwiseAbs().maxCoeff() == 0.0) break;
            const double slope = cur.grad.dot(step);
            Eval trial = evaluate(z_new, false);
            if (!trial.ok) continue;
            if (trial.value <= cur.value + opt.armijo_c * std::min(0.0, slope)) {
                Eval trial_g = evaluate(z_new, true);
                if (!trial_g.ok) continue;
                z = z_new;
                cur = trial_g;
                last_alpha = alpha;
                return true;
            }
        }
        return false;
    };

    int total_inner = 0;
    double viol_prev = inf;
    // Structured quasi-Newton estimate of the constraint-curvature term
    // sum_r y_r nabla^2 c_r, which the Gauss-Newton penalty model misses
    // entirely (the objective is nearly linear in the state variables, so this
    // term carries almost all curvature along the constraint manifold).
    // Updated with the Powell-symmetric-Broyden secant rule from Jacobian
    // differences; dense, which is fine at the problem sizes targeted here.
    Eigen::MatrixXd Acurv = Eigen::MatrixXd::Zero(nz, nz);
    for (int outer = 0; outer < opt.max_outer; ++outer) {
        // Inner tolerance: geometric schedule, tightened to the violation
        // scale when feasibility is already high so the dual residual keeps
        // pace with the primal one.
        const double omega_k =
            std::max(0.1 * opt.kkt_tol, std::min(omega, 0.1 * viol_prev));
        int inner = 0;
        if (opt.newton_inner) {
            double nu = opt.lm_reg0;
            // stagnation safeguard: the damped Newton step can keep clamping
            // against the same active bounds without touching the dominant
            // projected-gradient component; detect the plateau and shake the
            // active set with a plain projected-gradient step
            double pg_best = inf;
            int since_improve = 0, rescues = 0;
            // trust cap on the step infinity norm: long steps are truncated
            // rather than rejected (rejecting them reduces progress along the
            // long flat valleys in the steering variables to a creep), but the
            // radius itself stays fixed -- growing it lets the iterate drift
            // far along near-flat directions and destabilizes the outer loop
            const double cap = opt.lm_step_cap;
            for (; inner < opt.max_inner; ++inner) {
                if (projected_grad_norm(z, cur.grad) <= omega_k) break;

                // split off the bound constraints active at this iterate
                std::vector<int> free_idx, pos(nz, -1);
                free_idx.reserve(nz);
                for (int i = 0; i < nz; ++i) {
                    const bool lo = z(i) - lb(i) <= 1e-11 && cur.grad(i) > 0.0;
                    const bool hi = ub(i) - z(i) <= 1e-11 && cur.grad(i) < 0.0;
                    if (!lo && !hi) {
                        pos[i] = static_cast<int>(free_idx.size());
                        free_idx.push_back(i);
                    }
                }
                const int nf = static_cast<int>(free_idx.size());
                if (nf == 0) break;

                // Newton model of the augmented Lagrangian: Gauss-Newton
                // penalty curvature, the analytic objective Hessian when the
                // problem provides one, and the quasi-Newton constraint term
                Eigen::MatrixXd Hd = mu * Eigen::MatrixXd(SparseMat(cur.J.transpose() * cur.J));
                if (nlp.objective_hessian)
                    Hd.topLeftCorner(n, n) += Eigen::MatrixXd(nlp.objective_hessian(z.head(n)));
                const bool exact_curv = static_cast<bool>(nlp.constraint_hessian);
                if (exact_curv) {
                    // exact y-weighted constraint curvature; the weights fold in
                    // the row scaling applied to the residuals
                    const VectorXd y_row = scale.cwiseProduct(VectorXd(lambda + mu * cur.c));
                    Hd.topLeftCorner(n, n) += nlp.constraint_hessian(z.head(n), y_row);
                } else {
                    Hd += Acurv;
                }

                Eigen::MatrixXd Hff(nf, nf);
                VectorXd gf(nf);
                for (int i = 0; i < nf; ++i) {
                    gf(i) = cur.grad(free_idx[i]);
                    for (int j = 0; j < nf; ++j) Hff(i, j) = Hd(free_idx[i], free_idx[j]);
                }

                const VectorXd z_old = z;
                const SparseMat J_old = cur.J;
                // Levenberg iteration with gain-ratio control: the damping nu
                // tracks how far the quadratic model can be trusted, which the
                // violently nonlinear shooting constraints make essential
                bool accepted = false;
                for (int trial = 0; trial < 25 && !accepted; ++trial) {
                    Eigen::MatrixXd A = Hff;
                    A.diagonal().array() += nu;
                    const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
                    if (ldlt.info() != Eigen::Success) {
                        nu *= opt.lm_grow;
                        continue;
                    }
                    VectorXd df = ldlt.solve(-gf);
                    if (!df.allFinite()) {
                        nu *= opt.lm_grow;
                        continue;
                    }
                    const double dn = df.cwiseAbs().maxCoeff();
                    const bool truncated = dn > cap;
                    if (truncated) df *= cap / dn;
                    VectorXd dir = VectorXd::Zero(nz);
                    for (int i = 0; i < nf; ++i) dir(free_idx[i]) = df(i);
                    const VectorXd z_new = detail::clamp_box(z + dir, lb, ub);
                    const VectorXd s = z_new - z;
                    if (s.cwiseAbs().maxCoeff() == 0.0) {
                        nu *= opt.lm_grow;
                        continue;
                    }
                    const double pred =
                        -(cur.grad.dot(s) + 0.5 * s.dot(Hd * s) + 0.5 * nu * s.squaredNorm());
                    Eval trial_e = evaluate(z_new, false);
                    if (!trial_e.ok || pred <= 0.0) {
                        nu *= opt.lm_grow;
                        continue;
                    }
                    const double ared = cur.value - trial_e.value;
                    const double rho = ared / pred;
                    // near the roundoff floor of the merit the gain ratio is
                    // noise; accept the (tiny) model step as long as the merit
                    // does not measurably increase
                    const double noise =
                        1e-13 * (std::abs(cur.value) + std::abs(trial_e.value) + 1.0);
                    if (rho > 1e-4 || (pred <= noise && ared >= -noise)) {
                        Eval trial_g = evaluate(z_new, true);
                        if (!trial_g.ok) {
                            nu *= opt.lm_grow;
                            continue;
                        }
                        z = z_new;
                        cur = trial_g;
                        accepted = true;
                        last_alpha = rho;
                        if (rho > 0.75) {
                            nu = std::max(nu * opt.lm_shrink, opt.lm_reg_min);
                        } else if (rho < 0.25) {
                            nu *= opt.lm_grow;
                        }
                    } else {
                        nu *= opt.lm_grow;
                    }
                }
                if (accepted && !exact_curv) {
                    // secant update of the constraint-curvature estimate
                    const VectorXd s = z - z_old;
                    const double ss = s.squaredNorm();
                    if (ss > 1e-16) {
                        const VectorXd y_c = (cur.J - J_old).transpose() *
                                             VectorXd(lambda + mu * cur.c);
                        const VectorXd r = y_c - Acurv * s;
                        if (r.allFinite()) {
                            Acurv += (r * s.transpose() + s * r.transpose()) / ss -
                                     (r.dot(s) / (ss * ss)) * (s * s.transpose());
                        }
                    }
                }
                if (opt.verbosity >= 3 || (opt.verbosity >= 2 && inner % 50 == 0)) {
                    int imax = 0;
                    (detail::clamp_box(z - cur.grad, lb, ub) - z).cwiseAbs().maxCoeff(&imax);
                    std::printf("    [inner %5d] merit=%+.9e pg=%.3e@%d free=%d nu=%.1e "
                                "alpha=%.2e step=%.2e z=%.3e g=%.3e lo=%.1e hi=%.1e\n",
                                inner, cur.value, projected_grad_norm(z, cur.grad), imax, nf, nu,
                                last_alpha, (z - z_old).cwiseAbs().maxCoeff(), z(imax),
                                cur.grad(imax), z(imax) - lb(imax), ub(imax) - z(imax));
                }
                if (!accepted) break;  // regularization exhausted at this tolerance

                const double pg_now = projected_grad_norm(z, cur.grad);
                if (pg_now < 0.99 * pg_best) {
                    pg_best = pg_now;
                    since_improve = 0;
                } else if (++since_improve >= 15) {
                    if (++rescues > 4) break;  // stuck at this tolerance
                    line_search(-cur.grad);
                    nu = opt.lm_reg0;
                    since_improve = 0;
                }
            }
        } else {
            detail::LbfgsMemory mem(opt.lbfgs_memory);
            for (; inner < opt.max_inner; ++inner) {
                if (projected_grad_norm(z, cur.grad) <= omega_k) break;

                VectorXd d = mem.direction(cur.grad);
                if (d.dot(cur.grad) > -1e-12 * d.norm() * cur.grad.norm()) {
                    mem.clear();
                    d = -cur.grad;
                }
                const VectorXd z_before = z;
                const VectorXd g_before = cur.grad;
                if (!line_search(d)) break;
                mem.push(z - z_before, cur.grad - g_before);
            }
        }
        total_inner += inner;

        const double violation = cur.c.size() > 0 ? cur.c.cwiseAbs().maxCoeff() : 0.0;
        const bool solved = projected_grad_norm(z, cur.grad) <= omega_k;

        bool stalled = false;
        if (solved) {
            // safeguarded first-order multiplier update on solved subproblems
            lambda = (lambda + mu * cur.c)
                         .cwiseMax(-opt.lambda_max)
                         .cwiseMin(opt.lambda_max);
            // grow the penalty only when feasibility stalls between solves
            stalled = violation > opt.constraint_tol &&
                      violation > opt.feas_decrease * viol_prev;
            viol_prev = std::min(viol_prev, violation);
        }
        const double kkt = kkt_residual(z);
        rep.log.push_back({outer, inner, mu, cur.f, violation, kkt, omega_k});
        if (opt.outer_callback) opt.outer_callback(rep.log.back(), z.head(n));
        if (opt.verbosity >= 1)
            std::printf("[outer %3d] f=%+.6e viol=%.3e kkt=%.3e mu=%.1e inner=%d%s%s\n", outer,
                        cur.f, violation, kkt, mu, inner, solved ? "" : " (inner cap)",
                        stalled ? " (mu up)" : "");
        if (violation <= opt.constraint_tol && kkt <= opt.kkt_tol) {
            rep.converged = true;
            rep.message = "converged";
            rep.outer_iters = outer + 1;
            rep.inner_iters = total_inner;
            rep.objective = cur.f;
            rep.kkt_residual = kkt;
            rep.constraint_violation = violation;
            rep.mu_final = mu;
            rep.w = z.head(n);
            rep.multipliers = lambda;
            return rep;
        }
        // the multiplier update absorbs mu*c, so y = lambda + mu*c (and with it
        // the curvature estimate) changes little across penalty growth: keep it
        if (stalled) mu = std::min(mu * opt.mu_growth, opt.mu_max);
        if (solved) omega = std::max(omega * opt.omega_shrink, 0.1 * opt.kkt_tol);
        // multipliers or penalty changed: refresh the merit value and gradient
        cur = evaluate(z, true);
        if (!cur.ok) {
            rep.message = "augmented Lagrangian evaluation failed after an update";
            rep.w = z.head(n);
            rep.multipliers = lambda;
            return rep;
        }
    }

    rep.message = "iteration limit reached";
    rep.outer_iters = opt.max_outer;
    rep.inner_iters = total_inner;
    rep.objective = cur.f;
    rep.kkt_residual = kkt_residual(z);
    rep.constraint_violation = cur.c.size() > 0 ? cur.c.cwiseAbs().maxCoeff() : 0.0;
    rep.mu_final = mu;
    rep.w = z.head(n);
    rep.multipliers = lambda;
    return rep;
}

}  // namespace detail

/// Entry point: scales each variable by max(1, |w0_i|) so the inner
/// quasi-Newton iteration sees O(1) variables (the energy state and tether
/// length otherwise dwarf the quaternion components), runs the augmented
/// Lagrangian core on the scaled problem, and maps the result back.
inline SolveReport solve_nlp(const NlpProblem& nlp, const VectorXd& w0,
                             const SolverOptions& opt = {}) {
    if (w0.size() != nlp.n_vars) throw std::invalid_argument("solve_nlp: w0 has wrong dimension");
    const VectorXd d = w0.cwiseAbs().cwiseMax(1.0);

    NlpProblem scaled = nlp;
    scaled.lb = nlp.lb.cwiseQuotient(d);
    scaled.ub = nlp.ub.cwiseQuotient(d);
    scaled.objective = [&nlp, d](const VectorXd& z) { return nlp.objective(d.cwiseProduct(z)); };
    scaled.objective_grad = [&nlp, d](const VectorXd& z) {
        return VectorXd(d.cwiseProduct(nlp.objective_grad(d.cwiseProduct(z))));
    };
    if (nlp.constraint_hessian)
        scaled.constraint_hessian = [&nlp, d](const VectorXd& z, const VectorXd& y) {
            return Eigen::MatrixXd(d.asDiagonal() * nlp.constraint_hessian(d.cwiseProduct(z), y) *
                                   d.asDiagonal());
        };
    if (nlp.objective_hessian)
        scaled.objective_hessian = [&nlp, d](const VectorXd& z) {
            return SparseMat(d.asDiagonal() * nlp.objective_hessian(d.cwiseProduct(z)) *
                             d.asDiagonal());
        };
    scaled.constraints = [&nlp, d](const VectorXd& z) {
        return nlp.constraints(d.cwiseProduct(z));
    };
    scaled.jacobian = [&nlp, d](const VectorXd& z) {
        return SparseMat(nlp.jacobian(d.cwiseProduct(z)) * d.asDiagonal());
    };

    SolverOptions inner_opt = opt;
    if (opt.outer_callback)
        inner_opt.outer_callback = [&opt, d](const OuterIterate& it, const VectorXd& z) {
            opt.outer_callback(it, VectorXd(d.cwiseProduct(z)));
        };
    SolveReport rep = detail::solve_nlp_core(scaled, w0.cwiseQuotient(d), inner_opt);
    rep.w = d.cwiseProduct(rep.w);
    return rep;
}

}  // namespace kiteopt

#endif
