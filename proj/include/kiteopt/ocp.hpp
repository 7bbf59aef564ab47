#ifndef KITEOPT_OCP_HPP
#define KITEOPT_OCP_HPP

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "kiteopt/dynamics.hpp"
#include "kiteopt/integrator.hpp"
#include "kiteopt/params.hpp"

namespace kiteopt {

/// Nested discretization grid of the pumping-cycle OCP: N stages with fixed
/// topological sign, n_i multiple-shooting intervals per stage, K RK4 substeps
/// per interval, free stage durations T_i.
struct StagePlan {
    int N = 0;
    std::vector<int> n_i;
    int K = 1;
    std::vector<int> sign_pattern;  ///< +1/-1 per stage, alternating
    std::vector<double> T_init;     ///< initial stage durations [s]
    double T_min = 2.0;
    double T_max = 120.0;

    int total_intervals() const { return std::accumulate(n_i.begin(), n_i.end(), 0); }
};

inline void validate(const StagePlan& plan) {
    auto req = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("StagePlan: ") + what);
    };
    req(plan.N >= 2 && plan.N % 2 == 0, "N must be even and >= 2");
    req(static_cast<int>(plan.n_i.size()) == plan.N, "n_i must have N entries");
    for (int n : plan.n_i) req(n >= 1, "all n_i must be >= 1");
    req(plan.K >= 1, "K must be >= 1");
    req(static_cast<int>(plan.sign_pattern.size()) == plan.N, "sign_pattern must have N entries");
    for (int i = 0; i < plan.N; ++i) {
        req(plan.sign_pattern[i] == 1 || plan.sign_pattern[i] == -1,
            "sign_pattern entries must be +1 or -1");
        if (i > 0) req(plan.sign_pattern[i] == -plan.sign_pattern[i - 1],
                       "sign_pattern must alternate");
    }
    req(static_cast<int>(plan.T_init.size()) == plan.N, "T_init must have N entries");
    req(plan.T_min > 0.0 && plan.T_min <= plan.T_max, "need 0 < T_min <= T_max");
}

struct ObjectiveWeights {
    double eps_delta = 10.0;   ///< steering-rate penalty weight
    double eps_v = 0.01;       ///< winch-acceleration penalty weight
    /// Multiplier of the raw power term W(T)/T. Zero selects the Loyd
    /// normalization force_coefficient(p)/loyd_power(p), which turns the power
    /// term into -eta_Loyd so all objective terms are O(1).
    double power_scale = 0.0;
};

/// P_Loyd = (rho C_R A / 2)(4 E^2 / 27)(E / sqrt(1+E^2)) v_w^3
inline double loyd_power(const KiteParams& p) {
    return 0.5 * p.rho * p.C_R * p.A * (4.0 * p.E * p.E / 27.0) * p.E /
           std::sqrt(1.0 + p.E * p.E) * p.v_w * p.v_w * p.v_w;
}

inline double resolve_power_scale(const ObjectiveWeights& w, const KiteParams& p) {
    return w.power_scale > 0.0 ? w.power_scale : force_coefficient(p) / loyd_power(p);
}

/// Lateral-motion indicator q0 q3 - q1 q2; equals (1/2) sin(theta) sin(psi)
/// on the angle chart. Its sign is fixed per stage to pin the lemniscate
/// topology.
inline double topo_indicator(const Vec4& q) { return q(0) * q(3) - q(1) * q(2); }

/// Elevation-cone residual (<= 0 feasible).
inline double elevation_residual(const Vec4& q, const KiteParams& p) {
    const double c = q(0) * q(0) + q(1) * q(1) - q(2) * q(2) - q(3) * q(3);
    return c * std::tan(p.theta_min) + 2.0 * (q(1) * q(3) - q(0) * q(2));
}

constexpr int kPathConstraintCount = 8;

/// Path constraint residuals, feasible iff every entry <= 0. Fixed order:
///   0:  deltadot_s - deltadot_max
///   1: -deltadot_s - deltadot_max
///   2:  delta - delta_max
///   3: -delta - delta_max
///   4:  v_winch_min - v_winch
///   5:  v_a_min - v_a
///   6:  l - l_max
///   7:  elevation cone
inline Eigen::Matrix<double, kPathConstraintCount, 1> path_constraints(const OcpState& x,
                                                                       const Controls& u,
                                                                       const KiteParams& p) {
    Eigen::Matrix<double, kPathConstraintCount, 1> r;
    const double v_a = air_path_speed(x.q, u.v_winch, p);
    r(0) = u.deltadot_s - p.deltadot_max;
    r(1) = -u.deltadot_s - p.deltadot_max;
    r(2) = x.delta - p.delta_max;
    r(3) = -x.delta - p.delta_max;
    r(4) = p.v_winch_min - u.v_winch;
    r(5) = p.v_a_min - v_a;
    r(6) = x.l - p.l_max;
    r(7) = elevation_residual(x.q, p);
    return r;
}

/// Periodicity and energy-gauge residuals, zero iff feasible. Fixed order:
/// [q(T)-q(0) (4 rows), l(T)-l(0), delta(T)-delta(0), W(0)].
/// Periodicity is componentwise in q: the double cover is not identified.
inline Eigen::Matrix<double, 7, 1> boundary_residuals(const OcpState& x_start,
                                                      const OcpState& x_end) {
    Eigen::Matrix<double, 7, 1> r;
    r.segment<4>(0) = x_end.q - x_start.q;
    r(4) = x_end.l - x_start.l;
    r(5) = x_end.delta - x_start.delta;
    r(6) = x_start.W;
    return r;
}

/// Discrete objective over the stage grid. `deltadot[i]` holds the n_i * K
/// per-substep steering rates of stage i in time order, `v_winch[i]` the n_i
/// winch speeds. The winch-acceleration penalty couples consecutive intervals
/// and wraps periodically from the last interval to the first.
inline double objective_terms(const StagePlan& plan, const ObjectiveWeights& w8,
                              const KiteParams& p, double W_terminal,
                              std::span<const double> T,
                              const std::vector<std::vector<double>>& deltadot,
                              const std::vector<std::vector<double>>& v_winch) {
    const double T_total = std::accumulate(T.begin(), T.end(), 0.0);
    if (T_total <= 0.0) throw std::invalid_argument("objective_terms: total time must be > 0");
    double f = -resolve_power_scale(w8, p) * W_terminal / T_total;

    for (int i = 0; i < plan.N; ++i) {
        const double tau_i = T[i] / (plan.n_i[i] * plan.K);  // substep duration
        for (double dd : deltadot[i]) f += tau_i * w8.eps_delta * dd * dd;
    }
    // winch speed changes, periodic in time
    std::vector<double> v_flat;
    for (const auto& vi : v_winch) v_flat.insert(v_flat.end(), vi.begin(), vi.end());
    std::vector<double> dt_flat;
    for (int i = 0; i < plan.N; ++i)
        dt_flat.insert(dt_flat.end(), plan.n_i[i], T[i] / plan.n_i[i]);
    const std::size_t m = v_flat.size();
    for (std::size_t j = 0; j < m; ++j) {
        const double dv = v_flat[j] - v_flat[(j + 1) % m];
        f += dt_flat[j] * w8.eps_v * dv * dv;
    }
    return f;
}

/// Figures of merit of a pumping-cycle trajectory.
struct OcpMetrics {
    double mean_power = 0.0;
    double P_loyd = 0.0;
    double eta_loyd = 0.0;
    double cycle_time = 0.0;
    double reel_out_fraction = 0.0;
    double min_v_a = 0.0;
    double min_elevation = 0.0;  ///< rad, atan2(-z, x)
    double max_tether = 0.0;
};

inline OcpMetrics compute_metrics(const Trajectory& traj, const KiteParams& p) {
    if (traj.points.size() < 2) throw std::invalid_argument("compute_metrics: need >= 2 points");
    OcpMetrics m;
    m.mean_power = mean_power(traj);
    m.P_loyd = loyd_power(p);
    m.eta_loyd = m.mean_power / m.P_loyd;
    m.cycle_time = traj.duration();
    m.min_v_a = std::numeric_limits<double>::infinity();
    m.min_elevation = std::numeric_limits<double>::infinity();
    m.max_tether = 0.0;
    double t_out = 0.0;
    for (std::size_t k = 0; k < traj.points.size(); ++k) {
        const auto& pt = traj.points[k];
        m.min_v_a = std::min(m.min_v_a, pt.v_a);
        m.min_elevation = std::min(m.min_elevation, std::atan2(-pt.pos(2), pt.pos(0)));
        m.max_tether = std::max(m.max_tether, pt.l);
        if (k < traj.controls.size() && traj.controls[k].v_winch > 0.0)
            t_out += traj.points[k + 1].t - traj.points[k].t;
    }
    m.reel_out_fraction = t_out / m.cycle_time;
    return m;
}

}  // namespace kiteopt

#endif
