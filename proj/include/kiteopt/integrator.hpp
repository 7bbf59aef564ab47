#ifndef KITEOPT_INTEGRATOR_HPP
#define KITEOPT_INTEGRATOR_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kiteopt/dynamics.hpp"
#include "kiteopt/params.hpp"

namespace kiteopt {

/// One classical RK4 step with controls held constant over the step.
/// Works for any state type with vector-space semantics provided by `axpy`.
inline State7 rk4_step(const std::function<State7(const State7&)>& f, const State7& x,
                       double tau) {
    const State7 k1 = f(x);
    const State7 k2 = f(x + 0.5 * tau * k1);
    const State7 k3 = f(x + 0.5 * tau * k2);
    const State7 k4 = f(x + tau * k3);
    return x + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step of the quaternion OCP model under constant controls.
inline State7 rk4_step_quat(const State7& x, const Controls& u, double tau, const KiteParams& p,
                            bool stabilize = true) {
    auto f = [&](const State7& y) { return quat_rhs(y, u, p, stabilize); };
    return rk4_step(f, x, tau);
}

inline EulerState rk4_step_euler(const EulerState& s, double delta, double v_winch, double tau,
                                 const KiteParams& p) {
    auto add = [](const EulerState& a, const EulerState& d, double h) {
        return EulerState{a.psi + h * d.psi, a.phi + h * d.phi, a.theta + h * d.theta,
                          a.l + h * d.l};
    };
    const EulerState k1 = euler_rhs(s, delta, v_winch, p);
    const EulerState k2 = euler_rhs(add(s, k1, 0.5 * tau), delta, v_winch, p);
    const EulerState k3 = euler_rhs(add(s, k2, 0.5 * tau), delta, v_winch, p);
    const EulerState k4 = euler_rhs(add(s, k3, tau), delta, v_winch, p);
    EulerState out = s;
    out.psi += tau / 6.0 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
    out.phi += tau / 6.0 * (k1.phi + 2 * k2.phi + 2 * k3.phi + k4.phi);
    out.theta += tau / 6.0 * (k1.theta + 2 * k2.theta + 2 * k3.theta + k4.theta);
    out.l += tau / 6.0 * (k1.l + 2 * k2.l + 2 * k3.l + k4.l);
    return out;
}

enum class ModelKind { Euler, Quaternion };

/// Piecewise-constant control schedule. `rate_mode` selects whether the first
/// channel is the steering rate deltadot_s (deflection evolves as a state) or
/// a direct deflection delta held constant over each step.
struct ControlSchedule {
    bool rate_mode = false;
    std::vector<double> delta_or_rate;  ///< per-step value
    std::vector<double> v_winch;        ///< per-step value

    static ControlSchedule constant(double delta, double v_winch, std::size_t n_steps,
                                    bool rate_mode = false) {
        ControlSchedule s;
        s.rate_mode = rate_mode;
        s.delta_or_rate.assign(n_steps, delta);
        s.v_winch.assign(n_steps, v_winch);
        return s;
    }
};

/// Time-stamped record of a simulated or optimized run.
struct TrajectoryPoint {
    double t = 0.0;
    Vec4 q = Vec4(1, 0, 0, 0);
    double l = 0.0;
    double delta = 0.0;
    double W = 0.0;
    double v_a = 0.0;
    double F_tether = 0.0;
    double power = 0.0;  ///< instantaneous l_dot * F_tether
    double phi = 0.0, theta = 0.0, psi = 0.0;
    Vec3 pos = Vec3::Zero();
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::vector<Controls> controls;  ///< one per step, size points.size() - 1
    bool failed = false;
    std::string failure_reason;
    double failure_time = 0.0;

    double duration() const {
        return points.empty() ? 0.0 : points.back().t - points.front().t;
    }
};

namespace detail {

inline TrajectoryPoint make_point_quat(double t, const State7& x, double v_winch,
                                       const KiteParams& p) {
    TrajectoryPoint pt;
    pt.t = t;
    pt.q = Vec4(x(IQ0), x(IQ1), x(IQ2), x(IQ3));
    pt.l = x(IL);
    pt.delta = x(IDELTA);
    pt.W = x(IW);
    pt.v_a = air_path_speed(pt.q, v_winch, p);
    pt.F_tether = tether_force(pt.v_a, p);
    pt.power = v_winch * pt.F_tether;
    const EulerAngles e = quat_to_euler(pt.q);
    pt.phi = e.phi;
    pt.theta = e.theta;
    pt.psi = e.psi;
    pt.pos = position_from_quat(pt.q, pt.l);
    return pt;
}

inline TrajectoryPoint make_point_euler(double t, const EulerState& s, double delta,
                                        double v_winch, const KiteParams& p) {
    TrajectoryPoint pt;
    pt.t = t;
    pt.q = euler_to_quat(s.phi, s.theta, s.psi);
    pt.l = s.l;
    pt.delta = delta;
    pt.v_a = p.v_w * p.E * std::cos(s.theta) - v_winch * p.E;
    pt.F_tether = tether_force(pt.v_a, p);
    pt.power = v_winch * pt.F_tether;
    pt.phi = s.phi;
    pt.theta = s.theta;
    pt.psi = s.psi;
    pt.pos = position_from_angles(s.phi, s.theta, s.l);
    return pt;
}

inline bool finite(const State7& x) { return x.allFinite(); }

}  // namespace detail

/// Propagate the quaternion model with fixed step tau. On non-finite states the
/// partial trajectory is returned with the failure marker set.
inline Trajectory simulate_quat(const OcpState& x0, const ControlSchedule& u, double tau,
                                double duration, const KiteParams& p, bool stabilize = true) {
    if (duration <= 0.0) throw std::invalid_argument("simulate: duration must be positive");
    const std::size_t n = static_cast<std::size_t>(std::llround(duration / tau));
    if (u.delta_or_rate.size() < n || u.v_winch.size() < n)
        throw std::invalid_argument("simulate: schedule does not cover the horizon");

    Trajectory traj;
    State7 x = x0.vec();
    traj.points.push_back(detail::make_point_quat(0.0, x, u.v_winch.empty() ? 0.0 : u.v_winch[0], p));
    for (std::size_t k = 0; k < n; ++k) {
        Controls uk;
        uk.v_winch = u.v_winch[k];
        if (u.rate_mode) {
            uk.deltadot_s = u.delta_or_rate[k];
        } else {
            uk.deltadot_s = 0.0;
            x(IDELTA) = u.delta_or_rate[k];
        }
        try {
            x = rk4_step_quat(x, uk, tau, p, stabilize);
        } catch (const std::domain_error& e) {
            traj.failed = true;
            traj.failure_reason = e.what();
            traj.failure_time = (k + 1) * tau;
            return traj;
        }
        if (!detail::finite(x)) {
            traj.failed = true;
            traj.failure_reason = "non-finite state";
            traj.failure_time = (k + 1) * tau;
            return traj;
        }
        traj.controls.push_back(uk);
        traj.points.push_back(detail::make_point_quat((k + 1) * tau, x, uk.v_winch, p));
    }
    return traj;
}

/// Propagate the Euler-angle reference model. The schedule supplies the
/// deflection directly (rate_mode is ignored). Leaving the chart
/// theta in (0, pi), a singularity error from the RHS, or a non-finite state
/// all mark the trajectory as failed.
inline Trajectory simulate_euler(const EulerState& s0, const ControlSchedule& u, double tau,
                                 double duration, const KiteParams& p) {
    if (duration <= 0.0) throw std::invalid_argument("simulate: duration must be positive");
    const std::size_t n = static_cast<std::size_t>(std::llround(duration / tau));
    if (u.delta_or_rate.size() < n || u.v_winch.size() < n)
        throw std::invalid_argument("simulate: schedule does not cover the horizon");

    Trajectory traj;
    EulerState s = s0;
    traj.points.push_back(
        detail::make_point_euler(0.0, s, u.delta_or_rate.empty() ? 0.0 : u.delta_or_rate[0],
                                 u.v_winch.empty() ? 0.0 : u.v_winch[0], p));
    for (std::size_t k = 0; k < n; ++k) {
        const double delta = u.delta_or_rate[k];
        const double vw = u.v_winch[k];
        try {
            s = rk4_step_euler(s, delta, vw, tau, p);
        } catch (const std::domain_error& e) {
            traj.failed = true;
            traj.failure_reason = e.what();
            traj.failure_time = (k + 1) * tau;
            return traj;
        }
        const bool finite = std::isfinite(s.psi) && std::isfinite(s.phi) &&
                            std::isfinite(s.theta) && std::isfinite(s.l);
        if (!finite || s.theta <= 0.0 || s.theta >= M_PI) {
            traj.failed = true;
            traj.failure_reason = finite ? "left the Euler chart theta in (0, pi)"
                                         : "non-finite state";
            traj.failure_time = (k + 1) * tau;
            return traj;
        }
        traj.controls.push_back(Controls{0.0, vw});
        traj.points.push_back(detail::make_point_euler((k + 1) * tau, s, delta, vw, p));
    }
    return traj;
}

/// Mean mechanical power by trapezoidal integration of l_dot * F_tether over
/// the recorded samples.
inline double mean_power(const Trajectory& traj) {
    if (traj.points.size() < 2) {
        if (traj.points.empty()) throw std::invalid_argument("mean_power: empty trajectory");
        return 0.0;
    }
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < traj.points.size(); ++k) {
        const double dt = traj.points[k + 1].t - traj.points[k].t;
        integral += 0.5 * dt * (traj.points[k].power + traj.points[k + 1].power);
    }
    return integral / traj.duration();
}

/// Mean power from the RK4-propagated energy state W (the optimizer's route).
inline double mean_power_from_W(const Trajectory& traj, const KiteParams& p) {
    if (traj.points.size() < 2) throw std::invalid_argument("mean_power_from_W: need >= 2 points");
    return force_coefficient(p) * (traj.points.back().W - traj.points.front().W) /
           traj.duration();
}

}  // namespace kiteopt

#endif
