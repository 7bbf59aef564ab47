#ifndef KITEOPT_GUESS_HPP
#define KITEOPT_GUESS_HPP

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kiteopt/dynamics.hpp"
#include "kiteopt/ocp.hpp"
#include "kiteopt/params.hpp"
#include "kiteopt/transcription.hpp"

namespace kiteopt {

/// Parameters of the synthetic pumping-cycle initial guess: figure-eight
/// passes at a power-zone center followed by an optional raised return pass
/// that reels the tether back in.
struct GuessSpec {
    int n_lemniscates = 6;
    double phi0 = 0.0;      ///< pattern center, cross-wind angle [rad]
    double theta0 = 1.0;    ///< pattern center, downwind inclination [rad]
    double a_phi = 0.6;     ///< half-width in phi [rad]
    double a_theta = 0.25;  ///< half-width in theta [rad]
    double reel_out = 2.5;  ///< winch speed during the power passes [m/s]
    double reel_in = -5.0;  ///< most negative admissible return winch speed [m/s]
    double l_start = 250.0; ///< tether length at cycle start [m]
    double l_band = 50.0;   ///< maximum tether excursion above l_start [m]
    int points_per_lemniscate = 64;  ///< dense-trajectory sampling per pass
    double theta_return = 1.6;       ///< inclination apex of the return pass [rad]
};

inline void validate(const GuessSpec& g, const KiteParams& p) {
    auto req = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("GuessSpec: ") + what);
    };
    req(g.n_lemniscates >= 1, "n_lemniscates must be >= 1");
    req(g.a_phi > 0.0 && g.a_theta > 0.0, "half-widths must be positive");
    req(g.reel_in < 0.0 && g.reel_out > 0.0, "need reel_in < 0 < reel_out");
    req(g.l_start > 0.0 && g.l_band >= 0.0, "tether band must be non-negative");
    req(g.l_start + g.l_band <= p.l_max, "l_start + l_band must not exceed l_max");
    req(g.points_per_lemniscate >= 2, "points_per_lemniscate must be >= 2");
    req(g.theta_return > 0.0 && g.theta_return < M_PI, "theta_return outside (0, pi)");
    req(g.reel_in >= p.v_winch_min, "reel_in below the winch bound");
}

struct GuessResult {
    VectorXd w;       ///< NLP variable vector on the plan grid
    Trajectory traj;  ///< node-resolution trajectory of the guess
    double reel_out_eff = 0.0;  ///< winch speed actually used reeling out
    double reel_in_eff = 0.0;   ///< winch speed actually used reeling in
};

namespace detail {

/// Geometry of guess pass `m` at curve parameter s in [pi/2, 5pi/2]:
/// phi = phi0 + A sin(s), theta = theta0 + a_theta sin(2s) plus, on the
/// return pass, a smooth bump towards theta_return that vanishes with zero
/// slope at both pass ends. Returns angles and d/ds derivatives.
struct GuessGeom {
    double phi, theta, dphi, dtheta;
};

inline GuessGeom guess_geometry(const GuessSpec& g, double A, double return_amp, double s) {
    GuessGeom out;
    out.phi = g.phi0 + A * std::sin(s);
    out.dphi = A * std::cos(s);
    out.theta = g.theta0 + g.a_theta * std::sin(2.0 * s);
    out.dtheta = 2.0 * g.a_theta * std::cos(2.0 * s);
    if (return_amp != 0.0) {
        const double b = std::sin(0.5 * (s - M_PI_2));
        out.theta += return_amp * b * b;
        out.dtheta += 0.5 * return_amp * std::sin(s - M_PI_2);
    }
    return out;
}

/// Heading implied by the path tangent: inverts the phi_dot / theta_dot chart
/// kinematics for psi. phi_dot_t and theta_dot_t are time derivatives.
inline double guess_heading(double phi_dot_t, double theta_dot_t, double theta, double l,
                            const KiteParams& p) {
    return std::atan2(-phi_dot_t * l * std::sin(theta),
                      (theta_dot_t + p.v_w / l * std::sin(theta)) * l);
}

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace detail

/// Synthesize a pumping-cycle initial guess on the plan grid.
///
/// The cycle consists of N/2 figure-eight passes in the (phi, theta) chart;
/// each pass spans two stages split at the extremes of the phi sweep, where
/// the lateral-motion indicator changes sign, so the stage-sign pattern holds
/// exactly. When the plan has two more stages than 2 * n_lemniscates, the
/// final pass is raised towards theta_return and carries the reel-in phase;
/// the reel-out speed is limited so the tether stays within l_band and the
/// reel-in speed is chosen to close the tether length exactly. The heading
/// psi comes from the path tangent, the steering deflection from the
/// turn-rate law (clipped to bounds), and the energy state from integrating
/// its own dynamics along the path.
///
/// Throws std::runtime_error listing the offending nodes when the synthesized
/// guess violates the airspeed or elevation limits.
inline GuessResult generate_guess(const GuessSpec& g, const StagePlan& plan,
                                  const KiteParams& p) {
    validate(g, p);
    validate(plan);
    const int L = g.n_lemniscates;
    if (plan.N != 2 * L && plan.N != 2 * L + 2)
        throw std::invalid_argument(
            "generate_guess: plan must have 2*n_lemniscates or 2*n_lemniscates + 2 stages");
    const bool has_return = plan.N == 2 * L + 2;
    const int M = plan.N / 2;  // passes
    const double A = plan.sign_pattern[0] * g.a_phi;

    double T_power = 0.0, T_return = 0.0;
    for (int i = 0; i < plan.N; ++i) {
        if (has_return && i >= plan.N - 2)
            T_return += plan.T_init[i];
        else
            T_power += plan.T_init[i];
    }

    double v_out = 0.0, v_in = 0.0;
    if (has_return) {
        v_out = std::min(g.reel_out, g.l_band / T_power);
        v_in = -v_out * T_power / T_return;
        if (v_in < g.reel_in) {
            // keep reel-in within its limit; slow the reel-out to compensate
            v_in = g.reel_in;
            v_out = -v_in * T_return / T_power;
        }
        if (v_in < p.v_winch_min)
            throw std::runtime_error("generate_guess: closing the tether length needs a "
                                     "reel-in speed below the winch bound");
    }

    // raise the return pass only as far as the airspeed floor allows:
    // v_a = E (v_w cos(theta) - l_dot) must stay above v_a_min with margin
    double return_amp = 0.0;
    if (has_return) {
        const double cos_floor = (v_in + (p.v_a_min + 0.5) / p.E) / p.v_w;
        const double theta_cap = std::acos(std::clamp(cos_floor, -1.0, 1.0)) - g.a_theta;
        return_amp = std::max(0.0, std::min(g.theta_return, theta_cap) - g.theta0);
    }

    const VarLayout layout(plan);
    GuessResult out;
    out.w = VectorXd::Zero(layout.n_vars());
    out.reel_out_eff = v_out;
    out.reel_in_eff = v_in;

    const double h = 1e-5;  // curve-parameter step for the psi rate
    std::ostringstream violations;

    // per-node synthesis, walking the stages in time order
    double W = 0.0, l = g.l_start, t = 0.0;
    double delta_prev = 0.0, v_a_prev = 0.0;
    bool have_prev = false;
    for (int i = 0; i < plan.N; ++i) {
        const int m = i / 2;
        const bool return_pass = has_return && m == M - 1;
        const double amp = return_pass ? return_amp : 0.0;
        const double v_winch = return_pass ? v_in : v_out;
        const double T_i = plan.T_init[i];
        const double sdot = M_PI / T_i;  // each stage spans pi in s
        const double s_begin = (i % 2 == 0) ? M_PI_2 : 1.5 * M_PI;
        const double dt = T_i / plan.n_i[i];
        out.w(layout.duration_index(i)) = T_i;
        for (int j = 0; j < plan.n_i[i]; ++j) out.w(layout.v_winch_index(i, j)) = v_winch;

        for (int j = 0; j <= plan.n_i[i]; ++j) {
            if (j == 0 && i > 0) {
                // seam node: identical to the previous stage's last node
                out.w.segment<7>(layout.state_index(i, 0)) =
                    out.w.segment<7>(layout.state_index(i - 1, plan.n_i[i - 1]));
                continue;
            }
            const double s = s_begin + M_PI * j / plan.n_i[i];
            const detail::GuessGeom geo = detail::guess_geometry(g, A, amp, s);
            if (j > 0) {  // advance tether, time, and energy to this node
                l += v_winch * dt;
                t += dt;
            }
            const double v_a = p.E * (p.v_w * std::cos(geo.theta) - v_winch);
            const double psi =
                detail::guess_heading(geo.dphi * sdot, geo.dtheta * sdot, geo.theta, l, p);
            if (j > 0) W += 0.5 * dt * v_winch * (v_a_prev * v_a_prev + v_a * v_a);

            // steering deflection from the turn-rate law
            const detail::GuessGeom gp = detail::guess_geometry(g, A, amp, s + h);
            const detail::GuessGeom gm = detail::guess_geometry(g, A, amp, s - h);
            const double psi_p =
                detail::guess_heading(gp.dphi * sdot, gp.dtheta * sdot, gp.theta, l, p);
            const double psi_m =
                detail::guess_heading(gm.dphi * sdot, gm.dtheta * sdot, gm.theta, l, p);
            const double psi_dot = detail::wrap_angle(psi_p - psi_m) / (2.0 * h) * sdot;
            double delta = (psi_dot - geo.dphi * sdot * std::cos(geo.theta)) / (p.g_k * v_a);
            delta = std::clamp(delta, -p.delta_max, p.delta_max);

            const Vec4 q = euler_to_quat(geo.phi, geo.theta, psi);
            const int si = layout.state_index(i, j);
            out.w(si + IW) = W;
            out.w(si + IDELTA) = delta;
            out.w(si + IL) = l;
            out.w.segment<4>(si + IQ0) = q;

            if (have_prev && j > 0) {
                // steering rate of the interval ending at this node
                const double rate =
                    std::clamp((delta - delta_prev) / dt, -p.deltadot_max, p.deltadot_max);
                for (int k = 0; k < plan.K; ++k)
                    out.w(layout.deltadot_index(i, j - 1, k)) = rate;
            }

            if (v_a < p.v_a_min)
                violations << "  stage " << i << " node " << j << ": v_a = " << v_a << "\n";
            if (elevation_residual(q, p) > 1e-12)
                violations << "  stage " << i << " node " << j << ": below the elevation cone\n";
            if (l > p.l_max + 1e-9 || l < 1.0)
                violations << "  stage " << i << " node " << j << ": tether length " << l << "\n";

            delta_prev = delta;
            v_a_prev = v_a;
            have_prev = true;
        }
    }

    // periodic closure of the deflection: the heading-rate law evaluates with
    // different winch speeds on the two sides of the cycle wrap
    out.w(layout.state_index(plan.N - 1, plan.n_i[plan.N - 1]) + IDELTA) =
        out.w(layout.state_index(0, 0) + IDELTA);

    const std::string bad = violations.str();
    if (!bad.empty())
        throw std::runtime_error("generate_guess: infeasible guess at:\n" + bad);

    out.traj = node_trajectory(plan, p, out.w);
    return out;
}

}  // namespace kiteopt

#endif
