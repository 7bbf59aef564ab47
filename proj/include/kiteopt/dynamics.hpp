#ifndef KITEOPT_DYNAMICS_HPP
#define KITEOPT_DYNAMICS_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>

#include "kiteopt/params.hpp"

namespace kiteopt {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using State7 = Eigen::Matrix<double, 7, 1>;  ///< [W, delta, l, q0, q1, q2, q3]

/// Component indices of the 7-dimensional optimization state.
enum StateIndex : int { IW = 0, IDELTA = 1, IL = 2, IQ0 = 3, IQ1 = 4, IQ2 = 5, IQ3 = 6 };

constexpr int kStateDim = 7;

/// State of the Euler-angle reference model.
struct EulerState {
    double psi = 0.0;    ///< bearing angle [rad]
    double phi = 0.0;    ///< longitude-like angle [rad]
    double theta = 0.0;  ///< latitude-like angle [rad], valid chart is (0, pi)
    double l = 0.0;      ///< tether length [m]
};

/// Quaternion state of the singularity-free model.
struct QuatState {
    Vec4 q = Vec4(1, 0, 0, 0);
    double l = 0.0;

    static constexpr double norm_tol = 1e-3;
    bool physical() const { return l > 0.0 && std::abs(q.norm() - 1.0) <= norm_tol; }
};

/// Extended state used by the optimal control problem.
struct OcpState {
    double W = 0.0;      ///< accumulated energy integrand  int l_dot v_a^2 dt
    double delta = 0.0;  ///< steering deflection [-]
    double l = 0.0;      ///< tether length [m]
    Vec4 q = Vec4(1, 0, 0, 0);

    State7 vec() const {
        State7 x;
        x << W, delta, l, q(0), q(1), q(2), q(3);
        return x;
    }
    static OcpState from_vec(const State7& x) {
        OcpState s;
        s.W = x(IW);
        s.delta = x(IDELTA);
        s.l = x(IL);
        s.q = Vec4(x(IQ0), x(IQ1), x(IQ2), x(IQ3));
        return s;
    }
};

struct Controls {
    double deltadot_s = 0.0;  ///< steering actuator speed [1/s]
    double v_winch = 0.0;     ///< winch speed l_dot [m/s]
};

/// v_a = E v_w (q0^2+q1^2-q2^2-q3^2) - E l_dot
inline double air_path_speed(const Vec4& q, double l_dot, const KiteParams& p) {
    const double c = q(0) * q(0) + q(1) * q(1) - q(2) * q(2) - q(3) * q(3);
    return p.E * p.v_w * c - p.E * l_dot;
}

/// F = (rho A C_R / 2) (E / sqrt(1+E^2)) v_a^2
inline double tether_force(double v_a, const KiteParams& p) {
    return 0.5 * p.rho * p.A * p.C_R * p.E / std::sqrt(1.0 + p.E * p.E) * v_a * v_a;
}

/// Coefficient relating the energy state W to mechanical energy:
/// P = force_coefficient * l_dot * v_a^2.
inline double force_coefficient(const KiteParams& p) {
    return 0.5 * p.rho * p.A * p.C_R * p.E / std::sqrt(1.0 + p.E * p.E);
}

/// Rotation matrix of the orientation quaternion.
inline Eigen::Matrix3d rotation_matrix(const Vec4& q) {
    const double q0 = q(0), q1 = q(1), q2 = q(2), q3 = q(3);
    Eigen::Matrix3d R;
    R << q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2),
        2 * (q1 * q2 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 - q0 * q1),
        2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3;
    return R;
}

/// Time derivative of the Euler-angle reference model.
/// Throws on the chart singularity sin(theta) ~ 0 and on l <= 0.
inline EulerState euler_rhs(const EulerState& s, double delta, double v_winch,
                            const KiteParams& p) {
    if (s.l <= 0.0) throw std::domain_error("euler_rhs: tether length must be positive");
    const double st = std::sin(s.theta);
    if (std::abs(st) < 1e-12) throw std::domain_error("euler_rhs: singularity, sin(theta) ~ 0");
    const double l_dot = v_winch;
    const double v_a = p.v_w * p.E * std::cos(s.theta) - l_dot * p.E;

    EulerState d;
    d.phi = -v_a / (s.l * st) * std::sin(s.psi);
    d.theta = -p.v_w / s.l * st + v_a / s.l * std::cos(s.psi);
    d.psi = p.g_k * v_a * delta + d.phi * std::cos(s.theta);
    d.l = l_dot;
    return d;
}

/// Turn rates in the kite body frame (roll, pitch, yaw).
inline Vec3 body_rates(const Vec4& q, double l, double l_dot, double delta,
                       const KiteParams& p) {
    if (l <= 0.0) throw std::domain_error("body_rates: tether length must be positive");
    const Eigen::Matrix3d R = rotation_matrix(q);
    const double v_a = air_path_speed(q, l_dot, p);
    Vec3 w;
    w(0) = -p.v_w / l * R(0, 1);                                     // roll
    w(1) = -p.v_w / l * (p.E * R(0, 0) - R(0, 2)) + p.E * l_dot / l; // pitch
    w(2) = p.g_k * v_a * delta;                                      // yaw
    return w;
}

/// Quaternion kinematics driven by body-frame turn rates.
inline Vec4 quat_kinematics(const Vec4& q, const Vec3& w) {
    const double wr = w(0), wp = w(1), wy = w(2);
    Vec4 dq;
    dq(0) = 0.5 * (wy * q(1) + wp * q(2) + wr * q(3));
    dq(1) = 0.5 * (-wy * q(0) - wr * q(2) + wp * q(3));
    dq(2) = 0.5 * (-wp * q(0) + wr * q(1) - wy * q(3));
    dq(3) = 0.5 * (-wr * q(0) - wp * q(1) + wy * q(2));
    return dq;
}

/// Quaternion part of the equations of motion (closed form, no trigonometry).
inline Vec4 quat_rhs_q(const Vec4& q, double l, double delta, double v_winch,
                       const KiteParams& p, bool stabilize) {
    const double q0 = q(0), q1 = q(1), q2 = q(2), q3 = q(3);
    const double v_a = air_path_speed(q, v_winch, p);
    const double s01 = q0 * q0 + q1 * q1;
    const double s23 = q2 * q2 + q3 * q3;

    Vec4 dq = v_a / (2.0 * l) * Vec4(-q2, -q3, q0, q1) +
              p.v_w / l * Vec4(q0 * s23, q1 * s23, -q2 * s01, -q3 * s01) +
              0.5 * p.g_k * v_a * delta * Vec4(q1, -q0, -q3, q2);
    if (stabilize) dq -= p.gamma_q * (q.squaredNorm() - 1.0) * q;
    return dq;
}

/// Time derivative of the full 7-dimensional OCP state.
inline State7 quat_rhs(const State7& x, const Controls& u, const KiteParams& p,
                       bool stabilize = true) {
    const double l = x(IL);
    if (l <= 0.0) throw std::domain_error("quat_rhs: tether length must be positive");
    const Vec4 q(x(IQ0), x(IQ1), x(IQ2), x(IQ3));
    const double v_a = air_path_speed(q, u.v_winch, p);
    const Vec4 dq = quat_rhs_q(q, l, x(IDELTA), u.v_winch, p, stabilize);

    State7 dx;
    dx(IW) = u.v_winch * v_a * v_a;
    dx(IDELTA) = u.deltadot_s;
    dx(IL) = u.v_winch;
    dx(IQ0) = dq(0);
    dx(IQ1) = dq(1);
    dx(IQ2) = dq(2);
    dx(IQ3) = dq(3);
    return dx;
}

/// Unit quaternion of the rotation R_x(phi) R_y(theta) R_x(-psi).
inline Vec4 euler_to_quat(double phi, double theta, double psi) {
    const double cf = std::cos(0.5 * phi), sf = std::sin(0.5 * phi);
    const double ct = std::cos(0.5 * theta), st = std::sin(0.5 * theta);
    const double cp = std::cos(0.5 * psi), sp = std::sin(0.5 * psi);
    return Vec4(cf * ct * cp + sf * ct * sp,
                sf * ct * cp - cf * ct * sp,
                -sf * st * sp + cf * st * cp,
                sf * st * cp + cf * st * sp);
}

struct EulerAngles {
    double phi, theta, psi;
};

/// Inverse chart of euler_to_quat. At the chart degeneracy theta in {0, pi}
/// both atan2 arguments vanish; atan2(0,0) = 0 fixes phi = psi = 0 there.
inline EulerAngles quat_to_euler(const Vec4& q) {
    const double q0 = q(0), q1 = q(1), q2 = q(2), q3 = q(3);
    double c = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3;
    c = std::clamp(c, -1.0, 1.0);  // guard against rounding overshoot
    EulerAngles e;
    e.phi = std::atan2(q0 * q3 + q1 * q2, q0 * q2 - q1 * q3);
    e.theta = std::acos(c);
    e.psi = std::atan2(q0 * q3 - q1 * q2, q0 * q2 + q1 * q3);
    return e;
}

/// Cartesian kite position in the fixed frame {e_x, e_y, e_z}.
inline Vec3 position_from_quat(const Vec4& q, double l) {
    if (l <= 0.0) throw std::domain_error("position_from_quat: tether length must be positive");
    const double q0 = q(0), q1 = q(1), q2 = q(2), q3 = q(3);
    return l * Vec3(q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
                    2.0 * (q0 * q3 + q1 * q2),
                    2.0 * (q1 * q3 - q0 * q2));
}

/// Position from the angle chart, r = l [cos t, sin p sin t, -cos p sin t].
inline Vec3 position_from_angles(double phi, double theta, double l) {
    return l * Vec3(std::cos(theta), std::sin(phi) * std::sin(theta),
                    -std::cos(phi) * std::sin(theta));
}

/// Analytic first derivatives of quat_rhs with respect to state and controls.
struct RhsJacobian {
    Eigen::Matrix<double, 7, 7> dfdx;
    Eigen::Matrix<double, 7, 2> dfdu;  ///< columns: deltadot_s, v_winch
};

inline RhsJacobian quat_rhs_jacobian(const State7& x, const Controls& u, const KiteParams& p,
                                     bool stabilize = true) {
    const double l = x(IL);
    if (l <= 0.0) throw std::domain_error("quat_rhs_jacobian: tether length must be positive");
    const double delta = x(IDELTA);
    const Vec4 q(x(IQ0), x(IQ1), x(IQ2), x(IQ3));
    const double q0 = q(0), q1 = q(1), q2 = q(2), q3 = q(3);
    const double s01 = q0 * q0 + q1 * q1;
    const double s23 = q2 * q2 + q3 * q3;
    const double v_a = air_path_speed(q, u.v_winch, p);
    const Vec4 dva_dq = p.E * p.v_w * Vec4(2 * q0, 2 * q1, -2 * q2, -2 * q3);
    const double dva_dvw = -p.E;

    const Vec4 a(-q2, -q3, q0, q1);
    const Vec4 b(q0 * s23, q1 * s23, -q2 * s01, -q3 * s01);
    const Vec4 c(q1, -q0, -q3, q2);

    Eigen::Matrix4d da_dq, db_dq, dc_dq;
    da_dq << 0, 0, -1, 0,
             0, 0, 0, -1,
             1, 0, 0, 0,
             0, 1, 0, 0;
    db_dq << s23, 0, 2 * q0 * q2, 2 * q0 * q3,
             0, s23, 2 * q1 * q2, 2 * q1 * q3,
             -2 * q0 * q2, -2 * q1 * q2, -s01, 0,
             -2 * q0 * q3, -2 * q1 * q3, 0, -s01;
    dc_dq << 0, 1, 0, 0,
             -1, 0, 0, 0,
             0, 0, 0, -1,
             0, 0, 1, 0;

    RhsJacobian J;
    J.dfdx.setZero();
    J.dfdu.setZero();

    // W_dot = v_winch v_a^2
    for (int j = 0; j < 4; ++j) J.dfdx(IW, IQ0 + j) = u.v_winch * 2.0 * v_a * dva_dq(j);
    J.dfdu(IW, 1) = v_a * v_a + u.v_winch * 2.0 * v_a * dva_dvw;

    // delta_dot = deltadot_s,  l_dot = v_winch
    J.dfdu(IDELTA, 0) = 1.0;
    J.dfdu(IL, 1) = 1.0;

    // quaternion block
    Eigen::Matrix4d dq_dq = (a * dva_dq.transpose()) / (2.0 * l) + v_a / (2.0 * l) * da_dq +
                            p.v_w / l * db_dq +
                            0.5 * p.g_k * delta * (c * dva_dq.transpose() + v_a * dc_dq);
    if (stabilize) {
        const double n2 = q.squaredNorm();
        dq_dq -= p.gamma_q * (2.0 * q * q.transpose() + (n2 - 1.0) * Eigen::Matrix4d::Identity());
    }
    J.dfdx.block<4, 4>(IQ0, IQ0) = dq_dq;

    const Vec4 dq_dl = -v_a / (2.0 * l * l) * a - p.v_w / (l * l) * b;
    J.dfdx.block<4, 1>(IQ0, IL) = dq_dl;
    J.dfdx.block<4, 1>(IQ0, IDELTA) = 0.5 * p.g_k * v_a * c;
    J.dfdu.block<4, 1>(IQ0, 1) = dva_dvw * (a / (2.0 * l) + 0.5 * p.g_k * delta * c);
    return J;
}

}  // namespace kiteopt

#endif
