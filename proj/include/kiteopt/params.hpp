#ifndef KITEOPT_PARAMS_HPP
#define KITEOPT_PARAMS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace kiteopt {

/// Physical and operational parameters of the tethered-kite system.
/// Defaults are the values used for the optimization scenarios.
struct KiteParams {
    double E = 5.0;             ///< lift-to-drag (glide) ratio [-]
    double g_k = 0.1;           ///< steering gain [rad/m]
    double v_w = 10.0;          ///< ambient wind speed [m/s]
    double A = 21.0;            ///< projected kite area [m^2]
    double rho = 1.2;           ///< air density [kg/m^3]
    double C_R = 1.0;           ///< aerodynamic force coefficient [-]
    double delta_max = 0.7;     ///< max steering deflection [-]
    double deltadot_max = 0.6;  ///< max steering actuator speed [1/s]
    double v_winch_min = -5.0;  ///< most negative winch speed [m/s]
    double v_a_min = 5.0;       ///< min air path speed [m/s]
    double l_max = 300.0;       ///< max tether length [m]
    double theta_min = 0.35;    ///< min elevation angle [rad]
    double gamma_q = 0.01;      ///< quaternion-norm stabilization gain [1/s]
};

inline void validate(const KiteParams& p) {
    auto req = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("KiteParams: ") + what);
    };
    req(p.E > 0.0, "E must be > 0");
    req(p.g_k > 0.0, "g_k must be > 0");
    req(p.v_w > 0.0, "v_w must be > 0");
    req(p.A > 0.0, "A must be > 0");
    req(p.rho > 0.0, "rho must be > 0");
    req(p.C_R > 0.0, "C_R must be > 0");
    req(p.delta_max > 0.0, "delta_max must be > 0");
    req(p.deltadot_max > 0.0, "deltadot_max must be > 0");
    req(p.v_winch_min < 0.0, "v_winch_min must be < 0");
    req(p.v_a_min > 0.0, "v_a_min must be > 0");
    req(p.l_max > 0.0, "l_max must be > 0");
    req(p.theta_min > 0.0 && p.theta_min < M_PI / 2, "theta_min must be in (0, pi/2)");
    req(p.gamma_q >= 0.0, "gamma_q must be >= 0");
}

}  // namespace kiteopt

#endif
