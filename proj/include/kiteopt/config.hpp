#ifndef KITEOPT_CONFIG_HPP
#define KITEOPT_CONFIG_HPP

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "kiteopt/guess.hpp"
#include "kiteopt/ocp.hpp"
#include "kiteopt/params.hpp"
#include "kiteopt/solver.hpp"

namespace kiteopt {

/// Full run configuration: physical parameters, discretization plan,
/// objective weights, guess geometry, and solver options, plus the seed for
/// randomized utilities and the output directory. Every field is optional in
/// the JSON document and falls back to the struct default.
struct RunConfig {
    KiteParams params;
    StagePlan plan;
    ObjectiveWeights weights;
    GuessSpec guess;
    SolverOptions solver;
    unsigned long seed = 0;
    std::string output_dir = "out";
};

namespace detail {

using nlohmann::json;

/// Read `key` from `j` into `dst` if present; rethrow type errors with the
/// dotted field path so config mistakes are reported field-by-field.
template <typename T>
void opt_field(const json& j, const std::string& section, const char* key, T& dst) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        dst = it->get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config field '" + section + "." + key +
                                    "': " + e.what());
    }
}

inline void reject_unknown(const json& j, const std::string& section,
                           std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok)
            throw std::invalid_argument("config: unknown field '" + section + "." + key + "'");
    }
}

inline void parse_params(const json& j, KiteParams& p) {
    reject_unknown(j, "params",
                   {"E", "g_k", "v_w", "A", "rho", "C_R", "delta_max", "deltadot_max",
                    "v_winch_min", "v_a_min", "l_max", "theta_min", "gamma_q"});
    opt_field(j, "params", "E", p.E);
    opt_field(j, "params", "g_k", p.g_k);
    opt_field(j, "params", "v_w", p.v_w);
    opt_field(j, "params", "A", p.A);
    opt_field(j, "params", "rho", p.rho);
    opt_field(j, "params", "C_R", p.C_R);
    opt_field(j, "params", "delta_max", p.delta_max);
    opt_field(j, "params", "deltadot_max", p.deltadot_max);
    opt_field(j, "params", "v_winch_min", p.v_winch_min);
    opt_field(j, "params", "v_a_min", p.v_a_min);
    opt_field(j, "params", "l_max", p.l_max);
    opt_field(j, "params", "theta_min", p.theta_min);
    opt_field(j, "params", "gamma_q", p.gamma_q);
}

inline void parse_plan(const json& j, StagePlan& plan) {
    reject_unknown(j, "plan", {"N", "n_i", "K", "sign_pattern", "T_init", "T_min", "T_max"});
    opt_field(j, "plan", "N", plan.N);
    opt_field(j, "plan", "n_i", plan.n_i);
    opt_field(j, "plan", "K", plan.K);
    opt_field(j, "plan", "sign_pattern", plan.sign_pattern);
    opt_field(j, "plan", "T_init", plan.T_init);
    opt_field(j, "plan", "T_min", plan.T_min);
    opt_field(j, "plan", "T_max", plan.T_max);
}

inline void parse_weights(const json& j, ObjectiveWeights& w) {
    reject_unknown(j, "weights", {"eps_delta", "eps_v", "power_scale"});
    opt_field(j, "weights", "eps_delta", w.eps_delta);
    opt_field(j, "weights", "eps_v", w.eps_v);
    opt_field(j, "weights", "power_scale", w.power_scale);
}

inline void parse_guess(const json& j, GuessSpec& g) {
    reject_unknown(j, "guess",
                   {"n_lemniscates", "center", "half_widths", "reel_out", "reel_in", "l_start",
                    "l_band", "points_per_lemniscate", "theta_return"});
    opt_field(j, "guess", "n_lemniscates", g.n_lemniscates);
    if (j.contains("center")) {
        std::vector<double> c;
        opt_field(j, "guess", "center", c);
        if (c.size() != 2)
            throw std::invalid_argument("config field 'guess.center': need [phi0, theta0]");
        g.phi0 = c[0];
        g.theta0 = c[1];
    }
    if (j.contains("half_widths")) {
        std::vector<double> a;
        opt_field(j, "guess", "half_widths", a);
        if (a.size() != 2)
            throw std::invalid_argument("config field 'guess.half_widths': need [a_phi, a_theta]");
        g.a_phi = a[0];
        g.a_theta = a[1];
    }
    opt_field(j, "guess", "reel_out", g.reel_out);
    opt_field(j, "guess", "reel_in", g.reel_in);
    opt_field(j, "guess", "l_start", g.l_start);
    opt_field(j, "guess", "l_band", g.l_band);
    opt_field(j, "guess", "points_per_lemniscate", g.points_per_lemniscate);
    opt_field(j, "guess", "theta_return", g.theta_return);
}

inline void parse_solver(const json& j, SolverOptions& s) {
    reject_unknown(j, "solver",
                   {"kkt_tol", "constraint_tol", "max_outer", "max_inner", "mu0", "mu_growth",
                    "mu_max", "lambda_max", "feas_decrease", "omega0", "omega_shrink",
                    "lbfgs_memory", "armijo_c", "backtrack", "max_linesearch", "verbosity",
                    "newton_inner", "lm_reg0", "lm_reg_min", "lm_shrink", "lm_grow",
                    "lm_step_cap"});
    opt_field(j, "solver", "kkt_tol", s.kkt_tol);
    opt_field(j, "solver", "constraint_tol", s.constraint_tol);
    opt_field(j, "solver", "max_outer", s.max_outer);
    opt_field(j, "solver", "max_inner", s.max_inner);
    opt_field(j, "solver", "mu0", s.mu0);
    opt_field(j, "solver", "mu_growth", s.mu_growth);
    opt_field(j, "solver", "mu_max", s.mu_max);
    opt_field(j, "solver", "lambda_max", s.lambda_max);
    opt_field(j, "solver", "feas_decrease", s.feas_decrease);
    opt_field(j, "solver", "omega0", s.omega0);
    opt_field(j, "solver", "omega_shrink", s.omega_shrink);
    opt_field(j, "solver", "lbfgs_memory", s.lbfgs_memory);
    opt_field(j, "solver", "armijo_c", s.armijo_c);
    opt_field(j, "solver", "backtrack", s.backtrack);
    opt_field(j, "solver", "max_linesearch", s.max_linesearch);
    opt_field(j, "solver", "verbosity", s.verbosity);
    opt_field(j, "solver", "newton_inner", s.newton_inner);
    opt_field(j, "solver", "lm_reg0", s.lm_reg0);
    opt_field(j, "solver", "lm_reg_min", s.lm_reg_min);
    opt_field(j, "solver", "lm_shrink", s.lm_shrink);
    opt_field(j, "solver", "lm_grow", s.lm_grow);
    opt_field(j, "solver", "lm_step_cap", s.lm_step_cap);
}

}  // namespace detail

/// Parse a RunConfig from a JSON document. Unknown sections or fields and
/// type mismatches raise std::invalid_argument with the offending field path.
/// Sub-config invariants (params, plan, guess) are validated where defined;
/// the plan is only validated when present since guess-only runs may derive
/// it elsewhere.
inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::reject_unknown;
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    reject_unknown(j, "",
                   {"params", "plan", "weights", "guess", "solver", "seed", "output_dir"});
    RunConfig c;
    if (j.contains("params")) detail::parse_params(j.at("params"), c.params);
    if (j.contains("plan")) detail::parse_plan(j.at("plan"), c.plan);
    if (j.contains("weights")) detail::parse_weights(j.at("weights"), c.weights);
    if (j.contains("guess")) detail::parse_guess(j.at("guess"), c.guess);
    if (j.contains("solver")) detail::parse_solver(j.at("solver"), c.solver);
    detail::opt_field(j, "", "seed", c.seed);
    detail::opt_field(j, "", "output_dir", c.output_dir);

    validate(c.params);
    // N = 0 means "no plan given": commands that need one derive or reject it
    if (c.plan.N != 0) validate(c.plan);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

/// Echo of the effective configuration, written into output artifacts.
inline nlohmann::json config_echo(const RunConfig& c) {
    nlohmann::json j;
    j["params"] = {{"E", c.params.E},
                   {"g_k", c.params.g_k},
                   {"v_w", c.params.v_w},
                   {"A", c.params.A},
                   {"rho", c.params.rho},
                   {"C_R", c.params.C_R},
                   {"delta_max", c.params.delta_max},
                   {"deltadot_max", c.params.deltadot_max},
                   {"v_winch_min", c.params.v_winch_min},
                   {"v_a_min", c.params.v_a_min},
                   {"l_max", c.params.l_max},
                   {"theta_min", c.params.theta_min},
                   {"gamma_q", c.params.gamma_q}};
    j["plan"] = {{"N", c.plan.N},         {"n_i", c.plan.n_i},
                 {"K", c.plan.K},         {"sign_pattern", c.plan.sign_pattern},
                 {"T_init", c.plan.T_init}, {"T_min", c.plan.T_min},
                 {"T_max", c.plan.T_max}};
    j["weights"] = {{"eps_delta", c.weights.eps_delta},
                    {"eps_v", c.weights.eps_v},
                    {"power_scale", c.weights.power_scale}};
    j["guess"] = {{"n_lemniscates", c.guess.n_lemniscates},
                  {"center", {c.guess.phi0, c.guess.theta0}},
                  {"half_widths", {c.guess.a_phi, c.guess.a_theta}},
                  {"reel_out", c.guess.reel_out},
                  {"reel_in", c.guess.reel_in},
                  {"l_start", c.guess.l_start},
                  {"l_band", c.guess.l_band},
                  {"points_per_lemniscate", c.guess.points_per_lemniscate},
                  {"theta_return", c.guess.theta_return}};
    j["solver"] = {{"kkt_tol", c.solver.kkt_tol},
                   {"constraint_tol", c.solver.constraint_tol},
                   {"max_outer", c.solver.max_outer},
                   {"max_inner", c.solver.max_inner},
                   {"mu0", c.solver.mu0},
                   {"mu_growth", c.solver.mu_growth},
                   {"verbosity", c.solver.verbosity},
                   {"newton_inner", c.solver.newton_inner}};
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace kiteopt

#endif
