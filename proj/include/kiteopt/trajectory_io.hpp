#ifndef KITEOPT_TRAJECTORY_IO_HPP
#define KITEOPT_TRAJECTORY_IO_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kiteopt/integrator.hpp"
#include "kiteopt/params.hpp"

namespace kiteopt {

/// Version tag of the trajectory CSV format. Bump on any layout change.
inline constexpr int kTrajectoryFormatVersion = 1;

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] inline void io_fail(const std::string& path, int line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline double parse_double(std::string_view tok, const std::string& path, int line) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e)
        io_fail(path, line, "malformed number '" + std::string(tok) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace detail

/// Column order of the trajectory CSV body.
inline constexpr const char* kTrajectoryColumns =
    "t,q0,q1,q2,q3,l,delta,W,deltadot_s,v_winch,v_a,F_tether,power,phi,theta,psi,x,y,z";

/// Write a trajectory as UTF-8 CSV: `#`-prefixed header with format version,
/// parameter echo, and failure status, then one 19-column row per sample at
/// full double precision. Row k carries the controls of the step starting at
/// sample k; the final row repeats the last step's controls (there is no step
/// after it) and those two cells are ignored on read.
inline void write_trajectory(const Trajectory& traj, const KiteParams& p,
                             const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_trajectory: cannot open '" + path + "'");
    using detail::fmt_g17;
    f << "# kiteopt-trajectory " << kTrajectoryFormatVersion << "\n";
    f << "# params E=" << fmt_g17(p.E) << " g_k=" << fmt_g17(p.g_k) << " v_w=" << fmt_g17(p.v_w)
      << " A=" << fmt_g17(p.A) << " rho=" << fmt_g17(p.rho) << " C_R=" << fmt_g17(p.C_R)
      << " delta_max=" << fmt_g17(p.delta_max) << " deltadot_max=" << fmt_g17(p.deltadot_max)
      << " v_winch_min=" << fmt_g17(p.v_winch_min) << " v_a_min=" << fmt_g17(p.v_a_min)
      << " l_max=" << fmt_g17(p.l_max) << " theta_min=" << fmt_g17(p.theta_min)
      << " gamma_q=" << fmt_g17(p.gamma_q) << "\n";
    f << "# failed " << (traj.failed ? 1 : 0);
    if (traj.failed) f << " t=" << fmt_g17(traj.failure_time) << " " << traj.failure_reason;
    f << "\n";
    f << "# columns " << kTrajectoryColumns << "\n";

    for (std::size_t k = 0; k < traj.points.size(); ++k) {
        const TrajectoryPoint& pt = traj.points[k];
        Controls u{0.0, 0.0};
        if (k < traj.controls.size())
            u = traj.controls[k];
        else if (!traj.controls.empty())
            u = traj.controls.back();
        const double cols[19] = {pt.t,     pt.q(0),     pt.q(1), pt.q(2),   pt.q(3),
                                 pt.l,     pt.delta,    pt.W,    u.deltadot_s,
                                 u.v_winch, pt.v_a,     pt.F_tether, pt.power,
                                 pt.phi,   pt.theta,    pt.psi,  pt.pos(0), pt.pos(1),
                                 pt.pos(2)};
        for (int c = 0; c < 19; ++c) f << (c ? "," : "") << fmt_g17(cols[c]);
        f << "\n";
    }
    if (!f) throw std::runtime_error("write_trajectory: write error on '" + path + "'");
}

/// Read a trajectory CSV written by write_trajectory. Rejects empty files,
/// version mismatches, rows with the wrong column count, malformed numbers,
/// and non-increasing timestamps; errors carry path and line number. If
/// `params_out` is non-null the header parameter echo is parsed into it.
inline Trajectory read_trajectory(const std::string& path, KiteParams* params_out = nullptr) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_trajectory: cannot open '" + path + "'");

    Trajectory traj;
    std::string line;
    int lineno = 0;
    bool saw_version = false;
    bool saw_data = false;
    Controls prev_u{0.0, 0.0};
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string tag;
            hs >> tag;
            if (tag == "kiteopt-trajectory") {
                int v = -1;
                hs >> v;
                if (!hs || v != kTrajectoryFormatVersion)
                    detail::io_fail(path, lineno,
                                    "unsupported trajectory format version (expected " +
                                        std::to_string(kTrajectoryFormatVersion) + ")");
                saw_version = true;
            } else if (tag == "failed") {
                int flag = 0;
                hs >> flag;
                traj.failed = flag != 0;
                if (traj.failed) {
                    std::string tpart;
                    hs >> tpart;
                    if (tpart.rfind("t=", 0) == 0)
                        traj.failure_time =
                            detail::parse_double(std::string_view(tpart).substr(2), path, lineno);
                    std::getline(hs >> std::ws, traj.failure_reason);
                }
            } else if (tag == "params" && params_out) {
                std::string kv;
                while (hs >> kv) {
                    const std::size_t eq = kv.find('=');
                    if (eq == std::string::npos)
                        detail::io_fail(path, lineno, "malformed params entry '" + kv + "'");
                    const std::string key = kv.substr(0, eq);
                    const double val =
                        detail::parse_double(std::string_view(kv).substr(eq + 1), path, lineno);
                    KiteParams& p = *params_out;
                    if (key == "E") p.E = val;
                    else if (key == "g_k") p.g_k = val;
                    else if (key == "v_w") p.v_w = val;
                    else if (key == "A") p.A = val;
                    else if (key == "rho") p.rho = val;
                    else if (key == "C_R") p.C_R = val;
                    else if (key == "delta_max") p.delta_max = val;
                    else if (key == "deltadot_max") p.deltadot_max = val;
                    else if (key == "v_winch_min") p.v_winch_min = val;
                    else if (key == "v_a_min") p.v_a_min = val;
                    else if (key == "l_max") p.l_max = val;
                    else if (key == "theta_min") p.theta_min = val;
                    else if (key == "gamma_q") p.gamma_q = val;
                    else detail::io_fail(path, lineno, "unknown parameter '" + key + "'");
                }
            }
            continue;
        }
        if (!saw_version)
            detail::io_fail(path, lineno, "data before the format-version header");
        const auto toks = detail::split_csv(line);
        if (toks.size() != 19)
            detail::io_fail(path, lineno, "expected 19 columns, got " +
                                              std::to_string(toks.size()));
        double v[19];
        for (int c = 0; c < 19; ++c) v[c] = detail::parse_double(toks[c], path, lineno);

        TrajectoryPoint pt;
        pt.t = v[0];
        pt.q = Vec4(v[1], v[2], v[3], v[4]);
        pt.l = v[5];
        pt.delta = v[6];
        pt.W = v[7];
        pt.v_a = v[10];
        pt.F_tether = v[11];
        pt.power = v[12];
        pt.phi = v[13];
        pt.theta = v[14];
        pt.psi = v[15];
        pt.pos = Vec3(v[16], v[17], v[18]);

        if (saw_data) {
            if (pt.t <= traj.points.back().t)
                detail::io_fail(path, lineno, "non-monotone time " + detail::fmt_g17(pt.t) +
                                                  " after " +
                                                  detail::fmt_g17(traj.points.back().t));
            // the control columns of row k describe the step from sample k,
            // so the previous row supplies the step that ends here
            traj.controls.push_back(prev_u);
        }
        prev_u = Controls{v[8], v[9]};
        traj.points.push_back(pt);
        saw_data = true;
    }
    if (!saw_version) throw std::runtime_error(path + ": empty or headerless trajectory file");
    if (!saw_data) throw std::runtime_error(path + ": trajectory file has no data rows");
    return traj;
}

}  // namespace kiteopt

#endif
