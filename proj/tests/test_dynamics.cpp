#include <cmath>
#include <random>

#include "doctest.h"
#include "kiteopt/dynamics.hpp"

using namespace kiteopt;

namespace {
Vec4 random_unit_quat(std::mt19937& rng) {
    std::normal_distribution<double> n;
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}
}  // namespace

TEST_CASE("euler_rhs equilibrium at tan(theta) = E") {
    KiteParams p;
    EulerState s{0.0, 0.0, std::atan(p.E), 100.0};
    const EulerState d = euler_rhs(s, 0.0, 0.0, p);
    CHECK(d.psi == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(d.phi == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(d.theta == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(d.l == 0.0);
}

TEST_CASE("euler_rhs at theta = pi/2") {
    KiteParams p;
    EulerState s{0.0, 0.0, M_PI / 2, 100.0};
    const EulerState d = euler_rhs(s, 0.0, 0.0, p);
    // cos(pi/2) kills v_a, theta_dot = -v_w/l
    CHECK(d.theta == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("euler_rhs steering term") {
    KiteParams p;
    EulerState s{0.0, 0.0, std::atan(5.0), 100.0};
    const EulerState d = euler_rhs(s, 0.186, 0.0, p);
    // psi_dot = g_k * v_a * delta with v_a = 50 cos(atan 5)
    CHECK(d.psi == doctest::Approx(0.18238800567851115).epsilon(1e-12));
}

TEST_CASE("euler_rhs error paths") {
    KiteParams p;
    CHECK_THROWS_AS(euler_rhs(EulerState{0, 0, 0.0, 100.0}, 0, 0, p), std::domain_error);
    CHECK_THROWS_AS(euler_rhs(EulerState{0, 0, 1.0, -1.0}, 0, 0, p), std::domain_error);
}

TEST_CASE("air_path_speed") {
    KiteParams p;
    CHECK(air_path_speed(Vec4(1, 0, 0, 0), 0.0, p) == doctest::Approx(50.0));
    const double s = std::sqrt(0.5);
    CHECK(air_path_speed(Vec4(s, 0, s, 0), 0.0, p) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(air_path_speed(Vec4(1, 0, 0, 0), -5.0, p) == doctest::Approx(75.0));
    CHECK(air_path_speed(Vec4(1, 0, 0, 0), 2.0, p) == doctest::Approx(40.0));
}

TEST_CASE("tether_force") {
    KiteParams p;
    CHECK(tether_force(0.0, p) == 0.0);
    CHECK(tether_force(40.0, p) == doctest::Approx(19768.50642192895).epsilon(1e-12));
    // quadratic scaling
    for (double v : {1.0, 3.7, 12.0})
        CHECK(tether_force(2 * v, p) == doctest::Approx(4 * tether_force(v, p)).epsilon(1e-14));
}

TEST_CASE("quat_rhs at the identity quaternion") {
    KiteParams p;
    OcpState s;
    s.l = 100.0;
    const State7 dx = quat_rhs(s.vec(), Controls{0, 0}, p, false);
    CHECK(dx(IQ0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(dx(IQ1) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(dx(IQ2) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(dx(IQ3) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(dx(IW) == 0.0);
    CHECK(dx(IL) == 0.0);
}

TEST_CASE("quat_rhs norm conservation (unstabilized)") {
    KiteParams p;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ud(-0.5, 0.5);
    for (int i = 0; i < 200; ++i) {
        OcpState s;
        s.q = random_unit_quat(rng);
        s.l = 50.0 + 200.0 * (ud(rng) + 0.5);
        s.delta = ud(rng);
        Controls u{ud(rng), 4.0 * ud(rng)};
        const State7 dx = quat_rhs(s.vec(), u, p, false);
        const Vec4 dq(dx(IQ0), dx(IQ1), dx(IQ2), dx(IQ3));
        CHECK(std::abs(s.q.dot(dq)) <= 1e-12 * std::max(1.0, dq.norm()));
    }
}

TEST_CASE("stabilization pulls the norm back to one") {
    KiteParams p;
    std::mt19937 rng(3);
    OcpState s;
    s.q = 1.05 * random_unit_quat(rng);
    s.l = 100.0;
    const State7 dx = quat_rhs(s.vec(), Controls{0, 0}, p, true);
    const Vec4 dq(dx(IQ0), dx(IQ1), dx(IQ2), dx(IQ3));
    // d/dt(|q|^2 - 1) = 2 <q, dq> must equal -2 gamma |q|^2 (|q|^2 - 1)
    const double n2 = s.q.squaredNorm();
    CHECK(2.0 * s.q.dot(dq) ==
          doctest::Approx(-2.0 * p.gamma_q * n2 * (n2 - 1.0)).epsilon(1e-12));
}

TEST_CASE("body_rates at the identity") {
    KiteParams p;
    const Vec3 w = body_rates(Vec4(1, 0, 0, 0), 100.0, 0.0, 0.0, p);
    CHECK(w(0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(w(1) == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(w(2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("zero deflection gives zero yaw rate") {
    KiteParams p;
    std::mt19937 rng(11);
    for (int i = 0; i < 20; ++i) {
        const Vec3 w = body_rates(random_unit_quat(rng), 120.0, -2.0, 0.0, p);
        CHECK(w(2) == 0.0);
    }
}

TEST_CASE("quat_rhs matches generic kinematics applied to body rates") {
    KiteParams p;
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> ud(-0.6, 0.6);
    for (int i = 0; i < 100; ++i) {
        OcpState s;
        s.q = random_unit_quat(rng);
        s.l = 80.0 + 100.0 * (ud(rng) + 0.6);
        s.delta = ud(rng);
        Controls u{0.0, 3.0 * ud(rng)};
        const State7 dx = quat_rhs(s.vec(), u, p, false);
        const Vec4 dq_model(dx(IQ0), dx(IQ1), dx(IQ2), dx(IQ3));
        const Vec3 w = body_rates(s.q, s.l, u.v_winch, s.delta, p);
        const Vec4 dq_kin = quat_kinematics(s.q, w);
        CHECK((dq_model - dq_kin).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("euler_to_quat basics") {
    Vec4 q = euler_to_quat(0, 0, 0);
    CHECK((q - Vec4(1, 0, 0, 0)).norm() <= 1e-15);

    q = euler_to_quat(0, M_PI / 2, 0);
    CHECK((q - Vec4(std::sqrt(0.5), 0, std::sqrt(0.5), 0)).norm() <= 1e-14);

    q = euler_to_quat(0, M_PI / 2, M_PI / 2);
    CHECK((q - Vec4(0.5, -0.5, 0.5, 0.5)).norm() <= 1e-14);
    CHECK(q(0) * q(3) - q(1) * q(2) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("euler_to_quat returns unit quaternions") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> ud(-M_PI, M_PI);
    for (int i = 0; i < 200; ++i) {
        const Vec4 q = euler_to_quat(ud(rng), ud(rng), ud(rng));
        CHECK(std::abs(q.norm() - 1.0) <= 1e-14);
    }
}

TEST_CASE("quat_to_euler round trip") {
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> ua(-M_PI + 1e-6, M_PI - 1e-6);
    std::uniform_real_distribution<double> ut(0.05, M_PI - 0.05);
    double max_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double phi = ua(rng), theta = ut(rng), psi = ua(rng);
        const EulerAngles e = quat_to_euler(euler_to_quat(phi, theta, psi));
        max_err = std::max(max_err, std::abs(e.phi - phi));
        max_err = std::max(max_err, std::abs(e.theta - theta));
        max_err = std::max(max_err, std::abs(e.psi - psi));
    }
    CHECK(max_err <= 1e-10);
}

TEST_CASE("quat_to_euler at chart degeneracy") {
    const EulerAngles e = quat_to_euler(Vec4(1, 0, 0, 0));
    CHECK(e.theta == 0.0);
    CHECK(e.phi == 0.0);  // atan2(0,0) convention
    CHECK(e.psi == 0.0);

    // inverse of the pure pitch case
    const EulerAngles e2 = quat_to_euler(Vec4(std::sqrt(0.5), 0, std::sqrt(0.5), 0));
    CHECK(e2.phi == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(e2.theta == doctest::Approx(M_PI / 2).epsilon(1e-14));
    CHECK(e2.psi == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("position_from_quat") {
    const Vec3 r = position_from_quat(Vec4(1, 0, 0, 0), 300.0);
    CHECK((r - Vec3(300, 0, 0)).norm() <= 1e-12);

    const double s = std::sqrt(0.5);
    const Vec3 r2 = position_from_quat(Vec4(s, 0, s, 0), 100.0);
    CHECK((r2 - Vec3(0, 0, -100)).norm() <= 1e-12);
}

TEST_CASE("position from quaternion agrees with the angle formula") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> ua(-M_PI, M_PI);
    std::uniform_real_distribution<double> ut(0.0, M_PI);
    for (int i = 0; i < 1000; ++i) {
        const double phi = ua(rng), theta = ut(rng);
        const double l = 150.0;
        const Vec4 q = euler_to_quat(phi, theta, ua(rng));
        CHECK((position_from_quat(q, l) - position_from_angles(phi, theta, l))
                  .cwiseAbs()
                  .maxCoeff() <= 1e-10 * l);
    }
}

TEST_CASE("position norm equals tether length") {
    std::mt19937 rng(29);
    for (int i = 0; i < 100; ++i) {
        const Vec4 q = random_unit_quat(rng);
        const double l = 220.0;
        CHECK(std::abs(position_from_quat(q, l).norm() - l) <= 1e-9 * l);
    }
}

TEST_CASE("quat_rhs_jacobian matches central finite differences") {
    KiteParams p;
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> ud(-0.5, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        State7 x;
        const Vec4 q = random_unit_quat(rng);
        x << 1e4 * ud(rng), ud(rng), 150.0 + 100.0 * ud(rng), q(0), q(1), q(2), q(3);
        Controls u{ud(rng), 4.0 * ud(rng)};
        const bool stab = trial % 2 == 0;
        const RhsJacobian J = quat_rhs_jacobian(x, u, p, stab);

        const double h = 1e-6;
        for (int j = 0; j < kStateDim; ++j) {
            State7 xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            const State7 fd = (quat_rhs(xp, u, p, stab) - quat_rhs(xm, u, p, stab)) / (2 * h);
            for (int i = 0; i < kStateDim; ++i)
                CHECK(J.dfdx(i, j) ==
                      doctest::Approx(fd(i)).epsilon(1e-6).scale(std::max(1.0, std::abs(fd(i)))));
        }
        for (int j = 0; j < 2; ++j) {
            Controls up = u, um = u;
            (j == 0 ? up.deltadot_s : up.v_winch) += h;
            (j == 0 ? um.deltadot_s : um.v_winch) -= h;
            const State7 fd = (quat_rhs(x, up, p, stab) - quat_rhs(x, um, p, stab)) / (2 * h);
            for (int i = 0; i < kStateDim; ++i)
                CHECK(J.dfdu(i, j) ==
                      doctest::Approx(fd(i)).epsilon(1e-6).scale(std::max(1.0, std::abs(fd(i)))));
        }
    }
}
