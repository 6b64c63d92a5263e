#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <hhkick/cycle.hpp>
#include <hhkick/response.hpp>

#include "oracles.hpp"

using namespace hhkick;

namespace {

const LimitCycle& cycle() {
    static const LimitCycle c = find_limit_cycle(HHParams{}, 256, IntegratorConfig{});
    return c;
}

DriveConfig drive(double A, double T) {
    DriveConfig d;
    d.kick.amplitude = A;
    d.T = T;
    return d;
}

}  // namespace

TEST_CASE("classify: thresholds follow the three-band rule") {
    LyapunovEstimate e;
    e.std_error = 0.01;
    e.lambda_hat = 0.04;
    CHECK(classify(e) == ResponseClass::Chaos);
    e.lambda_hat = -0.04;
    CHECK(classify(e) == ResponseClass::Entrainment);
    e.lambda_hat = 0.005;
    CHECK(classify(e) == ResponseClass::Ambiguous);
    e.lambda_hat = 0.002;
    CHECK(classify(e) == ResponseClass::Rotation);
    e.lambda_hat = 0.03;  // exactly 3*eps sits in the gap
    CHECK(classify(e) == ResponseClass::Ambiguous);
    e.lambda_hat = 0.01 / 3.0;
    CHECK(classify(e) == ResponseClass::Ambiguous);
    e.std_error = 0.0;
    CHECK_THROWS_AS(classify(e), std::invalid_argument);
}

TEST_CASE("lambda_max: unforced drive reports a zero exponent") {
    const LyapunovEstimate e = lambda_max(drive(0.0, 20.0), HHParams{}, 200, 20,
                                          IntegratorConfig{}, cycle().samples[0].x);
    CHECK(std::abs(e.lambda_hat) <= 3.0 * e.std_error);
}

TEST_CASE("lambda_max: entrained cell reports strong contraction") {
    const LyapunovEstimate e = lambda_max(drive(10.0, 14.0), HHParams{}, 300, 50,
                                          IntegratorConfig{}, cycle().samples[0].x);
    CHECK(e.classification == ResponseClass::Entrainment);
    CHECK(e.lambda_hat < -0.15);
    CHECK(e.lambda_hat > -0.25);
    CHECK(e.n_steps == 300);
}

TEST_CASE("lambda_max: chaotic cell agrees with a two-orbit divergence slope") {
    const HHParams p;
    const IntegratorConfig cfg;
    const DriveConfig d = drive(40.0, 8.05);
    const LyapunovEstimate e =
        lambda_max(d, p, 600, 100, cfg, cycle().samples[0].x);
    REQUIRE(e.classification == ResponseClass::Chaos);
    CHECK(e.lambda_hat > 3.0 * e.std_error);

    // Independent oracle: the slope of log separation of two nearby orbits.
    Vec4 x = cycle().samples[0].x;
    for (int k = 0; k < 200; ++k) x = time_T_map(x, d, p, cfg);
    const auto pre = driven_orbit_tangent(x, Vec4{0.3, 0.5, -0.4, 0.2}, d, p, 50, cfg);
    Vec4 xa = pre.x.back();
    Vec4 xb = xa + 1e-9 * pre.w.back();
    std::vector<double> t, ls;
    for (int k = 0; k <= 80; ++k) {
        const double sep = norm2(xa - xb);
        if (sep > 1e-2) break;
        t.push_back(static_cast<double>(k) * d.T);
        ls.push_back(std::log(sep));
        xa = time_T_map(xa, d, p, cfg);
        xb = time_T_map(xb, d, p, cfg);
    }
    REQUIRE(t.size() >= 10);
    double mt = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        mt += t[i];
        ml += ls[i];
    }
    mt /= static_cast<double>(t.size());
    ml /= static_cast<double>(t.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        num += (t[i] - mt) * (ls[i] - ml);
        den += (t[i] - mt) * (t[i] - mt);
    }
    const double slope = num / den;
    CHECK(slope > 0.5 * e.lambda_hat);
    CHECK(slope < 2.0 * e.lambda_hat);
}

TEST_CASE("lambda_max: estimate is the mean per-iterate log growth divided by T") {
    const HHParams p;
    const IntegratorConfig cfg;
    const DriveConfig d = drive(10.0, 14.0);
    const Vec4 x0 = cycle().samples[0].x;
    const LyapunovEstimate e = lambda_max(d, p, 300, 50, cfg, x0);

    Vec4 x = x0;
    Vec4 w{0.5, 0.5, -0.5, 0.5};
    for (int k = 0; k < 50; ++k) {
        const DrivenStep st = time_T_map_tangent(x, w, d, p, cfg);
        x = st.x;
        w = st.w;
    }
    double total = 0.0;
    for (int k = 0; k < 300; ++k) {
        const DrivenStep st = time_T_map_tangent(x, w, d, p, cfg);
        x = st.x;
        w = st.w;
        total += st.log_growth;
    }
    CHECK(std::abs(e.lambda_hat - total / (300.0 * d.T)) < 1e-12);
}

TEST_CASE("lambda_max: estimate does not depend on the starting point") {
    const HHParams p;
    const IntegratorConfig cfg;
    const LimitCycle& c = cycle();

    const DriveConfig chaos = drive(40.0, 8.05);
    Vec4 b = c.point_at_exact(6.5);
    b[1] += 0.01;
    const LyapunovEstimate e1 = lambda_max(chaos, p, 500, 100, cfg, c.samples[0].x);
    const LyapunovEstimate e2 = lambda_max(chaos, p, 500, 100, cfg, b);
    CHECK(std::abs(e1.lambda_hat - e2.lambda_hat) <
          6.0 * (e1.std_error + e2.std_error));

    // Entrained cells collapse onto the same sink, so both estimates coincide
    // far below the batch-mean resolution; the floor guards eps == 0.
    const DriveConfig ent = drive(10.0, 14.0);
    const LyapunovEstimate f1 = lambda_max(ent, p, 300, 50, cfg, c.samples[0].x);
    const LyapunovEstimate f2 = lambda_max(ent, p, 300, 50, cfg, b);
    CHECK(std::abs(f1.lambda_hat - f2.lambda_hat) <
          std::max(6.0 * (f1.std_error + f2.std_error), 1e-9));
}

TEST_CASE("lambda_max: a diverging orbit raises OrbitEscaped") {
    const Vec4 bad{std::numeric_limits<double>::quiet_NaN(), 0.2, 0.5, 0.4};
    CHECK_THROWS_AS(lambda_max(drive(10.0, 20.0), HHParams{}, 100, 5,
                               IntegratorConfig{}, bad),
                    OrbitEscaped);
}

TEST_CASE("sweep: single-cell grid reduces to lambda_max") {
    const HHParams p;
    const IntegratorConfig cfg;
    const auto rows = sweep(10.0, {14.0}, p, cfg, 300, 50);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].error.empty());
    const LyapunovEstimate e = lambda_max(drive(10.0, 14.0), p, 300, 50, cfg);
    CHECK(rows[0].estimate.lambda_hat == e.lambda_hat);
    CHECK(rows[0].estimate.std_error == e.std_error);
    CHECK(rows[0].A == 10.0);
    CHECK(rows[0].T == 14.0);
}

TEST_CASE("sweep: a failing cell is recorded and the sweep continues") {
    const auto rows = sweep(10.0, {14.0, -3.0, 16.0}, HHParams{}, IntegratorConfig{}, 100, 10);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].error.empty());
    CHECK(!rows[1].error.empty());
    CHECK(rows[2].error.empty());
}

TEST_CASE("sweep: adding one unforced period leaves per-iterate growth unchanged") {
    const HHParams p;
    const IntegratorConfig cfg;
    const double T0 = cycle().T0;
    int ok = 0;
    for (double T : {20.0, 30.0, 40.0, 50.0}) {
        const auto rows = sweep(10.0, {T, T + T0}, p, cfg, 400, 60);
        REQUIRE(rows[0].error.empty());
        REQUIRE(rows[1].error.empty());
        const double g1 = rows[0].estimate.lambda_hat * rows[0].T;
        const double g2 = rows[1].estimate.lambda_hat * rows[1].T;
        const double s1 = rows[0].estimate.std_error * rows[0].T;
        const double s2 = rows[1].estimate.std_error * rows[1].T;
        if (std::abs(g2 - g1) < std::max(6.0 * (s1 + s2), 0.1 * std::abs(g1))) ++ok;
    }
    CHECK(ok >= 3);
}

TEST_CASE("response_probabilities: fractions sum to one and sinks dominate") {
    const ResponseProbabilities pr =
        response_probabilities(10.0, 50, HHParams{}, IntegratorConfig{}, 150, 30);
    CHECK(std::abs(pr.p_chaos + pr.p_entrain + pr.p_rotation + pr.p_ambiguous - 1.0) <
          1e-12);
    CHECK(pr.p_entrain > pr.p_chaos);
    CHECK(pr.p_entrain >= 0.4);
    CHECK(pr.n_escaped == 0);
    CHECK(pr.n_grid == 50);
    CHECK(pr.A == 10.0);
}

TEST_CASE("response_probabilities: weak kicks make rotation the modal behavior") {
    const ResponseProbabilities pr =
        response_probabilities(2.0, 50, HHParams{}, IntegratorConfig{}, 200, 30);
    // Modal among the three resolved behavior types; cells whose exponent the
    // budget cannot distinguish from zero at 3 sigma stay Ambiguous.
    CHECK(pr.p_rotation > pr.p_chaos);
    CHECK(pr.p_rotation > pr.p_entrain);
}

TEST_CASE("response_probabilities: escaped cells are reported as ambiguous") {
    // A 1e-310 box width overflows the charge-matched height to infinity, so
    // every cell's orbit escapes; the sweep must degrade, not abort.
    const auto rows =
        pulse_duration_study(10.0, {1e-310}, 50, HHParams{}, IntegratorConfig{}, 100, 5);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].probs.n_escaped == 50);
    CHECK(rows[0].probs.p_ambiguous == 1.0);
    CHECK(rows[0].probs.p_chaos + rows[0].probs.p_entrain + rows[0].probs.p_rotation ==
          0.0);
}

TEST_CASE("response_probabilities: grid size precondition") {
    CHECK_THROWS_AS(response_probabilities(10.0, 49, HHParams{}), std::invalid_argument);
}

TEST_CASE("entrained cells contain a Newton-verified periodic orbit") {
    const HHParams p;
    const IntegratorConfig cfg;
    IntegratorConfig tight;  // residuals of 1e-8 need steps resolved past that
    tight.abs_tolerance = 1e-10;
    const LimitCycle& c = cycle();
    for (double T : {14.871, 20.447, 27.882, 33.459, 40.894}) {
        const DriveConfig d = drive(10.0, T);
        Vec4 x = c.samples[0].x;
        for (int k = 0; k < 300; ++k) x = time_T_map(x, d, p, cfg);
        int q = 0;
        Vec4 y = x;
        for (int j = 1; j <= 8 && q == 0; ++j) {
            y = time_T_map(y, d, p, cfg);
            if (norm2(y - x) < 0.1) q = j;
        }
        REQUIRE(q >= 1);
        const Vec4 xh = refine_periodic_orbit(x, d, p, q, tight);
        Vec4 z = xh;
        for (int j = 0; j < q; ++j) z = time_T_map(z, d, p, tight);
        CHECK(norm2(z - xh) < 1e-8);
    }
}

TEST_CASE("autocovariance: constant series has zero covariance at every lag") {
    const std::vector<double> s(200, 3.7);
    const auto c = autocovariance(s, 15);
    REQUIRE(c.size() == 16);
    for (double v : c) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("autocovariance: independent noise decorrelates at lag one") {
    auto g = oracles::rng(97);
    std::vector<double> s(100000);
    for (double& v : s) v = oracles::uniform(g, -1.0, 1.0);
    const auto c = autocovariance(s, 10);
    CHECK(c[0] > 0.30);  // variance of U(-1,1) is 1/3
    CHECK(c[0] < 0.37);
    for (std::size_t n = 1; n < c.size(); ++n) CHECK(std::abs(c[n] / c[0]) < 0.02);
}

TEST_CASE("autocovariance: sinusoid reproduces the closed form") {
    const double w = 0.7;
    std::vector<double> s(100000);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::sin(w * static_cast<double>(k));
    const auto c = autocovariance(s, 20);
    for (std::size_t n = 0; n < c.size(); ++n)
        CHECK(std::abs(c[n] - 0.5 * std::cos(w * static_cast<double>(n))) < 0.01);
}

TEST_CASE("autocovariance: chaotic voltage series is mixing") {
    const HHParams p;
    const IntegratorConfig cfg;
    const DriveConfig d = drive(40.0, 8.05);
    Vec4 x = cycle().samples[0].x;
    for (int k = 0; k < 200; ++k) x = time_T_map(x, d, p, cfg);
    const auto orbit = driven_orbit(x, d, p, 1500, cfg);
    std::vector<double> v(orbit.size());
    for (std::size_t k = 0; k < orbit.size(); ++k) v[k] = orbit[k][0];
    const auto c = autocovariance(v, 60);
    bool decayed = false;
    for (std::size_t n = 1; n < c.size() && !decayed; ++n)
        decayed = std::abs(c[n] / c[0]) < 0.1;
    CHECK(decayed);
}

TEST_CASE("autocovariance: series must be long enough for the requested lag") {
    const std::vector<double> s(99, 1.0);
    CHECK_THROWS_AS(autocovariance(s, 10), std::invalid_argument);
    CHECK_THROWS_AS(autocovariance(s, -1), std::invalid_argument);
}

TEST_CASE("pulse_duration_study: produces one probability row per width") {
    const auto rows =
        pulse_duration_study(10.0, {0.3, 9.0}, 50, HHParams{}, IntegratorConfig{}, 100, 10);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].t0 == 0.3);
    CHECK(rows[1].t0 == 9.0);
    for (const auto& r : rows) {
        CHECK(std::abs(r.probs.p_chaos + r.probs.p_entrain + r.probs.p_rotation +
                       r.probs.p_ambiguous - 1.0) < 1e-12);
    }
}

TEST_CASE("pulse_duration_study: widths beyond the smallest period are rejected") {
    CHECK_THROWS_AS(pulse_duration_study(10.0, {14.0}, 50, HHParams{}),
                    std::invalid_argument);
}
