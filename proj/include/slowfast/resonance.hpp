#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "quasipotential.hpp"
#include "rate.hpp"
#include "rng.hpp"
#include "system.hpp"

namespace slowfast {

/* --------------------------------------------------- three-scale orbiting */

struct ThreeScaleTrace {
    std::vector<double> t;  // slowest time eps*delta*n at the recorded samples
    std::vector<double> v;
    struct Marker {
        double t = 0.0;
        int attractor = -1;
        bool entering = false;
    };
    std::vector<Marker> markers;  // intermediate-state neighborhood crossings
};

/* Iterates the three-scale recursion
     w' = w + eps*delta*A(w, x, y),  x' = x + eps*B(w, x, y),  y' = F_{(w,x)} y,
   all three updates reading the same pre-step state.  Records v every
   `subsample` steps plus every crossing of the x-attractor neighborhoods. */
inline ThreeScaleTrace run_three_scale(const ThreeScaleSpec& spec, double v0, double x0, double y0,
                                       std::uint64_t n_steps, std::uint64_t subsample,
                                       std::uint64_t seed, std::uint64_t stream = 0,
                                       std::vector<double> marker_centers = {-1.0, 1.0},
                                       double marker_radius = 0.2) {
    if (!(spec.epsilon > 0.0 && spec.epsilon < 1.0)) fail(ErrorCode::BadEpsilon, "epsilon outside (0,1)");
    if (!(spec.delta >= 0.0 && spec.delta < 1.0)) fail(ErrorCode::RangeError, "delta outside [0,1)");
    if (subsample < 1) fail(ErrorCode::RangeError, "subsample must be >= 1");
    const double dt2 = spec.epsilon * spec.delta;  // slowest-time per step
    ThreeScaleTrace tr;
    RngStream rng(seed, stream);
    double w = v0, x = x0, y = wrap01(y0);
    auto inside = [&](double xx) {
        for (std::size_t j = 0; j < marker_centers.size(); ++j)
            if (std::fabs(xx - marker_centers[j]) <= marker_radius) return static_cast<int>(j);
        return -1;
    };
    int region = inside(x);
    tr.t.push_back(0.0);
    tr.v.push_back(w);
    for (std::uint64_t n = 1; n <= n_steps; ++n) {
        const double a = spec.slowest_rate(w, x, y);
        const double b = spec.slow_rate(w, x, y);
        const double w_new = w + spec.epsilon * spec.delta * a;
        const double x_new = x + spec.epsilon * b;
        const double y_new = advance_fast(spec.driver, SlowVec(w, x), y, rng);
        w = w_new;
        x = x_new;
        y = y_new;
        if (!std::isfinite(w) || !std::isfinite(x) || std::fabs(w) > 1e3 || std::fabs(x) > 1e3)
            fail(ErrorCode::BlowUp, "three-scale orbit diverged at step " + std::to_string(n));
        const double t2 = dt2 * static_cast<double>(n);
        const int now = inside(x);
        if (now != region) {
            ThreeScaleTrace::Marker m;
            m.t = t2;
            m.attractor = (now >= 0) ? now : region;
            m.entering = (now >= 0);
            tr.markers.push_back(m);
            region = now;
        }
        if (n % subsample == 0 || n == n_steps) {
            tr.t.push_back(t2);
            tr.v.push_back(w);
        }
    }
    return tr;
}

/* --------------------------------------------------------- crossing levels */

struct CrossingLevels {
    double v_minus = 0.0;
    double v_plus = 0.0;
    double lambda_star = 0.0;  // merge level: max over v of min(R12, R21)
    bool valid = false;
};

namespace detail {

inline double bisect_level(const std::function<double(double)>& f, double target, double lo,
                           double hi, bool increasing) {
    double a = lo, b = hi;
    for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
        const double m = 0.5 * (a + b);
        const bool below = f(m) < target;
        if (below == increasing)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

} // namespace detail

/* Level crossings of the barrier curves: v_minus solves R12 = rho on the
   rising curve, v_plus solves R21 = rho on the falling one.  Monotonicity
   and sign are checked on a sample grid first. */
inline CrossingLevels crossing_levels(const std::function<double(double)>& R12,
                                      const std::function<double(double)>& R21, double v_lo,
                                      double v_hi, double rho, int n_check = 128) {
    if (!(v_lo < v_hi)) fail(ErrorCode::BadDomain, "empty v interval");
    if (!(rho > 0.0)) fail(ErrorCode::RangeError, "rho must be positive");
    std::vector<double> r12(static_cast<std::size_t>(n_check)), r21(static_cast<std::size_t>(n_check));
    for (int k = 0; k < n_check; ++k) {
        const double v = v_lo + (v_hi - v_lo) * k / (n_check - 1.0);
        r12[static_cast<std::size_t>(k)] = R12(v);
        r21[static_cast<std::size_t>(k)] = R21(v);
        if (r12[static_cast<std::size_t>(k)] < 0.0 || r21[static_cast<std::size_t>(k)] < 0.0)
            fail(ErrorCode::SignViolation, "negative barrier value at v=" + std::to_string(v));
    }
    const double slack = 1e-9;
    for (int k = 1; k < n_check; ++k) {
        if (r12[static_cast<std::size_t>(k)] < r12[static_cast<std::size_t>(k - 1)] - slack)
            fail(ErrorCode::NonMonotone, "R12 is not nondecreasing in v");
        if (r21[static_cast<std::size_t>(k)] > r21[static_cast<std::size_t>(k - 1)] + slack)
            fail(ErrorCode::NonMonotone, "R21 is not nonincreasing in v");
    }
    CrossingLevels c;
    auto diff = [&](double v) { return R12(v) - R21(v); };  // nondecreasing
    if (diff(v_lo) >= 0.0) {
        c.lambda_star = std::min(R12(v_lo), R21(v_lo));
    } else if (diff(v_hi) <= 0.0) {
        c.lambda_star = std::min(R12(v_hi), R21(v_hi));
    } else {
        const double v_star = detail::bisect_level(diff, 0.0, v_lo, v_hi, true);
        c.lambda_star = 0.5 * (std::min(R12(v_star), R21(v_star)) +
                               std::max(R12(v_star), R21(v_star)));
    }
    if (rho > c.lambda_star)
        fail(ErrorCode::RhoAboveMerge, "rho=" + std::to_string(rho) + " is above the merge level " +
                                           std::to_string(c.lambda_star));
    if (R12(v_lo) > rho || R12(v_hi) < rho)
        fail(ErrorCode::NoRoot, "R12 never crosses rho inside the v interval");
    if (R21(v_lo) < rho || R21(v_hi) > rho)
        fail(ErrorCode::NoRoot, "R21 never crosses rho inside the v interval");
    c.v_minus = detail::bisect_level(R12, rho, v_lo, v_hi, true);
    c.v_plus = detail::bisect_level(R21, rho, v_lo, v_hi, false);
    c.valid = (c.v_minus <= c.v_plus + 1e-9);
    return c;
}

/* ------------------------------------------------------- period prediction */

namespace detail {

inline double adaptive_trapezoid(const std::function<double(double)>& f, double a, double b,
                                 double fa, double fb, double whole, int depth) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double left = 0.25 * (b - a) * (fa + fm);
    const double right = 0.25 * (b - a) * (fm + fb);
    if (depth > 48 || std::fabs(left + right - whole) <= 1e-8 * std::fabs(left + right) + 1e-14)
        return left + right;
    return adaptive_trapezoid(f, a, m, fa, fm, left, depth + 1) +
           adaptive_trapezoid(f, m, b, fm, fb, right, depth + 1);
}

} // namespace detail

/* T(rho) = integral over [v_minus, v_plus] of 1/|A1bar| + 1/|A2bar|;
   requires A1bar < 0 < A2bar throughout (the sweep assumption) */
inline double predicted_period(const std::function<double(double)>& a1bar,
                               const std::function<double(double)>& a2bar, double v_minus,
                               double v_plus) {
    if (v_minus == v_plus) return 0.0;
    if (!(v_minus < v_plus)) fail(ErrorCode::BadDomain, "v_minus must not exceed v_plus");
    for (int k = 0; k <= 256; ++k) {
        const double v = v_minus + (v_plus - v_minus) * k / 256.0;
        if (!(a1bar(v) < 0.0))
            fail(ErrorCode::SignViolation, "A1bar must stay negative on the sweep interval");
        if (!(a2bar(v) > 0.0))
            fail(ErrorCode::SignViolation, "A2bar must stay positive on the sweep interval");
    }
    auto g = [&](double v) { return 1.0 / (-a1bar(v)) + 1.0 / a2bar(v); };
    const double fa = g(v_minus), fb = g(v_plus);
    return detail::adaptive_trapezoid(g, v_minus, v_plus, fa, fb,
                                      0.5 * (v_plus - v_minus) * (fa + fb), 0);
}

/* ------------------------------------------------------- period estimation */

struct PeriodEstimate {
    double period = 0.0;
    int n_phases = 0;  // monotone stretches = reversals + 1
    std::vector<double> reversal_times;
    std::vector<int> directions;  // +1 upturn (local min), -1 downturn (local max)
};

/* Reversals of a sampled signal: sign changes of the moving-average of the
   first difference (window = 1% of the trace), with reversal times fixed by
   linear interpolation of the smoothed difference through zero. */
inline PeriodEstimate empirical_period(const std::vector<double>& t, const std::vector<double>& v) {
    if (t.size() != v.size()) fail(ErrorCode::BadDomain, "time and value lengths differ");
    const std::size_t n = v.size();
    if (n < 8) fail(ErrorCode::TooFewReversals, "trace too short");
    const std::size_t nd = n - 1;
    std::vector<double> tm(nd), prefix(nd + 1, 0.0);
    for (std::size_t k = 0; k < nd; ++k) {
        tm[k] = 0.5 * (t[k] + t[k + 1]);
        prefix[k + 1] = prefix[k] + (v[k + 1] - v[k]);
    }
    const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 * nd)));
    auto smooth = [&](std::size_t k) {
        const std::size_t a = (k >= w) ? k - w : 0;
        const std::size_t b = std::min(nd - 1, k + w);
        return (prefix[b + 1] - prefix[a]) / static_cast<double>(b - a + 1);
    };
    PeriodEstimate pe;
    /* Interior region only: clipped windows near the edges skew the average.
       A quarter-amplitude hysteresis band keeps noise-driven micro sign
       flips from registering as reversals; the crossing time interpolates
       the smoothed difference between the last sample of the old saturated
       state and the first sample of the new one. */
    double max_abs = 0.0;
    for (std::size_t k = w; k + w < nd; ++k) max_abs = std::max(max_abs, std::fabs(smooth(k)));
    if (max_abs == 0.0) fail(ErrorCode::TooFewReversals, "trace is flat");
    const double band = 0.25 * max_abs;
    std::size_t prev_idx = 0;
    int state = 0;
    for (std::size_t k = w; k + w < nd; ++k) {
        const double s = smooth(k);
        int ns = 0;
        if (s >= band)
            ns = +1;
        else if (s <= -band)
            ns = -1;
        else
            continue;
        if (state != 0 && ns != state) {
            const double s0 = smooth(prev_idx), s1 = s;
            const double tr = tm[prev_idx] + (tm[k] - tm[prev_idx]) * s0 / (s0 - s1);
            pe.reversal_times.push_back(tr);
            pe.directions.push_back(ns);
        }
        state = ns;
        prev_idx = k;
    }
    if (pe.reversal_times.size() < 3)
        fail(ErrorCode::TooFewReversals, "found " + std::to_string(pe.reversal_times.size()) +
                                             " reversals; need >= 3");
    pe.n_phases = static_cast<int>(pe.reversal_times.size()) + 1;
    double acc = 0.0;
    int cnt = 0;
    for (std::size_t a = 0; a < pe.reversal_times.size(); ++a)
        for (std::size_t b = a + 1; b < pe.reversal_times.size(); ++b)
            if (pe.directions[a] == pe.directions[b]) {
                acc += pe.reversal_times[b] - pe.reversal_times[a];
                ++cnt;
                break;  // consecutive same-direction gap only
            }
    if (cnt == 0) fail(ErrorCode::TooFewReversals, "no same-direction reversal pair");
    pe.period = acc / static_cast<double>(cnt);
    return pe;
}

/* ------------------------------------------------------- designed example */

/* A fully analyzable triple: the intermediate layer is a double-well drift
   with an iid uniform fast driver (so barriers come out of the momentum-root
   integral), and the slowest rates average to -(a0 + v^2) and +(a0 + v^2)
   in the two wells.  The separator g(v) rises with v, which makes R12
   increase and R21 decrease, producing the back-and-forth sweep. */
struct ResonanceDesign {
    ThreeScaleSpec triple;
    double g_max = 0.97;
    double g_width = 0.3;
    double c = 0.5;   // fast fluctuation amplitude in the intermediate drift
    double a0 = 0.5;  // slowest-rate floor

    double g(double v) const { return g_max * std::tanh(v / g_width); }
    double abar1(double v) const { return -(a0 + v * v); }
    double abar2(double v) const { return a0 + v * v; }

    /* intermediate slow/fast pair frozen at slowest state v */
    SystemSpec intermediate_at(double v) const {
        SystemSpec s;
        s.name = "resonance-intermediate";
        const double gv = g(v);
        const double amp = c;
        s.drift.rule = [gv, amp](const SlowVec& x, double y) {
            const double xx = x.scalar();
            return SlowVec((xx - gv) * (1.0 - xx * xx) + amp * std::sin(kTwoPi * y));
        };
        s.drift.dim = 1;
        s.drift.bound = 2.6 * 1.6 + amp + 0.1;  // |x| <= 1.6, |g| < 1
        s.drift.lipschitz = 16.0 + kTwoPi * amp;
        s.driver = make_additive_driver({1.0}, [](const SlowVec& x) { return x.scalar(); });
        s.epsilon = triple.epsilon;
        s.slow_domain.box = {{-1.6, 1.6}};
        return s;
    }
};

inline ResonanceDesign make_resonance_design(double epsilon, double rho, double g_max = 0.97,
                                             double g_width = 0.3, double c = 0.5,
                                             double a0 = 0.5) {
    ResonanceDesign d;
    d.g_max = g_max;
    d.g_width = g_width;
    d.c = c;
    d.a0 = a0;
    d.triple.name = "resonance-designed";
    d.triple.slowest_rate = [a0](double w, double x, double y) {
        return x * (a0 + w * w) + std::sin(kTwoPi * y);
    };
    d.triple.slow_rate = [g_max, g_width, c](double w, double x, double y) {
        const double gv = g_max * std::tanh(w / g_width);
        return (x - gv) * (1.0 - x * x) + c * std::sin(kTwoPi * y);
    };
    d.triple.driver =
        make_additive_driver({1.0}, [](const SlowVec& wx) { return wx[0] + wx[1]; });
    d.triple.epsilon = epsilon;
    d.triple.delta = delta_from_rho(epsilon, rho);
    d.triple.rho = rho;
    return d;
}

/* barrier curves R12(v), R21(v) of the designed intermediate layer on a
   v-grid, by the momentum-root integral from each well to the separator */
struct BarrierCurves {
    std::vector<double> v, R12, R21;
};

inline BarrierCurves designed_barrier_curves(const ResonanceDesign& d, double v_lo, double v_hi,
                                             int n_v, int n_y = 256, int n_cells = 128) {
    if (n_v < 2) fail(ErrorCode::RangeError, "need >= 2 v nodes");
    BarrierCurves bc;
    for (int k = 0; k < n_v; ++k) {
        const double v = v_lo + (v_hi - v_lo) * k / (n_v - 1.0);
        /* the fluctuation amplitude c is small against the drift, so the
           climbing momenta run far beyond the default tilt bracket; the
           uniform driver's closed-form cumulant keeps the wide bracket cheap */
        RateModel model(d.intermediate_at(v), n_y, 60.0);
        const double gv = d.g(v);
        bc.v.push_back(v);
        bc.R12.push_back(hj_root_quasipotential(model, -1.0, gv, n_cells));
        bc.R21.push_back(hj_root_quasipotential(model, +1.0, gv, n_cells));
    }
    return bc;
}

/* clamped linear interpolant over a sorted table (used to turn the barrier
   curves into the rules crossing_levels consumes) */
inline std::function<double(double)> make_linear_interp(std::vector<double> xs,
                                                        std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) fail(ErrorCode::BadDomain, "bad interpolation table");
    return [xs = std::move(xs), ys = std::move(ys)](double x) {
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - xs.begin());
        const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        /* blending with an infinite node would produce inf - inf or 0 * inf;
           fall back to the nearer node so infinite plateaus stay infinite */
        if (!std::isfinite(ys[i - 1]) || !std::isfinite(ys[i]))
            return (t < 0.5) ? ys[i - 1] : ys[i];
        return ys[i - 1] + t * (ys[i] - ys[i - 1]);
    };
}

} // namespace slowfast
