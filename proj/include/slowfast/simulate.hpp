#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "system.hpp"
#include "types.hpp"

namespace slowfast {

/* --------------------------------------------------------------- stepping */

struct SimState {
    SlowVec x;
    double y = 0.0;
};

/* One coupled step.  The fast driver advances at the pre-step slow state,
   so the two updates read the same (x, y) pair. */
inline SimState step(const SystemSpec& sys, const SimState& s, RngStream& rng) {
    SimState out;
    out.x = s.x + sys.epsilon * sys.drift.rule(s.x, s.y);
    out.y = advance_fast(sys.driver, s.x, s.y, rng);
    return out;
}

struct Y0Policy {
    bool random = true;  // draw y0 uniformly from the replica's own stream
    double value = 0.0;

    double pick(RngStream& rng) const { return random ? rng.uniform01() : wrap01(value); }
};

/* -------------------------------------------------------------- histogram */

struct Histogram {
    double lo = 0.0, hi = 1.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t out_of_range = 0;
    std::uint64_t total = 0;

    Histogram() = default;
    Histogram(double lo_, double hi_, int bins) : lo(lo_), hi(hi_) {
        if (!(lo < hi) || bins < 1) fail(ErrorCode::RangeError, "empty histogram range");
        counts.assign(static_cast<std::size_t>(bins), 0);
    }

    void add(double v) {
        ++total;
        if (!(v >= lo) || !(v < hi)) {
            ++out_of_range;
            return;
        }
        std::size_t i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(counts.size()));
        if (i >= counts.size()) i = counts.size() - 1;
        ++counts[i];
    }

    std::uint64_t in_range() const { return total - out_of_range; }

    /* fraction of in-range samples within radius of any center */
    double mass_near(const std::vector<double>& centers, double radius) const {
        if (total == 0) return 0.0;
        const double w = (hi - lo) / static_cast<double>(counts.size());
        std::uint64_t hitcount = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            const double mid = lo + (static_cast<double>(i) + 0.5) * w;
            for (double c : centers)
                if (std::fabs(mid - c) <= radius) {
                    hitcount += counts[i];
                    break;
                }
        }
        return static_cast<double>(hitcount) / static_cast<double>(total);
    }
};

/* streaming occupation histogram of the scalar slow coordinate; the initial
   state is counted, so total == n_steps + 1 */
inline Histogram run_occupation_histogram(const SystemSpec& sys, double x0, Y0Policy y0,
                                          std::uint64_t n_steps, int bins, double lo, double hi,
                                          std::uint64_t seed, std::uint64_t stream = 0) {
    if (sys.drift.dim != 1) fail(ErrorCode::Unsupported, "occupation histogram is scalar-only");
    Histogram h(lo, hi, bins);
    RngStream rng(seed, stream);
    SimState s;
    s.x = SlowVec(x0);
    s.y = y0.pick(rng);
    h.add(s.x.scalar());
    for (std::uint64_t k = 0; k < n_steps; ++k) {
        s = step(sys, s, rng);
        h.add(s.x.scalar());
    }
    return h;
}

/* ---------------------------------------------------------- averaged flow */

/* classic RK4 on dz/dt = rule(z) in slow time; nodes every h plus the exact
   endpoint.  Blows up loudly instead of wandering off the guard interval. */
inline PiecewisePath integrate_averaged(const std::function<double(double)>& rule, double x0,
                                        double t_end, double h, double guard_lo,
                                        double guard_hi) {
    if (!(h > 0.0) || !(t_end > 0.0)) fail(ErrorCode::RangeError, "need positive horizon and step");
    PiecewisePath path;
    double t = 0.0, z = x0;
    path.times.push_back(t);
    path.points.push_back(SlowVec(z));
    while (t < t_end - 1e-15 * t_end) {
        const double dt = std::min(h, t_end - t);
        const double k1 = rule(z);
        const double k2 = rule(z + 0.5 * dt * k1);
        const double k3 = rule(z + 0.5 * dt * k2);
        const double k4 = rule(z + dt * k3);
        z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        if (!(z >= guard_lo) || !(z <= guard_hi) || !std::isfinite(z))
            fail(ErrorCode::BlowUp, "averaged flow left the guard interval at t=" + std::to_string(t));
        path.times.push_back(t);
        path.points.push_back(SlowVec(z));
    }
    path.validate();
    return path;
}

/* ------------------------------------------------------ averaging quality */

struct AveragingStat {
    double q50 = 0.0, q90 = 0.0, q99 = 0.0;  // quantiles of sup-distance to the averaged path
    double exceed_fraction = 0.0;            // fraction of replicas with sup-distance > delta
    int replicas = 0;
};

inline void parallel_replicas(int replicas, const std::function<void(int)>& body) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw < 2 || replicas < 4) {
        for (int r = 0; r < replicas; ++r) body(r);
        return;
    }
    const unsigned n_threads = std::min(hw, 8u);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int r = static_cast<int>(t); r < replicas; r += static_cast<int>(n_threads)) body(r);
        });
    }
    for (auto& th : pool) th.join();
}

/* sup-distance of coupled replicas to the RK4 averaged path over [0, T] */
inline AveragingStat averaging_error_stat(const SystemSpec& sys,
                                          const std::function<double(double)>& bbar_rule,
                                          double x0, Y0Policy y0, double T, int replicas,
                                          double delta, std::uint64_t seed) {
    if (sys.drift.dim != 1) fail(ErrorCode::Unsupported, "averaging check is scalar-only");
    const double eps = sys.epsilon;
    const std::uint64_t n = static_cast<std::uint64_t>(std::llround(T / eps));
    const double w = sys.slow_domain.width(0);
    PiecewisePath zbar = integrate_averaged(bbar_rule, x0, T, eps,
                                            sys.slow_domain.box[0][0] - w,
                                            sys.slow_domain.box[0][1] + w);
    std::vector<double> sup(static_cast<std::size_t>(replicas), 0.0);
    parallel_replicas(replicas, [&](int r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        SimState s;
        s.x = SlowVec(x0);
        s.y = y0.pick(rng);
        double worst = 0.0;
        for (std::uint64_t k = 1; k <= n; ++k) {
            s = step(sys, s, rng);
            const std::size_t zi = std::min(static_cast<std::size_t>(k), zbar.points.size() - 1);
            worst = std::max(worst, std::fabs(s.x.scalar() - zbar.points[zi].scalar()));
        }
        sup[static_cast<std::size_t>(r)] = worst;
    });
    std::vector<double> sorted = sup;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&sorted](double q) {
        const std::size_t i = std::min(static_cast<std::size_t>(q * static_cast<double>(sorted.size())),
                                       sorted.size() - 1);
        return sorted[i];
    };
    AveragingStat st;
    st.replicas = replicas;
    st.q50 = quantile(0.50);
    st.q90 = quantile(0.90);
    st.q99 = quantile(0.99);
    std::size_t over = 0;
    for (double v : sup)
        if (v > delta) ++over;
    st.exceed_fraction = static_cast<double>(over) / static_cast<double>(replicas);
    return st;
}

/* ------------------------------------------------------------- exit times */

struct ExitSample {
    double epsilon = 0.0;
    int replica = 0;
    double tau_slow = 0.0;  // epsilon * step count at exit (or at the cap)
    bool censored = false;
    double exit_x = 0.0;
};

/* first time the scalar slow coordinate leaves the open interval (lo, hi);
   capped runs return censored = true with tau equal to the cap */
inline ExitSample first_exit_time(const SystemSpec& sys, double x0, Y0Policy y0, double lo,
                                  double hi, double cap_slow_time, std::uint64_t seed,
                                  std::uint64_t stream) {
    ExitSample es;
    es.epsilon = sys.epsilon;
    es.replica = static_cast<int>(stream);
    if (!(lo < x0 && x0 < hi)) {  // degenerate start: already outside
        es.exit_x = x0;
        return es;
    }
    RngStream rng(seed, stream);
    SimState s;
    s.x = SlowVec(x0);
    s.y = y0.pick(rng);
    const std::uint64_t cap_steps =
        static_cast<std::uint64_t>(std::llround(cap_slow_time / sys.epsilon));
    for (std::uint64_t k = 1; k <= cap_steps; ++k) {
        s = step(sys, s, rng);
        const double x = s.x.scalar();
        if (x <= lo || x >= hi) {
            es.tau_slow = sys.epsilon * static_cast<double>(k);
            es.exit_x = x;
            return es;
        }
    }
    es.censored = true;
    es.tau_slow = cap_slow_time;
    es.exit_x = s.x.scalar();
    return es;
}

/* replica sweep over an epsilon ladder; replica r of ladder entry e owns
   stream e * replicas + r, so scheduling cannot change the output */
inline std::vector<ExitSample> exit_sweep(const SystemSpec& base, const std::vector<double>& eps,
                                          int replicas, double x0, Y0Policy y0, double lo,
                                          double hi, const std::function<double(double)>& cap_rule,
                                          std::uint64_t seed) {
    std::vector<ExitSample> all(eps.size() * static_cast<std::size_t>(replicas));
    for (std::size_t e = 0; e < eps.size(); ++e) {
        SystemSpec sys = base;
        sys.epsilon = eps[e];
        const double cap = cap_rule(eps[e]);
        parallel_replicas(replicas, [&, e, cap](int r) {
            const std::uint64_t stream = static_cast<std::uint64_t>(e) * static_cast<std::uint64_t>(replicas) +
                                         static_cast<std::uint64_t>(r);
            ExitSample es = first_exit_time(sys, x0, y0, lo, hi, cap, seed, stream);
            es.replica = r;
            all[e * static_cast<std::size_t>(replicas) + static_cast<std::size_t>(r)] = es;
        });
    }
    return all;
}

struct ExitFit {
    double slope = 0.0;      // d log(mean tau) / d (1/epsilon)
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<double> eps;
    std::vector<double> mean_tau;          // censored excluded
    std::vector<double> mean_tau_imputed;  // censored counted at the cap
    std::vector<double> censored_fraction;
};

/* least squares of log(mean exit time) against 1/epsilon */
inline ExitFit exit_scaling_fit(const std::vector<ExitSample>& samples,
                                double max_censored_fraction = 0.10) {
    ExitFit fit;
    std::vector<double> eps_seen;
    for (const auto& s : samples)
        if (std::find(eps_seen.begin(), eps_seen.end(), s.epsilon) == eps_seen.end())
            eps_seen.push_back(s.epsilon);
    std::sort(eps_seen.begin(), eps_seen.end());
    if (eps_seen.size() < 3)
        fail(ErrorCode::TooFewGroups, "scaling fit needs >= 3 distinct epsilon groups");
    for (double e : eps_seen) {
        double sum = 0.0, sum_imp = 0.0;
        int n = 0, n_all = 0, n_cens = 0;
        for (const auto& s : samples) {
            if (s.epsilon != e) continue;
            ++n_all;
            sum_imp += s.tau_slow;
            if (s.censored) {
                ++n_cens;
            } else {
                sum += s.tau_slow;
                ++n;
            }
        }
        const double cf = static_cast<double>(n_cens) / static_cast<double>(n_all);
        if (cf > max_censored_fraction)
            fail(ErrorCode::TooCensored, "censored fraction " + std::to_string(cf) +
                                             " at epsilon=" + std::to_string(e));
        if (n == 0) fail(ErrorCode::TooCensored, "no uncensored exits at epsilon=" + std::to_string(e));
        fit.eps.push_back(e);
        fit.mean_tau.push_back(sum / static_cast<double>(n));
        fit.mean_tau_imputed.push_back(sum_imp / static_cast<double>(n_all));
        fit.censored_fraction.push_back(cf);
    }
    const std::size_t m = fit.eps.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = 1.0 / fit.eps[i];
        const double yi = std::log(fit.mean_tau[i]);
        sx += xi;
        sy += yi;
        sxx += xi * xi;
        sxy += xi * yi;
        syy += yi * yi;
    }
    const double dn = static_cast<double>(m);
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    const double cxy = sxy - sx * sy / dn;
    if (!(vx > 0.0)) fail(ErrorCode::TooFewGroups, "epsilon ladder has no spread");
    fit.slope = cxy / vx;
    fit.intercept = (sy - fit.slope * sx) / dn;
    fit.r_squared = (vy > 0.0) ? (cxy * cxy) / (vx * vy) : 1.0;
    return fit;
}

/* -------------------------------------------------- attractor transitions */

struct TransitionEntry {
    int attractor = -1;
    double entry_time = 0.0;
    double sojourn = 0.0;  // time since the previous logged entry
};

struct TransitionLog {
    double delta = 0.0;
    int initial_attractor = -1;
    double initial_time = 0.0;
    std::vector<TransitionEntry> entries;  // consecutive attractor indices differ
    bool capped = false;

    void validate() const {
        int prev = initial_attractor;
        double t_prev = initial_time;
        for (const auto& e : entries) {
            if (e.attractor == prev) fail(ErrorCode::BadDomain, "repeated attractor in log");
            if (!(e.sojourn > 0.0)) fail(ErrorCode::BadDomain, "non-positive sojourn");
            if (!(e.entry_time > t_prev)) fail(ErrorCode::BadDomain, "entry times must increase");
            prev = e.attractor;
            t_prev = e.entry_time;
        }
    }

    /* slow time spent based at each attractor (sojourn-weighted) */
    std::vector<double> occupation_times(int n_attractors) const {
        std::vector<double> occ(static_cast<std::size_t>(n_attractors), 0.0);
        int prev = initial_attractor;
        for (const auto& e : entries) {
            occ[static_cast<std::size_t>(prev)] += e.sojourn;
            prev = e.attractor;
        }
        return occ;
    }
};

/* Double-layer attractor bookkeeping: after settling in the delta
   neighborhood of an attractor, the walker must first leave every 2*delta
   neighborhood before a delta re-entry counts; only entries into a
   different attractor's neighborhood are logged. */
inline TransitionLog transition_sequence(const SystemSpec& sys, double x0, Y0Policy y0,
                                         const std::vector<double>& attractors, double delta,
                                         int max_transitions, std::uint64_t cap_steps,
                                         std::uint64_t seed, std::uint64_t stream = 0) {
    if (sys.drift.dim != 1) fail(ErrorCode::Unsupported, "transition log is scalar-only");
    if (attractors.size() < 2) fail(ErrorCode::RangeError, "need >= 2 attractors");
    if (!(delta > 0.0)) fail(ErrorCode::RangeError, "delta must be positive");
    for (std::size_t i = 0; i < attractors.size(); ++i) {
        if (attractors[i] - 2.0 * delta < sys.slow_domain.box[0][0] ||
            attractors[i] + 2.0 * delta > sys.slow_domain.box[0][1])
            fail(ErrorCode::NeighborhoodsOverlap, "2-delta neighborhood leaves the domain");
        for (std::size_t j = i + 1; j < attractors.size(); ++j)
            if (std::fabs(attractors[i] - attractors[j]) <= 4.0 * delta)
                fail(ErrorCode::NeighborhoodsOverlap, "2-delta neighborhoods intersect");
    }
    auto inside = [&](double x, double r) {
        for (std::size_t j = 0; j < attractors.size(); ++j)
            if (std::fabs(x - attractors[j]) <= r) return static_cast<int>(j);
        return -1;
    };
    TransitionLog log;
    log.delta = delta;
    RngStream rng(seed, stream);
    SimState s;
    s.x = SlowVec(x0);
    s.y = y0.pick(rng);
    int settled = inside(x0, delta);
    bool armed = false;
    double t = 0.0;
    double last_entry_time = 0.0;
    if (settled >= 0) {
        log.initial_attractor = settled;
        log.initial_time = 0.0;
    }
    std::uint64_t k = 0;
    while (k < cap_steps) {
        if (settled >= 0 && static_cast<int>(log.entries.size()) >= max_transitions) break;
        s = step(sys, s, rng);
        ++k;
        t = sys.epsilon * static_cast<double>(k);
        const double x = s.x.scalar();
        if (settled < 0) {
            const int j = inside(x, delta);
            if (j >= 0) {
                settled = j;
                log.initial_attractor = j;
                log.initial_time = t;
                last_entry_time = t;
            }
            continue;
        }
        if (!armed) {
            if (inside(x, 2.0 * delta) < 0) armed = true;
            continue;
        }
        const int j = inside(x, delta);
        if (j < 0) continue;
        armed = false;
        if (j != settled) {
            TransitionEntry e;
            e.attractor = j;
            e.entry_time = t;
            e.sojourn = t - last_entry_time;
            log.entries.push_back(e);
            last_entry_time = t;
            settled = j;
        }
    }
    if (k >= cap_steps) log.capped = true;
    if (log.initial_attractor < 0)
        fail(ErrorCode::NoConvergence, "walker never settled in any attractor neighborhood");
    log.validate();
    return log;
}

/* fraction of pre-exit time spent inside V = (lo, hi) but outside the
   delta neighborhood of the attractor */
struct OccupationOutside {
    double fraction = 0.0;
    double tau_slow = 0.0;
    bool censored = false;
};

inline OccupationOutside occupation_fraction_outside(const SystemSpec& sys, double x0, Y0Policy y0,
                                                     double lo, double hi, double attractor,
                                                     double delta, double cap_slow_time,
                                                     std::uint64_t seed, std::uint64_t stream = 0) {
    if (!(lo < x0 && x0 < hi)) fail(ErrorCode::RangeError, "start point must lie inside (lo, hi)");
    RngStream rng(seed, stream);
    SimState s;
    s.x = SlowVec(x0);
    s.y = y0.pick(rng);
    const std::uint64_t cap_steps =
        static_cast<std::uint64_t>(std::llround(cap_slow_time / sys.epsilon));
    std::uint64_t outside = 0, steps = 0;
    OccupationOutside out;
    for (std::uint64_t k = 1; k <= cap_steps; ++k) {
        s = step(sys, s, rng);
        ++steps;
        const double x = s.x.scalar();
        if (x <= lo || x >= hi) {
            out.tau_slow = sys.epsilon * static_cast<double>(k);
            out.fraction = static_cast<double>(outside) / static_cast<double>(steps);
            return out;
        }
        if (std::fabs(x - attractor) > delta) ++outside;
    }
    out.censored = true;
    out.tau_slow = cap_slow_time;
    out.fraction = steps ? static_cast<double>(outside) / static_cast<double>(steps) : 0.0;
    return out;
}

} // namespace slowfast
