#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace slowfast {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/* ---------------------------------------------------------------- drift */

/* Slow increment rule: next_x = x + epsilon * rule(x, y).  `bound` is the
   declared sup-norm bound K on |rule| over slow_domain x circle; `lipschitz`
   is declared metadata (not probed). */
struct DriftSpec {
    std::function<SlowVec(const SlowVec&, double)> rule;
    int dim = 1;
    double bound = 0.0;
    double lipschitz = 0.0;
};

/* ----------------------------------------------------------- fast driver */

enum class DriverKind {
    DeterministicExpanding,  // y' = m*y + c(x) mod 1
    AdditiveMarkov,          // y' = y + c(x) + xi mod 1, xi ~ density table
    KernelGrid,              // y on an n-point grid, row-stochastic kernel
};

struct FastDriverSpec {
    DriverKind kind;

    // DeterministicExpanding
    int m = 0;

    // AdditiveMarkov: piecewise-constant density on n equal bins of [0,1)
    std::vector<double> noise_density;

    // KernelGrid: row-major n x n row-stochastic matrix for frozen slow state
    int n_grid = 0;
    std::function<std::vector<double>(const SlowVec&)> kernel_rule;

    // all kinds: slow-to-fast coupling
    std::function<double(const SlowVec&)> coupling;

    // cumulative bin masses for noise sampling, built on construction
    std::vector<double> noise_cdf;
};

inline FastDriverSpec make_expanding_driver(int m, std::function<double(const SlowVec&)> coupling) {
    if (m < 2) fail(ErrorCode::RangeError, "expanding branch count m must be >= 2");
    FastDriverSpec d;
    d.kind = DriverKind::DeterministicExpanding;
    d.m = m;
    d.coupling = std::move(coupling);
    return d;
}

inline FastDriverSpec make_additive_driver(std::vector<double> density,
                                           std::function<double(const SlowVec&)> coupling) {
    if (density.empty()) fail(ErrorCode::RangeError, "noise density table is empty");
    for (double q : density)
        if (q < 0.0) fail(ErrorCode::NegativeDensity, "noise density has a negative bin");
    FastDriverSpec d;
    d.kind = DriverKind::AdditiveMarkov;
    d.noise_density = std::move(density);
    d.coupling = std::move(coupling);
    const std::size_t n = d.noise_density.size();
    d.noise_cdf.resize(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += d.noise_density[i] / static_cast<double>(n);
        d.noise_cdf[i] = acc;
    }
    return d;
}

inline FastDriverSpec make_kernel_driver(int n_grid,
                                         std::function<std::vector<double>(const SlowVec&)> rule,
                                         std::function<double(const SlowVec&)> coupling) {
    if (n_grid < 2) fail(ErrorCode::RangeError, "kernel grid needs >= 2 nodes");
    FastDriverSpec d;
    d.kind = DriverKind::KernelGrid;
    d.n_grid = n_grid;
    d.kernel_rule = std::move(rule);
    d.coupling = coupling ? std::move(coupling) : [](const SlowVec&) { return 0.0; };
    return d;
}

/* draw one noise increment from the piecewise-constant density */
inline double sample_noise(const FastDriverSpec& d, RngStream& rng) {
    const std::size_t n = d.noise_density.size();
    if (n == 1) return rng.uniform01();
    const double u = rng.uniform01();
    auto it = std::upper_bound(d.noise_cdf.begin(), d.noise_cdf.end(), u);
    std::size_t i = static_cast<std::size_t>(it - d.noise_cdf.begin());
    if (i >= n) i = n - 1;
    const double lo = (i == 0) ? 0.0 : d.noise_cdf[i - 1];
    const double mass = d.noise_cdf[i] - lo;
    const double frac = (mass > 0.0) ? (u - lo) / mass : 0.5;
    return (static_cast<double>(i) + frac) / static_cast<double>(n);
}

/* one fast-layer update at frozen slow state (the caller passes the
   pre-step slow state; the slow and fast updates commute that way) */
inline double advance_fast(const FastDriverSpec& d, const SlowVec& x, double y, RngStream& rng) {
    switch (d.kind) {
        case DriverKind::DeterministicExpanding:
            return wrap01(static_cast<double>(d.m) * y + d.coupling(x));
        case DriverKind::AdditiveMarkov:
            return wrap01(y + d.coupling(x) + sample_noise(d, rng));
        case DriverKind::KernelGrid: {
            const int n = d.n_grid;
            int i = static_cast<int>(std::floor(y * n + 0.5)) % n;
            if (i < 0) i += n;
            const std::vector<double> rows = d.kernel_rule(x);
            if (rows.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
                fail(ErrorCode::RangeError, "kernel rule returned wrong matrix size");
            const double u = rng.uniform01();
            double acc = 0.0;
            int j = n - 1;
            for (int k = 0; k < n; ++k) {
                acc += rows[static_cast<std::size_t>(i) * n + k];
                if (u < acc) { j = k; break; }
            }
            return static_cast<double>(j) / static_cast<double>(n);
        }
    }
    fail(ErrorCode::RangeError, "unhandled driver kind");
}

/* ---------------------------------------------------------------- system */

/* axis-aligned box for the slow state */
struct SlowDomain {
    std::vector<std::array<double, 2>> box;  // per-dimension {lo, hi}

    bool contains(const SlowVec& x) const {
        for (int i = 0; i < x.dim(); ++i) {
            const auto& b = box[static_cast<std::size_t>(i)];
            if (x[i] < b[0] || x[i] > b[1]) return false;
        }
        return true;
    }
    double width(int i) const {
        const auto& b = box[static_cast<std::size_t>(i)];
        return b[1] - b[0];
    }
};

struct SystemSpec {
    std::string name;
    DriftSpec drift;
    FastDriverSpec driver;
    double epsilon = 0.0;
    SlowDomain slow_domain;
};

/* Triple-scale system: slowest layer W, intermediate X, fast Y, all scalar.
   delta is derived from (epsilon, rho) through rho = -epsilon*ln(delta*epsilon),
   so the slowest layer moves on the e^{rho/epsilon} time scale. */
struct ThreeScaleSpec {
    std::string name;
    std::function<double(double, double, double)> slowest_rate;  // A(w, x, y)
    std::function<double(double, double, double)> slow_rate;     // B(w, x, y)
    FastDriverSpec driver;  // coupling receives SlowVec{w, x}
    double epsilon = 0.0;
    double delta = 0.0;
    double rho = 0.0;
};

inline double delta_from_rho(double epsilon, double rho) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorCode::BadEpsilon, "epsilon outside (0,1)");
    if (!(rho > 0.0)) fail(ErrorCode::RangeError, "rho must be positive");
    return std::exp(-rho / epsilon) / epsilon;
}

/* ------------------------------------------------------------ validation */

inline void validate_driver(const FastDriverSpec& d, const SlowDomain& domain) {
    switch (d.kind) {
        case DriverKind::DeterministicExpanding:
            if (d.m < 2) fail(ErrorCode::RangeError, "expanding branch count m must be >= 2");
            break;
        case DriverKind::AdditiveMarkov: {
            double mean = 0.0;
            for (double q : d.noise_density) {
                if (q < 0.0) fail(ErrorCode::NegativeDensity, "noise density has a negative bin");
                mean += q;
            }
            mean /= static_cast<double>(d.noise_density.size());
            if (std::fabs(mean - 1.0) > 1e-9)
                fail(ErrorCode::NonStochasticRow, "noise density does not integrate to 1");
            break;
        }
        case DriverKind::KernelGrid: {
            // probe the kernel rule at a few slow states across the domain
            const int n = d.n_grid;
            for (int p = 0; p <= 4; ++p) {
                SlowVec x;
                const double s = static_cast<double>(p) / 4.0;
                if (domain.box.size() == 2) {
                    x = SlowVec(domain.box[0][0] + s * (domain.box[0][1] - domain.box[0][0]),
                                domain.box[1][0] + s * (domain.box[1][1] - domain.box[1][0]));
                } else {
                    x = SlowVec(domain.box[0][0] + s * (domain.box[0][1] - domain.box[0][0]));
                }
                const std::vector<double> rows = d.kernel_rule(x);
                if (rows.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
                    fail(ErrorCode::RangeError, "kernel rule returned wrong matrix size");
                for (int i = 0; i < n; ++i) {
                    double rs = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double v = rows[static_cast<std::size_t>(i) * n + j];
                        if (v < -1e-15) fail(ErrorCode::NegativeDensity, "kernel entry below zero");
                        rs += v;
                    }
                    if (std::fabs(rs - 1.0) > 1e-9)
                        fail(ErrorCode::NonStochasticRow,
                             "kernel row " + std::to_string(i) + " sums to " + std::to_string(rs));
                }
            }
            break;
        }
    }
}

/* Probe |B| <= K on a 64x64 (per slow dimension x circle) grid and check
   the basic scalar constraints.  Throws on the first violation. */
inline void validate_system(const SystemSpec& sys) {
    if (!(sys.epsilon > 0.0 && sys.epsilon < 1.0))
        fail(ErrorCode::BadEpsilon, "epsilon outside (0,1)");
    if (sys.drift.dim < 1 || sys.drift.dim > 2)
        fail(ErrorCode::BadDomain, "slow dimension must be 1 or 2");
    if (sys.slow_domain.box.size() != static_cast<std::size_t>(sys.drift.dim))
        fail(ErrorCode::BadDomain, "slow_domain dimension mismatch");
    for (const auto& b : sys.slow_domain.box)
        if (!(b[0] < b[1])) fail(ErrorCode::BadDomain, "slow_domain box is empty");

    validate_driver(sys.driver, sys.slow_domain);

    constexpr int kProbe = 64;
    const double tol = sys.drift.bound * 1e-9 + 1e-12;
    auto probe_x = [&](int i, int dim_index) {
        const auto& b = sys.slow_domain.box[static_cast<std::size_t>(dim_index)];
        return b[0] + (b[1] - b[0]) * static_cast<double>(i) / (kProbe - 1);
    };
    const int nx1 = (sys.drift.dim == 2) ? kProbe : 1;
    for (int i0 = 0; i0 < kProbe; ++i0) {
        for (int i1 = 0; i1 < nx1; ++i1) {
            SlowVec x = (sys.drift.dim == 2) ? SlowVec(probe_x(i0, 0), probe_x(i1, 1))
                                             : SlowVec(probe_x(i0, 0));
            for (int k = 0; k < kProbe; ++k) {
                const double y = static_cast<double>(k) / kProbe;
                const SlowVec b = sys.drift.rule(x, y);
                if (b.norm() > sys.drift.bound + tol)
                    fail(ErrorCode::BoundViolated,
                         "drift norm " + std::to_string(b.norm()) + " exceeds bound " +
                             std::to_string(sys.drift.bound) + " at x[0]=" + std::to_string(x[0]) +
                             " y=" + std::to_string(y));
            }
        }
    }
}

/* -------------------------------------------------------------- builtins */

namespace detail {

inline double quintic_sym(double x) { return x * (x * x - 4.0) * (1.0 - x * x); }
inline double quintic_asym(double x) { return x * (x * x - 4.0) * (1.0 - x) * (1.5 + x); }

/* The expanding variants carry the original amplitude-50 forcing used for
   the long histogram runs.  The markov variants are the metastability
   work-horses: their forcing is scaled down (amplitude 5) so the barrier
   heights R land in a range where exits are simulable at desk scale, and
   epsilon defaults to a matching 0.01. */
inline SystemSpec hopping_system(const std::string& name, bool symmetric, bool markov) {
    SystemSpec s;
    s.name = name;
    const auto poly = symmetric ? quintic_sym : quintic_asym;
    const double amp = markov ? 5.0 : 50.0;
    s.drift.rule = [poly, amp](const SlowVec& x, double y) {
        return SlowVec(poly(x.scalar()) + amp * std::sin(kTwoPi * y));
    };
    s.drift.dim = 1;
    s.drift.bound = (symmetric ? 125.0 : 140.0) + amp + 5.0;
    s.drift.lipschitz = 500.0;
    auto coupling = [](const SlowVec& x) { return x.scalar(); };
    s.driver = markov ? make_additive_driver({1.0}, coupling) : make_expanding_driver(3, coupling);
    s.epsilon = markov ? 1e-2 : 1e-3;
    s.slow_domain.box = {{-3.0, 3.0}};
    return s;
}

} // namespace detail

/* Oscillator with linear restoring drift and unit sine fluctuation over an
   i.i.d.-uniform fast chain; its cumulant limits have a closed Bessel form,
   which makes it the cross-check system for the rate machinery. */
inline SystemSpec make_iid_bessel(double kappa, double c, double epsilon,
                                  double half_width) {
    SystemSpec s;
    s.name = "iid-bessel";
    s.drift.rule = [kappa, c](const SlowVec& x, double y) {
        return SlowVec(-kappa * x.scalar() + c * std::sin(kTwoPi * y));
    };
    s.drift.dim = 1;
    s.drift.bound = kappa * half_width + c + 0.5;
    s.drift.lipschitz = kappa + kTwoPi * c;
    s.driver = make_additive_driver({1.0}, [](const SlowVec& x) { return x.scalar(); });
    s.epsilon = epsilon;
    s.slow_domain.box = {{-half_width, half_width}};
    return s;
}

struct BuiltinSystem {
    std::optional<SystemSpec> two_scale;
    std::optional<ThreeScaleSpec> triple;

    const SystemSpec& system() const {
        if (!two_scale) fail(ErrorCode::UnknownName, "builtin is a three-scale triple");
        return *two_scale;
    }
    const ThreeScaleSpec& three_scale() const {
        if (!triple) fail(ErrorCode::UnknownName, "builtin is a two-scale system");
        return *triple;
    }
};

inline ThreeScaleSpec make_paper_three_scale(double epsilon, double rho) {
    ThreeScaleSpec t;
    t.name = "three-scale";
    t.slowest_rate = [](double w, double x, double y) {
        return x * std::cos(kTwoPi * w) + std::sin(kTwoPi * y);
    };
    t.slow_rate = [](double w, double x, double y) {
        return (x - w) * (1.0 - x * x) + std::sin(kTwoPi * y);
    };
    t.driver = make_expanding_driver(3, [](const SlowVec& wx) { return wx[0] + wx[1]; });
    t.epsilon = epsilon;
    t.rho = rho;
    t.delta = delta_from_rho(epsilon, rho);
    return t;
}

inline BuiltinSystem make_builtin(const std::string& name) {
    BuiltinSystem b;
    if (name == "expanding-sym") {
        b.two_scale = detail::hopping_system(name, true, false);
    } else if (name == "expanding-asym") {
        b.two_scale = detail::hopping_system(name, false, false);
    } else if (name == "markov-sym") {
        b.two_scale = detail::hopping_system(name, true, true);
    } else if (name == "markov-asym") {
        b.two_scale = detail::hopping_system(name, false, true);
    } else if (name == "zero-drift-doubling") {
        SystemSpec s;
        s.name = name;
        s.drift.rule = [](const SlowVec&, double y) { return SlowVec(std::sin(kTwoPi * y)); };
        s.drift.dim = 1;
        s.drift.bound = 1.5;
        s.drift.lipschitz = kTwoPi;
        s.driver = make_expanding_driver(2, [](const SlowVec& x) { return x.scalar(); });
        s.epsilon = 1e-3;
        s.slow_domain.box = {{-2.0, 2.0}};
        b.two_scale = s;
    } else if (name == "iid-bessel") {
        b.two_scale = make_iid_bessel(0.85, 1.0, 0.05, 1.0);
    } else if (name == "three-scale") {
        b.triple = make_paper_three_scale(0.02, 0.10);
    } else {
        fail(ErrorCode::UnknownName, "no builtin named '" + name + "'");
    }
    return b;
}

} // namespace slowfast
