#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "rng.hpp"
#include "system.hpp"
#include "types.hpp"

namespace slowfast {

/* ------------------------------------------------------- averaged drift */

/* drift averaged against the frozen invariant measure of the fast driver */
inline SlowVec averaged_drift(const SystemSpec& sys, const SlowVec& x, int n_y = 512) {
    GridMeasure mu = stationary_density(sys.driver, x, n_y);
    SlowVec acc;
    if (sys.drift.dim == 2) acc = SlowVec(0.0, 0.0);
    for (int i = 0; i < mu.n; ++i) {
        const double w = mu.density[static_cast<std::size_t>(i)] / static_cast<double>(mu.n);
        acc += w * sys.drift.rule(x, static_cast<double>(i) / mu.n);
    }
    return acc;
}

/* ------------------------------------------------------------ rate model */

struct LegendreResult {
    ExtendedReal L;          // +inf sentinel means the velocity is unreachable
    double beta_star = 0.0;  // maximizer (boundary point when infinite)
};

/* Scalar-slow-state evaluator bundling the cumulant limit H, its Legendre
   transform L, averaged drift, and the zero-level momentum root.  Kernels,
   drift samples and warm-started eigenvectors are cached per frozen x. */
class RateModel {
public:
    RateModel(const SystemSpec& sys, int n_y = 512, double b_max = 6.0)
        : sys_(sys), n_y_(n_y), b_max_(b_max) {
        if (sys.drift.dim != 1)
            fail(ErrorCode::Unsupported, "rate evaluations are validated for d = 1 only");
    }

    const SystemSpec& system() const { return sys_; }
    int n_y() const { return n_y_; }
    double b_max() const { return b_max_; }

    /* cumulant limit at kernel state x, drift state xprime */
    double H(double x, double xprime, double beta) const {
        if (std::fabs(beta) > b_max_ * (1.0 + 1e-12))
            fail(ErrorCode::BetaOutOfBracket,
                 "|beta|=" + std::to_string(std::fabs(beta)) + " exceeds b_max=" + std::to_string(b_max_));
        Entry& e = entry(x);
        if (beta == 0.0) return 0.0;  // row-stochastic kernel: exact zero
        if (xprime == x) {
            auto tilt = [&e, beta](double y) { return beta * e.drift_at(y); };
            return e.kernel->tilted_log_eig(tilt, &e.warm).log_lambda;
        }
        auto tilt = [this, xprime, beta](double y) {
            return beta * sys_.drift.rule(SlowVec(xprime), y).scalar();
        };
        std::vector<double> warm;  // off-diagonal probes are rare; no warm start
        return e.kernel->tilted_log_eig(tilt, &warm).log_lambda;
    }

    double H(double x, double beta) const { return H(x, x, beta); }

    /* averaged drift at x (cached) */
    double bbar(double x) const {
        Entry& e = entry(x);
        if (!e.has_bbar) {
            GridMeasure mu = e.kernel->stationary();
            double acc = 0.0;
            for (int i = 0; i < n_y_; ++i)
                acc += mu.density[static_cast<std::size_t>(i)] * e.node_B[static_cast<std::size_t>(i)];
            e.bbar = acc / static_cast<double>(n_y_);
            e.has_bbar = true;
        }
        return e.bbar;
    }

    /* Legendre transform L(x, alpha) = sup_beta (alpha*beta - H(x, beta)),
       maximized by golden section over [-b_max, b_max].  If the maximizer
       pins to the boundary with outward slope, the value is reported as the
       +inf sentinel carrying the boundary value as a lower bound. */
    LegendreResult legendre(double x, double alpha) const {
        auto g = [this, x, alpha](double beta) { return alpha * beta - H(x, beta); };
        constexpr double kGolden = 0.6180339887498949;
        double lo = -b_max_, hi = b_max_;
        double c = hi - kGolden * (hi - lo);
        double d = lo + kGolden * (hi - lo);
        double gc = g(c), gd = g(d);
        const double tol = 1e-10;
        while (hi - lo > tol) {
            if (gc > gd) {
                hi = d;
                d = c;
                gd = gc;
                c = hi - kGolden * (hi - lo);
                gc = g(c);
            } else {
                lo = c;
                c = d;
                gc = gd;
                d = lo + kGolden * (hi - lo);
                gd = g(d);
            }
        }
        LegendreResult r;
        r.beta_star = 0.5 * (lo + hi);
        const double val = g(r.beta_star);
        const double edge = b_max_ - 16.0 * tol;
        if (std::fabs(r.beta_star) >= edge) {
            const double s = (r.beta_star > 0.0) ? 1.0 : -1.0;
            const double h = 64.0 * tol;
            const double gb = g(s * b_max_);
            if (gb - g(s * (b_max_ - h)) > 0.0) {
                r.beta_star = s * b_max_;
                r.L.finite = false;
                r.L.value = gb;  // lower bound only
                return r;
            }
        }
        r.L.value = std::max(val, 0.0);  // sup includes beta = 0 where g = 0
        r.L.finite = true;
        return r;
    }

    /* Cost rate for moving in direction `dir` (+1/-1) at x: the positive
       part of the level-zero momentum root.  Motion with the averaged flow
       costs nothing; against it, bisect H(x, dir*b) = 0 on b > 0. */
    double hj_root(double x, int dir) const {
        const double drift_along = static_cast<double>(dir) * bbar(x);
        if (drift_along >= 0.0) return 0.0;
        auto h = [this, x, dir](double b) { return H(x, static_cast<double>(dir) * b); };
        double b_hi = 1e-4;
        while (b_hi < b_max_ && h(b_hi) <= 0.0) b_hi *= 2.0;
        if (b_hi >= b_max_) {
            if (h(b_max_) <= 0.0)
                fail(ErrorCode::NoRoot, "no momentum root below b_max at x=" + std::to_string(x));
            b_hi = b_max_;
        }
        double b_lo = b_hi * 0.5;
        if (h(b_lo) > 0.0) b_lo = 0.0;
        for (int it = 0; it < 200 && b_hi - b_lo > 1e-13; ++it) {
            const double mid = 0.5 * (b_lo + b_hi);
            if (h(mid) > 0.0)
                b_hi = mid;
            else
                b_lo = mid;
        }
        return 0.5 * (b_lo + b_hi);
    }

    /* max |B(x, y_j)| over the fast grid; essential velocity scale at x */
    double local_drift_bound(double x) const {
        Entry& e = entry(x);
        double m = 0.0;
        for (double b : e.node_B) m = std::max(m, std::fabs(b));
        return m;
    }

    const FrozenKernel& kernel_at(double x) const { return *entry(x).kernel; }

    const std::vector<double>& drift_nodes(double x) const { return entry(x).node_B; }

private:
    struct Entry {
        std::unique_ptr<FrozenKernel> kernel;
        std::vector<double> node_B;        // B(x, y_j) on grid nodes
        std::vector<double> preimage_B;    // expanding kinds: B at branch preimages
        std::vector<double> preimage_y;
        std::vector<double> warm;
        double bbar = 0.0;
        bool has_bbar = false;
        int n = 0;

        double drift_at(double y) const {
            // grid nodes and cached preimages cover every tilt query that
            // tilted_log_eig makes when xprime == x
            const double t = y * n;
            const double r = t - std::floor(t);
            if (r == 0.0) return node_B[static_cast<std::size_t>(t) % node_B.size()];
            auto it = std::lower_bound(preimage_y.begin(), preimage_y.end(), y - 1e-15);
            if (it != preimage_y.end() && std::fabs(*it - y) < 1e-12)
                return preimage_B[static_cast<std::size_t>(it - preimage_y.begin())];
            return fallback(y);
        }
        std::function<double(double)> fallback;
    };

    Entry& entry(double x) const {
        const std::uint64_t key = std::bit_cast<std::uint64_t>(x);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        Entry e;
        e.kernel = std::make_unique<FrozenKernel>(FrozenKernel::build(sys_.driver, SlowVec(x), n_y_));
        e.n = n_y_;
        e.node_B.resize(static_cast<std::size_t>(n_y_));
        for (int j = 0; j < n_y_; ++j)
            e.node_B[static_cast<std::size_t>(j)] =
                sys_.drift.rule(SlowVec(x), static_cast<double>(j) / n_y_).scalar();
        if (sys_.driver.kind == DriverKind::DeterministicExpanding) {
            const int m = sys_.driver.m;
            const double shift = sys_.driver.coupling(SlowVec(x));
            std::vector<std::pair<double, double>> pts;
            pts.reserve(static_cast<std::size_t>(n_y_) * m);
            for (int i = 0; i < n_y_; ++i)
                for (int b = 0; b < m; ++b) {
                    const double v = wrap01((static_cast<double>(i) / n_y_ - shift + b) / m);
                    pts.emplace_back(v, sys_.drift.rule(SlowVec(x), v).scalar());
                }
            std::sort(pts.begin(), pts.end());
            e.preimage_y.reserve(pts.size());
            e.preimage_B.reserve(pts.size());
            for (auto& p : pts) {
                e.preimage_y.push_back(p.first);
                e.preimage_B.push_back(p.second);
            }
        }
        const SystemSpec* sys = &sys_;
        e.fallback = [sys, x](double y) { return sys->drift.rule(SlowVec(x), y).scalar(); };
        auto [pos, ok] = cache_.emplace(key, std::move(e));
        return pos->second;
    }

    SystemSpec sys_;  // by value: callers routinely pass freshly built specs
    int n_y_;
    double b_max_;
    mutable std::unordered_map<std::uint64_t, Entry> cache_;
};

/* spec-level wrappers for one-off evaluations */
inline double log_mgf_H(const SystemSpec& sys, double x, double xprime, double beta,
                        int n_y = 512) {
    RateModel m(sys, n_y);
    return m.H(x, xprime, beta);
}

inline LegendreResult legendre_L(const SystemSpec& sys, double x, double alpha, int n_y = 512,
                                 double b_max = 6.0) {
    RateModel m(sys, n_y, b_max);
    return m.legendre(x, alpha);
}

/* -------------------------------------------------------------- table */

struct RateTable {
    enum class Provenance { MarkovEigen, TransferPressure, IidClosedForm };

    double x = 0.0;
    double bbar = 0.0;
    std::vector<double> beta_grid;
    std::vector<double> H_values;
    std::vector<double> alpha_grid;
    std::vector<ExtendedReal> L_values;
    std::vector<double> beta_star;
    Provenance provenance = Provenance::MarkovEigen;
};

inline RateTable build_rate_table(const RateModel& model, double x, int n_beta = 241,
                                  int n_alpha = 241) {
    if (n_beta < 3 || n_beta % 2 == 0)
        fail(ErrorCode::RangeError, "beta grid must have odd size >= 3 so it contains 0");
    RateTable t;
    t.x = x;
    t.bbar = model.bbar(x);
    t.provenance = (model.system().driver.kind == DriverKind::DeterministicExpanding)
                       ? RateTable::Provenance::TransferPressure
                       : (model.kernel_at(x).uniform_rows() ? RateTable::Provenance::IidClosedForm
                                                            : RateTable::Provenance::MarkovEigen);
    const double b_max = model.b_max();
    t.beta_grid.resize(static_cast<std::size_t>(n_beta));
    t.H_values.resize(static_cast<std::size_t>(n_beta));
    for (int k = 0; k < n_beta; ++k) {
        const double beta = -b_max + 2.0 * b_max * static_cast<double>(k) / (n_beta - 1);
        t.beta_grid[static_cast<std::size_t>(k)] = beta;
        t.H_values[static_cast<std::size_t>(k)] = model.H(x, beta);
    }
    const double a_max = model.local_drift_bound(x) * 1.05 + 1e-9;
    t.alpha_grid.resize(static_cast<std::size_t>(n_alpha));
    t.L_values.resize(static_cast<std::size_t>(n_alpha));
    t.beta_star.resize(static_cast<std::size_t>(n_alpha));
    for (int k = 0; k < n_alpha; ++k) {
        const double alpha = -a_max + 2.0 * a_max * static_cast<double>(k) / (n_alpha - 1);
        t.alpha_grid[static_cast<std::size_t>(k)] = alpha;
        LegendreResult r = model.legendre(x, alpha);
        t.L_values[static_cast<std::size_t>(k)] = r.L;
        t.beta_star[static_cast<std::size_t>(k)] = r.beta_star;
    }
    return t;
}

/* structural checks every table must pass regardless of the system */
inline void validate_rate_table(const RateTable& t) {
    const std::size_t nb = t.beta_grid.size();
    if (nb < 3 || t.H_values.size() != nb) fail(ErrorCode::BadDomain, "beta grid size mismatch");
    const std::size_t mid = nb / 2;
    if (std::fabs(t.beta_grid[mid]) > 1e-12 || std::fabs(t.H_values[mid]) > 1e-10)
        fail(ErrorCode::BadDomain, "H(0) must vanish on the grid");
    for (std::size_t k = 1; k + 1 < nb; ++k) {
        const double midpoint = 0.5 * (t.H_values[k - 1] + t.H_values[k + 1]);
        if (t.H_values[k] > midpoint + 1e-9)
            fail(ErrorCode::BadDomain, "H fails midpoint convexity at index " + std::to_string(k));
    }
    for (std::size_t k = 0; k < t.L_values.size(); ++k)
        if (t.L_values[k].finite && t.L_values[k].value < -1e-12)
            fail(ErrorCode::BadDomain, "negative rate value at index " + std::to_string(k));
}

/* ------------------------------------------------------- twisted measure */

struct TwistedMeasure {
    GridMeasure mu;
    double mean_drift = 0.0;
    double H = 0.0;
    double I_value = 0.0;  // relative-entropy rate of mu: <beta, mean_drift> - H
};

/* change of measure induced by the principal eigenvectors of the tilted
   kernel; defined for Markov drivers */
inline TwistedMeasure twisted_measure(const RateModel& model, double x, double beta) {
    const FrozenKernel& k = model.kernel_at(x);
    if (!k.markov())
        fail(ErrorCode::Unsupported, "twisted measure needs a Markov driver");
    const std::vector<double>& B = model.drift_nodes(x);
    auto tilt = [&B, &k, beta](double y) {
        const std::size_t j = static_cast<std::size_t>(y * k.n() + 0.5) % B.size();
        return beta * B[j];
    };
    TwistedMeasure out;
    std::vector<double> right;
    out.H = k.tilted_log_eig(tilt, &right).log_lambda;
    std::vector<double> left = k.tilted_left_eig(tilt);
    const int n = k.n();
    out.mu.n = n;
    out.mu.density.resize(static_cast<std::size_t>(n));
    double mass = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = left[static_cast<std::size_t>(i)] * right[static_cast<std::size_t>(i)];
        out.mu.density[static_cast<std::size_t>(i)] = d;
        mass += d;
    }
    if (!(mass > 0.0)) fail(ErrorCode::NoConvergence, "twisted measure lost positivity");
    for (auto& d : out.mu.density) d *= static_cast<double>(n) / mass;
    for (int i = 0; i < n; ++i)
        out.mean_drift += out.mu.density[static_cast<std::size_t>(i)] * B[static_cast<std::size_t>(i)];
    out.mean_drift /= static_cast<double>(n);
    out.I_value = beta * out.mean_drift - out.H;
    return out;
}

/* -------------------------------------------- occupation rate functional */

struct DvResult {
    double I = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    std::vector<double> phi;  // maximizing log test function, phi[0] == 0
};

/* Occupation-measure rate of mu under the frozen Markov kernel:
       I(mu) = sup_{phi} Integral(phi - log(P e^phi)) dmu,
   solved by gradient ascent with backtracking; the additive gauge is fixed
   by phi[0] = 0.  The objective is concave, so every iterate is a valid
   lower bound.  The exp shift by max(phi) cancels in every ratio below. */
inline DvResult dv_rate_I(const FrozenKernel& kernel, const GridMeasure& mu,
                          double grad_tol = 1e-8, int max_iter = 200000) {
    if (!kernel.markov()) fail(ErrorCode::Unsupported, "occupation rate needs a Markov kernel");
    if (mu.n != kernel.n()) fail(ErrorCode::BadDomain, "measure grid does not match kernel grid");
    const int n = kernel.n();
    const std::size_t ns = static_cast<std::size_t>(n);
    std::vector<double> w(ns);
    for (std::size_t i = 0; i < ns; ++i) w[i] = mu.density[i] / static_cast<double>(n);

    std::vector<double> ephi(ns), pe(ns);
    auto objective = [&](const std::vector<double>& p, std::vector<double>& ephi_out,
                         std::vector<double>& pe_out) {
        double pmax = -1e300;
        for (std::size_t i = 0; i < ns; ++i) pmax = std::max(pmax, p[i]);
        for (std::size_t i = 0; i < ns; ++i) ephi_out[i] = std::exp(p[i] - pmax);
        pe_out = kernel.koopman_apply(ephi_out);
        double g = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            if (!(pe_out[i] > 0.0)) return -1e300;
            g += w[i] * (p[i] - (std::log(pe_out[i]) + pmax));
        }
        return g;
    };

    std::vector<double> phi(ns, 0.0), grad(ns), trial(ns), ephi_t(ns), pe_t(ns), q(ns);
    DvResult out;
    double G = objective(phi, ephi, pe);
    double step = 1.0;
    for (int it = 1; it <= max_iter; ++it) {
        out.iterations = it;
        for (std::size_t i = 0; i < ns; ++i) q[i] = w[i] / pe[i];
        const std::vector<double> back = kernel.koopman_adjoint_apply(q);
        double gn2 = 0.0;
        for (std::size_t k = 0; k < ns; ++k) {
            grad[k] = w[k] - ephi[k] * back[k];
            gn2 += grad[k] * grad[k];
        }
        out.grad_norm = std::sqrt(gn2);
        if (out.grad_norm < grad_tol) break;
        bool accepted = false;
        for (int half = 0; half < 80; ++half) {
            for (std::size_t k = 0; k < ns; ++k) trial[k] = phi[k] + step * grad[k];
            const double gauge = trial[0];
            for (auto& t : trial) t -= gauge;
            const double Gt = objective(trial, ephi_t, pe_t);
            if (Gt >= G + 1e-4 * step * gn2) {
                phi.swap(trial);
                ephi.swap(ephi_t);
                pe.swap(pe_t);
                G = Gt;
                step = std::min(step * 1.3, 1e8);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // step underflow: gradient direction exhausted
    }
    if (out.grad_norm >= std::max(grad_tol, 1e-6))
        fail(ErrorCode::NoConvergence,
             "occupation-rate ascent stalled at gradient norm " + std::to_string(out.grad_norm));
    out.phi = phi;
    out.I = G;
    return out;
}

/* lower bound from one fixed positive test function u (log scale input) */
inline double dv_lower_bound(const FrozenKernel& kernel, const GridMeasure& mu,
                             const std::vector<double>& phi) {
    const int n = kernel.n();
    std::vector<double> ephi(static_cast<std::size_t>(n));
    double pmax = -1e300;
    for (double p : phi) pmax = std::max(pmax, p);
    for (int i = 0; i < n; ++i) ephi[static_cast<std::size_t>(i)] = std::exp(phi[static_cast<std::size_t>(i)] - pmax);
    const std::vector<double> pe = kernel.koopman_apply(ephi);
    double g = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = mu.density[static_cast<std::size_t>(i)] / static_cast<double>(n);
        g += w * (phi[static_cast<std::size_t>(i)] - (std::log(pe[static_cast<std::size_t>(i)]) + pmax));
    }
    return g;
}

/* ------------------------------------------------------------ path action */

struct ActionValue {
    ExtendedReal total;
    std::vector<double> segments;  // per-segment contributions (finite ones)
};

/* action of a polygonal slow path: midpoint rule per segment,
   segment cost = dt * L(x_mid, dx/dt) */
inline ActionValue path_action(const RateModel& model, const PiecewisePath& path) {
    path.validate();
    const auto& box = model.system().slow_domain.box[0];
    ActionValue av;
    av.total.value = 0.0;
    av.total.finite = true;
    for (std::size_t k = 1; k < path.times.size(); ++k) {
        const double dt = path.times[k] - path.times[k - 1];
        const double x0 = path.points[k - 1].scalar();
        const double x1 = path.points[k].scalar();
        if (x0 < box[0] || x0 > box[1] || x1 < box[0] || x1 > box[1])
            fail(ErrorCode::OutOfTableRange, "path leaves the slow domain at segment " + std::to_string(k));
        const double alpha = (x1 - x0) / dt;
        LegendreResult r = model.legendre(0.5 * (x0 + x1), alpha);
        const double seg = dt * r.L.value;
        av.segments.push_back(seg);
        av.total.value += seg;
        if (!r.L.finite) av.total.finite = false;  // value degrades to a lower bound
    }
    return av;
}

/* ------------------------------------------ Monte Carlo cumulant estimate */

struct McLogMgf {
    double estimate = 0.0;   // (1/k) log mean exp(beta * S_k)
    double std_error = 0.0;  // delta-method error of the estimate
    int k = 0;
    int replicas = 0;
};

/* simulates the fast chain frozen at slow state x and estimates the
   k-step cumulant; the driver sees the same x at every step */
inline McLogMgf mc_log_mgf(const SystemSpec& sys, double x, double beta, int k, int replicas,
                           std::uint64_t seed) {
    if (k < 1 || replicas < 2) fail(ErrorCode::RangeError, "need k >= 1 and >= 2 replicas");
    std::vector<double> S(static_cast<std::size_t>(replicas));
    const SlowVec xv(x);
    for (int r = 0; r < replicas; ++r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        double y = rng.uniform01();
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
            y = advance_fast(sys.driver, xv, y, rng);
            acc += sys.drift.rule(xv, y).scalar();
        }
        S[static_cast<std::size_t>(r)] = beta * acc;
    }
    double smax = -1e300;
    for (double s : S) smax = std::max(smax, s);
    double e1 = 0.0, e2 = 0.0;
    for (double s : S) {
        e1 += std::exp(s - smax);
        e2 += std::exp(2.0 * (s - smax));
    }
    const double n = static_cast<double>(replicas);
    McLogMgf out;
    out.k = k;
    out.replicas = replicas;
    out.estimate = (smax + std::log(e1 / n)) / static_cast<double>(k);
    // Var(W)/mean(W)^2 estimated by n*e2/e1^2 - 1
    const double rel_var = std::max(n * e2 / (e1 * e1) - 1.0, 0.0);
    out.std_error = std::sqrt(rel_var / n) / static_cast<double>(k);
    return out;
}

} // namespace slowfast
