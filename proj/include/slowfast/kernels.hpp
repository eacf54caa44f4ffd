#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "system.hpp"
#include "types.hpp"

namespace slowfast {

/* probability density sampled on the uniform circle grid y_i = i/n;
   masses are density/n and sum to 1 */
struct GridMeasure {
    int n = 0;
    std::vector<double> density;

    void validate() const {
        if (n < 2 || density.size() != static_cast<std::size_t>(n))
            fail(ErrorCode::BadDomain, "grid measure size mismatch");
        double mass = 0.0;
        for (double d : density) {
            if (d < -1e-12) fail(ErrorCode::NegativeDensity, "grid measure has negative density");
            mass += d;
        }
        mass /= static_cast<double>(n);
        if (std::fabs(mass - 1.0) > 1e-9)
            fail(ErrorCode::NonStochasticRow, "grid measure mass " + std::to_string(mass));
    }

    double mean_of(const std::function<double(double)>& f) const {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += density[static_cast<std::size_t>(i)] * f(static_cast<double>(i) / n);
        return acc / static_cast<double>(n);
    }
};

inline GridMeasure uniform_measure(int n) {
    GridMeasure mu;
    mu.n = n;
    mu.density.assign(static_cast<std::size_t>(n), 1.0);
    return mu;
}

namespace detail {

/* periodic Catmull-Rom weights; sum to 1, so constants interpolate exactly */
struct CubicStencil {
    int idx[4];
    double w[4];
};

inline CubicStencil cubic_stencil(double pos, int n) {
    double t = pos * static_cast<double>(n);
    double fi = std::floor(t);
    double s = t - fi;
    int i1 = static_cast<int>(fi) % n;
    if (i1 < 0) i1 += n;
    CubicStencil st;
    st.idx[0] = (i1 + n - 1) % n;
    st.idx[1] = i1;
    st.idx[2] = (i1 + 1) % n;
    st.idx[3] = (i1 + 2) % n;
    const double s2 = s * s, s3 = s2 * s;
    st.w[0] = 0.5 * (-s3 + 2.0 * s2 - s);
    st.w[1] = 0.5 * (3.0 * s3 - 5.0 * s2 + 2.0);
    st.w[2] = 0.5 * (-3.0 * s3 + 4.0 * s2 + s);
    st.w[3] = 0.5 * (s3 - s2);
    return st;
}

} // namespace detail

struct EigReport {
    double log_lambda = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/* Fast driver frozen at one slow state and discretized on an n-point circle
   grid.  Markov kinds become a row-stochastic matrix (the exact object the
   downstream convex-duality identities hold for); the expanding kind keeps
   its exact preimage branches and interpolates grid functions cubically. */
class FrozenKernel {
public:
    static FrozenKernel build(const FastDriverSpec& d, const SlowVec& x, int n_y) {
        if (n_y < 8) fail(ErrorCode::RangeError, "fast grid needs >= 8 nodes");
        FrozenKernel k;
        k.n_ = n_y;
        k.kind_ = d.kind;
        switch (d.kind) {
            case DriverKind::DeterministicExpanding:
                k.m_ = d.m;
                k.shift_ = d.coupling(x);
                break;
            case DriverKind::AdditiveMarkov: {
                k.shift_ = d.coupling(x);
                bool uniform = true;
                for (double q : d.noise_density)
                    if (std::fabs(q - d.noise_density[0]) > 1e-15) uniform = false;
                k.uniform_rows_ = uniform;
                if (!uniform) k.fill_additive_matrix(d);
                break;
            }
            case DriverKind::KernelGrid: {
                if (d.n_grid != n_y)
                    fail(ErrorCode::RangeError,
                         "kernel grid driver is fixed at n=" + std::to_string(d.n_grid));
                k.P_ = d.kernel_rule(x);
                if (k.P_.size() != static_cast<std::size_t>(n_y) * static_cast<std::size_t>(n_y))
                    fail(ErrorCode::RangeError, "kernel rule returned wrong matrix size");
                k.normalize_rows();
                break;
            }
        }
        return k;
    }

    int n() const { return n_; }
    DriverKind kind() const { return kind_; }
    bool markov() const { return kind_ != DriverKind::DeterministicExpanding; }
    bool uniform_rows() const { return kind_ == DriverKind::AdditiveMarkov && uniform_rows_; }

    double node(int i) const { return static_cast<double>(i) / n_; }

    /* log of the principal eigenvalue of the operator tilted by exp(tilt).
       Markov: K[i][j] = P[i][j] * exp(tilt(y_j)).
       Expanding: (L u)(y_i) = (1/m) * sum over preimages v of exp(tilt(v)) u(v),
       with preimages v = (y_i - shift + b)/m, b = 0..m-1.
       `warm` carries the eigenvector between calls at nearby tilts. */
    EigReport tilted_log_eig(const std::function<double(double)>& tilt,
                             std::vector<double>* warm = nullptr,
                             double tol = 1e-12, int max_iter = 20000) const {
        if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            // rank-one kernel: closed sum, eigenfunction constant
            double tmax = -1e300;
            std::vector<double> t(static_cast<std::size_t>(n_));
            for (int j = 0; j < n_; ++j) {
                t[static_cast<std::size_t>(j)] = tilt(node(j));
                tmax = std::max(tmax, t[static_cast<std::size_t>(j)]);
            }
            double acc = 0.0;
            for (int j = 0; j < n_; ++j) acc += std::exp(t[static_cast<std::size_t>(j)] - tmax);
            if (warm) warm->assign(static_cast<std::size_t>(n_), 1.0);
            EigReport r;
            r.log_lambda = tmax + std::log(acc / static_cast<double>(n_));
            r.iterations = 1;
            r.residual = 0.0;
            return r;
        }
        if (kind_ == DriverKind::DeterministicExpanding)
            return power_iterate(make_expanding_apply(tilt), warm, tol, max_iter);
        return power_iterate(make_markov_apply(tilt, /*adjoint=*/false), warm, tol, max_iter);
    }

    /* left principal eigenvector of the tilted Markov kernel (unnormalized);
       the expanding kind has no grid transition matrix to transpose */
    std::vector<double> tilted_left_eig(const std::function<double(double)>& tilt,
                                        double tol = 1e-12, int max_iter = 20000) const {
        if (!markov())
            fail(ErrorCode::Unsupported, "left eigenvector needs a Markov kernel");
        if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            std::vector<double> l(static_cast<std::size_t>(n_));
            double tmax = -1e300;
            for (int j = 0; j < n_; ++j) tmax = std::max(tmax, tilt(node(j)));
            for (int j = 0; j < n_; ++j) l[static_cast<std::size_t>(j)] = std::exp(tilt(node(j)) - tmax);
            return l;
        }
        std::vector<double> v;
        power_iterate(make_markov_apply(tilt, /*adjoint=*/true), &v, tol, max_iter);
        return v;
    }

    /* expectation operator (P u)(y) = E[u(Y') | Y = y]; Markov kinds only */
    std::vector<double> koopman_apply(const std::vector<double>& u) const {
        if (!markov()) fail(ErrorCode::Unsupported, "Koopman apply needs a Markov kernel");
        std::vector<double> v(static_cast<std::size_t>(n_), 0.0);
        if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            double mean = 0.0;
            for (double ui : u) mean += ui;
            mean /= static_cast<double>(n_);
            for (auto& vi : v) vi = mean;
            return v;
        }
        for (int i = 0; i < n_; ++i) {
            double acc = 0.0;
            const double* row = &P_[static_cast<std::size_t>(i) * n_];
            for (int j = 0; j < n_; ++j) acc += row[j] * u[static_cast<std::size_t>(j)];
            v[static_cast<std::size_t>(i)] = acc;
        }
        return v;
    }

    /* adjoint of the expectation operator: out_j = sum_i q_i P[i][j] */
    std::vector<double> koopman_adjoint_apply(const std::vector<double>& q) const {
        if (!markov()) fail(ErrorCode::Unsupported, "Koopman adjoint needs a Markov kernel");
        std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
        if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            double total = 0.0;
            for (double qi : q) total += qi;
            total /= static_cast<double>(n_);
            for (auto& o : out) o = total;
            return out;
        }
        for (int i = 0; i < n_; ++i) {
            const double qi = q[static_cast<std::size_t>(i)];
            if (qi == 0.0) continue;
            const double* row = &P_[static_cast<std::size_t>(i) * n_];
            for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j)] += qi * row[j];
        }
        return out;
    }

    /* one-step transition masses out of node i (Markov kinds) */
    std::vector<double> row(int i) const {
        if (!markov()) fail(ErrorCode::Unsupported, "row() needs a Markov kernel");
        std::vector<double> r(static_cast<std::size_t>(n_));
        if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            for (auto& v : r) v = 1.0 / n_;
            return r;
        }
        for (int j = 0; j < n_; ++j) r[static_cast<std::size_t>(j)] = P_[static_cast<std::size_t>(i) * n_ + j];
        return r;
    }

    /* invariant density on the grid.  Markov: left fixed vector of the
       transition matrix.  Expanding: fixed density of the transfer operator.
       Convergence is certified by agreement from two independent starts. */
    GridMeasure stationary(double tol = 1e-13, int max_iter = 20000) const {
        GridMeasure a = stationary_from(false, tol, max_iter);
        GridMeasure b = stationary_from(true, tol, max_iter);
        double diff = 0.0;
        for (int i = 0; i < n_; ++i)
            diff = std::max(diff, std::fabs(a.density[static_cast<std::size_t>(i)] -
                                            b.density[static_cast<std::size_t>(i)]));
        if (diff > 1e-8)
            fail(ErrorCode::NoConvergence,
                 "stationary density not unique to tolerance (starts differ by " +
                     std::to_string(diff) + ")");
        return a;
    }

private:
    using Apply = std::function<void(const std::vector<double>&, std::vector<double>&)>;

    void fill_additive_matrix(const FastDriverSpec& d) {
        const int n = n_;
        const std::size_t nn = static_cast<std::size_t>(n);
        const std::size_t nq = d.noise_density.size();
        P_.assign(nn * nn, 0.0);
        // circulant: row i depends on (y_j - y_i - shift) mod 1
        std::vector<double> first(nn);
        double rowsum = 0.0;
        for (int j = 0; j < n; ++j) {
            const double z = wrap01(node(j) - shift_);
            std::size_t bin = static_cast<std::size_t>(z * static_cast<double>(nq));
            if (bin >= nq) bin = nq - 1;
            first[static_cast<std::size_t>(j)] = d.noise_density[bin];
            rowsum += d.noise_density[bin];
        }
        if (rowsum <= 0.0) fail(ErrorCode::NoConvergence, "noise density vanishes on the grid");
        for (int j = 0; j < n; ++j) first[static_cast<std::size_t>(j)] /= rowsum;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                P_[static_cast<std::size_t>(i) * n + j] = first[static_cast<std::size_t>((j - i + n) % n)];
    }

    void normalize_rows() {
        for (int i = 0; i < n_; ++i) {
            double rs = 0.0;
            double* row = &P_[static_cast<std::size_t>(i) * n_];
            for (int j = 0; j < n_; ++j) rs += row[j];
            if (rs <= 0.0) fail(ErrorCode::NonStochasticRow, "kernel row has no mass");
            for (int j = 0; j < n_; ++j) row[j] /= rs;
        }
    }

    Apply make_markov_apply(const std::function<double(double)>& tilt, bool adjoint) const {
        std::vector<double> w(static_cast<std::size_t>(n_));
        double tmax = -1e300;
        for (int j = 0; j < n_; ++j) {
            w[static_cast<std::size_t>(j)] = tilt(node(j));
            tmax = std::max(tmax, w[static_cast<std::size_t>(j)]);
        }
        for (int j = 0; j < n_; ++j)
            w[static_cast<std::size_t>(j)] = std::exp(w[static_cast<std::size_t>(j)] - tmax);
        scale_ = tmax;
        const int n = n_;
        const std::vector<double>* P = &P_;
        if (!adjoint) {
            return [n, P, w](const std::vector<double>& u, std::vector<double>& v) {
                for (int i = 0; i < n; ++i) {
                    double acc = 0.0;
                    const double* row = &(*P)[static_cast<std::size_t>(i) * n];
                    for (int j = 0; j < n; ++j) acc += row[j] * w[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
                    v[static_cast<std::size_t>(i)] = acc;
                }
            };
        }
        return [n, P, w](const std::vector<double>& u, std::vector<double>& v) {
            for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] = 0.0;
            for (int i = 0; i < n; ++i) {
                const double* row = &(*P)[static_cast<std::size_t>(i) * n];
                const double ui = u[static_cast<std::size_t>(i)];
                for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] += row[j] * ui;
            }
            for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] *= w[static_cast<std::size_t>(j)];
        };
    }

    Apply make_expanding_apply(const std::function<double(double)>& tilt) const {
        const int n = n_, m = m_;
        // exact preimages of node i under y -> m*y + shift: (y_i - shift + b)/m
        std::vector<detail::CubicStencil> stencils(static_cast<std::size_t>(n) * m);
        std::vector<double> weights(static_cast<std::size_t>(n) * m);
        double tmax = -1e300;
        for (int i = 0; i < n; ++i) {
            for (int b = 0; b < m; ++b) {
                const double v = wrap01((node(i) - shift_ + static_cast<double>(b)) / m);
                stencils[static_cast<std::size_t>(i) * m + b] = detail::cubic_stencil(v, n);
                const double t = tilt(v);
                weights[static_cast<std::size_t>(i) * m + b] = t;
                tmax = std::max(tmax, t);
            }
        }
        for (auto& t : weights) t = std::exp(t - tmax) / static_cast<double>(m);
        scale_ = tmax;
        return [n, m, stencils, weights](const std::vector<double>& u, std::vector<double>& v) {
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int b = 0; b < m; ++b) {
                    const auto& st = stencils[static_cast<std::size_t>(i) * m + b];
                    double uv = st.w[0] * u[static_cast<std::size_t>(st.idx[0])] +
                                st.w[1] * u[static_cast<std::size_t>(st.idx[1])] +
                                st.w[2] * u[static_cast<std::size_t>(st.idx[2])] +
                                st.w[3] * u[static_cast<std::size_t>(st.idx[3])];
                    acc += weights[static_cast<std::size_t>(i) * m + b] * uv;
                }
                v[static_cast<std::size_t>(i)] = acc;
            }
        };
    }

    EigReport power_iterate(const Apply& apply, std::vector<double>* warm,
                            double tol, int max_iter) const {
        const std::size_t n = static_cast<std::size_t>(n_);
        std::vector<double> u;
        if (warm && warm->size() == n) {
            u = *warm;
        } else {
            u.assign(n, 1.0);
        }
        double umax = 0.0;
        for (double ui : u) umax = std::max(umax, std::fabs(ui));
        if (!(umax > 0.0)) u.assign(n, 1.0), umax = 1.0;
        for (auto& ui : u) ui /= umax;

        std::vector<double> v(n);
        EigReport rep;
        double lambda = 0.0;
        for (int it = 1; it <= max_iter; ++it) {
            apply(u, v);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                num += v[i] * u[i];
                den += u[i] * u[i];
            }
            lambda = num / den;
            double res = 0.0, vmax = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                res = std::max(res, std::fabs(v[i] - lambda * u[i]));
                vmax = std::max(vmax, std::fabs(v[i]));
            }
            if (!(vmax > 0.0) || !(lambda > 0.0))
                fail(ErrorCode::NoConvergence, "tilted kernel iteration lost positivity");
            for (std::size_t i = 0; i < n; ++i) u[i] = v[i] / vmax;
            rep.iterations = it;
            rep.residual = res / std::fabs(lambda);
            if (rep.residual < tol) break;
        }
        if (rep.residual >= 1e-8)
            fail(ErrorCode::NoConvergence,
                 "power iteration stalled at residual " + std::to_string(rep.residual));
        if (warm) *warm = u;
        rep.log_lambda = std::log(lambda) + scale_;
        return rep;
    }

    GridMeasure stationary_from(bool perturbed, double tol, int max_iter) const {
        const std::size_t n = static_cast<std::size_t>(n_);
        std::vector<double> rho(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double y = static_cast<double>(i) / static_cast<double>(n_);
            rho[i] = perturbed ? 1.0 + 0.5 * std::cos(kTwoPi * y) : 1.0;
        }
        Apply apply;
        auto zero_tilt = [](double) { return 0.0; };
        if (kind_ == DriverKind::DeterministicExpanding) {
            apply = make_expanding_apply(zero_tilt);  // transfer operator moves densities
        } else if (kind_ == DriverKind::AdditiveMarkov && uniform_rows_) {
            GridMeasure mu = uniform_measure(n_);
            return mu;
        } else {
            apply = make_markov_apply(zero_tilt, /*adjoint=*/true);
        }
        std::vector<double> next(n);
        double res = 1.0;
        for (int it = 0; it < max_iter; ++it) {
            apply(rho, next);
            double mass = 0.0;
            for (double x : next) mass += x;
            mass /= static_cast<double>(n_);
            if (!(mass > 0.0)) fail(ErrorCode::NoConvergence, "density mass vanished");
            for (auto& x : next) x /= mass;
            res = 0.0;
            for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::fabs(next[i] - rho[i]));
            rho.swap(next);
            if (res < tol) break;
        }
        if (res >= 1e-8)
            fail(ErrorCode::NoConvergence,
                 "stationary iteration stalled at residual " + std::to_string(res));
        GridMeasure mu;
        mu.n = n_;
        mu.density = std::move(rho);
        return mu;
    }

    int n_ = 0;
    DriverKind kind_ = DriverKind::AdditiveMarkov;
    int m_ = 0;
    double shift_ = 0.0;
    bool uniform_rows_ = false;
    std::vector<double> P_;
    mutable double scale_ = 0.0;
};

/* invariant measure of the fast driver frozen at slow state x */
inline GridMeasure stationary_density(const FastDriverSpec& driver, const SlowVec& x, int n_y) {
    FrozenKernel k = FrozenKernel::build(driver, x, n_y);
    GridMeasure mu = k.stationary();
    mu.validate();
    return mu;
}

} // namespace slowfast
