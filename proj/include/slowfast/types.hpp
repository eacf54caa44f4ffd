#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace slowfast {

/* Slow state: dimension 1 or 2, inline storage.  All validated numerics
   run at d = 1; d = 2 is carried through the simulation layer only. */
class SlowVec {
public:
    SlowVec() : dim_(1) { v_[0] = 0.0; v_[1] = 0.0; }
    explicit SlowVec(double x) : dim_(1) { v_[0] = x; v_[1] = 0.0; }
    SlowVec(double x0, double x1) : dim_(2) { v_[0] = x0; v_[1] = x1; }

    int dim() const { return dim_; }

    double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }

    /* d = 1 accessor; misuse is a programming error, not an input error */
    double scalar() const {
        if (dim_ != 1) fail(ErrorCode::BadDomain, "scalar() on d=2 state");
        return v_[0];
    }

    SlowVec& operator+=(const SlowVec& o) {
        check_dim(o);
        v_[0] += o.v_[0];
        v_[1] += o.v_[1];
        return *this;
    }
    SlowVec& operator-=(const SlowVec& o) {
        check_dim(o);
        v_[0] -= o.v_[0];
        v_[1] -= o.v_[1];
        return *this;
    }
    SlowVec& operator*=(double s) {
        v_[0] *= s;
        v_[1] *= s;
        return *this;
    }

    friend SlowVec operator+(SlowVec a, const SlowVec& b) { return a += b; }
    friend SlowVec operator-(SlowVec a, const SlowVec& b) { return a -= b; }
    friend SlowVec operator*(double s, SlowVec a) { return a *= s; }

    double dot(const SlowVec& o) const {
        check_dim(o);
        return v_[0] * o.v_[0] + v_[1] * o.v_[1];
    }

    double norm() const { return std::sqrt(dot(*this)); }

    double norm_inf() const {
        double m = std::fabs(v_[0]);
        if (dim_ == 2) m = std::max(m, std::fabs(v_[1]));
        return m;
    }

private:
    void check_dim(const SlowVec& o) const {
        if (dim_ != o.dim_) fail(ErrorCode::BadDomain, "mixed slow-state dimensions");
    }

    std::array<double, 2> v_;
    int dim_;
};

/* position on the unit circle, kept in [0,1) */
inline double wrap01(double y) {
    double r = y - std::floor(y);
    if (r >= 1.0) r -= 1.0;  // guard the rounding case y - floor(y) == 1
    if (r < 0.0) r = 0.0;
    return r;
}

/* Polygonal path in slow time.  Node times strictly increase. */
struct PiecewisePath {
    std::vector<double> times;
    std::vector<SlowVec> points;

    void validate() const {
        if (times.size() != points.size() || times.size() < 2)
            fail(ErrorCode::BadDomain, "path needs >= 2 nodes with matching times");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                fail(ErrorCode::BadDomain, "path times must strictly increase");
    }
};

/* Extended-real action value: `finite == false` means the tagged +inf
   sentinel; `value` then carries a lower bound, never an operand. */
struct ExtendedReal {
    double value = 0.0;
    bool finite = true;
};

} // namespace slowfast
