#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace cavfb {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

// sin(x)/x with the removable singularity handled by a series below |x| < 1e-4,
// where the two leading terms are already exact to double precision.
inline double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        double x2 = x * x;
        return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0);
    }
    return std::sin(x) / x;
}

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double x) {
    double w = std::remainder(x, two_pi);
    if (w <= -pi) w += two_pi;
    return w;
}

// P(Z >= x) for a standard normal, via the complementary error function.
inline double normal_upper_tail(double x) {
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

// Golden-section minimization of a unimodal function on [a, b].
// Deterministic; runs until the bracket is narrower than tol.
inline double golden_minimize(const std::function<double(double)>& f,
                              double a, double b, double tol) {
    if (!(b > a)) throw std::invalid_argument("golden_minimize: empty bracket");
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;   // 1/phi
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// Weighted linear least squares y = p0 + p1*x. Returns {intercept, slope,
// var_intercept, var_slope} from the normal-equation covariance.
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double intercept_err = 0.0;
    double slope_err = 0.0;
    double chi2 = 0.0;
};

template <typename XS, typename YS, typename WS>
LinearFit weighted_linear_fit(const XS& x, const YS& y, const WS& w) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n || w.size() != n)
        throw std::invalid_argument("weighted_linear_fit: need >= 2 points with matching weights");
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
        swxx += w[i] * x[i] * x[i];
        swxy += w[i] * x[i] * y[i];
    }
    const double det = sw * swxx - swx * swx;
    if (!(std::abs(det) > 0))
        throw std::invalid_argument("weighted_linear_fit: degenerate design");
    LinearFit fit;
    fit.intercept = (swxx * swy - swx * swxy) / det;
    fit.slope = (sw * swxy - swx * swy) / det;
    fit.intercept_err = std::sqrt(swxx / det);
    fit.slope_err = std::sqrt(sw / det);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        fit.chi2 += w[i] * r * r;
    }
    return fit;
}

} // namespace cavfb
