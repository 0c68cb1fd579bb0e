#include "icdbm/stats.hpp"

#include <cmath>
#include <limits>

namespace icdbm {

double SampleSet::mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / double(values.size());
}

double SampleSet::variance() const {
    double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return s / double(values.size() - 1);
}

double SampleSet::stddev() const { return std::sqrt(variance()); }

namespace {

double log_gamma(double x) { return std::lgamma(x); }

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

bool all_finite(const SampleSet& s) {
    for (double v : s.values)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0)
        throw StatsError("incomplete beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) throw StatsError("degrees of freedom must be positive");
    if (t == 0.0) return 1.0;
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

WelchResult welch_t_test(const SampleSet& a, const SampleSet& b, double alpha) {
    if (a.n() < 2 || b.n() < 2)
        throw StatsError("welch_t_test requires at least two samples per side");
    if (!all_finite(a) || !all_finite(b))
        throw StatsError("welch_t_test requires finite sample values");

    WelchResult r;
    r.alpha = alpha;

    double va = a.variance();
    double vb = b.variance();
    double na = double(a.n());
    double nb = double(b.n());

    if (va == 0.0 && vb == 0.0) {
        r.degenerate = true;
        r.df = na + nb - 2.0;
        if (a.mean() == b.mean()) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = a.mean() < b.mean() ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        r.significant = r.p < alpha;
        return r;
    }

    double sea = va / na;
    double seb = vb / nb;
    double se2 = sea + seb;
    r.t = (a.mean() - b.mean()) / std::sqrt(se2);
    r.df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    r.p = student_t_two_sided_p(r.t, r.df);
    r.significant = r.p < alpha;
    return r;
}

}  // namespace icdbm
