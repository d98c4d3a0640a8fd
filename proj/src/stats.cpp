#include "neurovid/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace neurovid {

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("pearson: length mismatch");
    double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nan("");
    return sab / std::sqrt(saa * sbb);
}

double fisher_z(double r) {
    const double lim = 1.0 - 1e-7;
    if (r > lim) r = lim;
    if (r < -lim) r = -lim;
    return std::atanh(r);
}

namespace {

// continued-fraction evaluation for the incomplete beta (Lentz's method)
double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                a * std::log(x) + b * std::log(1.0 - x);
    double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
    if (df <= 0.0) return 1.0;
    double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult one_sample_t(const std::vector<double>& xs) {
    TTestResult r;
    size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("one_sample_t: need >= 2 samples");
    double m = mean_of(xs);
    double sd = stddev_of(xs);
    r.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        if (m == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = (m > 0) ? 1e308 : -1e308;
            r.p = 0.0;
        }
        return r;
    }
    r.t = m / (sd / std::sqrt(static_cast<double>(n)));
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

TTestResult two_sample_t(const std::vector<double>& a,
                         const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("two_sample_t: need >= 2 samples each");
    TTestResult r;
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ma = mean_of(a), mb = mean_of(b);
    double va = stddev_of(a), vb = stddev_of(b);
    va *= va;
    vb *= vb;
    r.df = na + nb - 2.0;
    double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    if (sp2 == 0.0) {
        if (ma == mb) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = (ma > mb) ? 1e308 : -1e308;
            r.p = 0.0;
        }
        return r;
    }
    r.t = (ma - mb) / std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

}  // namespace neurovid
