#include "dcc/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "dcc/errors.hpp"

namespace dcc {

double mean(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("mean of an empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double stdev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

PairedTTest paired_t_test_less(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ContractViolation("paired test: samples differ in length");
    if (a.size() < 2) throw DomainError("paired test needs at least two pairs");
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
    PairedTTest out;
    out.mean_diff = mean(d);
    out.df = static_cast<double>(d.size() - 1);
    const double se = stdev(d) / std::sqrt(static_cast<double>(d.size()));
    if (se == 0.0) {
        out.t = out.mean_diff < 0 ? -std::numeric_limits<double>::infinity()
                                  : (out.mean_diff > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        out.p = out.mean_diff < 0 ? 0.0 : (out.mean_diff > 0 ? 1.0 : 0.5);
        return out;
    }
    out.t = out.mean_diff / se;
    out.p = boost::math::cdf(boost::math::students_t(out.df), out.t);
    return out;
}

} // namespace dcc
