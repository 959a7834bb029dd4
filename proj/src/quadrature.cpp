#include "spinglass/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spinglass/errors.hpp"

namespace spinglass {

QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0) throw ValidationError("gauss_legendre: need at least one node");
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / static_cast<double>(j);
            }
            dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        // Recompute the derivative at the converged node for the weight.
        double p0 = 1.0, p1 = 0.0;
        for (std::size_t j = 1; j <= n; ++j) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / static_cast<double>(j);
        }
        dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
    QuadratureRule rule = gauss_legendre(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = mid + half * rule.nodes[i];
        rule.weights[i] *= half;
    }
    return rule;
}

QuadratureRule gauss_hermite_normal(std::size_t n) {
    if (n == 0) throw ValidationError("gauss_hermite_normal: need at least one node");
    // Newton iteration on orthonormal Hermite polynomials (weight exp(-x^2)),
    // then rescaled to the standard normal density.
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    const double dn = static_cast<double>(n);
    std::vector<double> x(n), w(n);
    const std::size_t half = (n + 1) / 2;
    double z = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * dn + 1.0) - 1.85575 * std::pow(2.0 * dn + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(dn, 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * x[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * x[1];
        } else {
            z = 2.0 * z - x[i - 2];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 200; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                const double dj = static_cast<double>(j);
                p1 = z * std::sqrt(2.0 / (dj + 1.0)) * p2 - std::sqrt(dj / (dj + 1.0)) * p3;
            }
            pp = std::sqrt(2.0 * dn) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = std::sqrt(2.0) * x[n - 1 - i];
        rule.weights[i] = w[n - 1 - i] / std::sqrt(std::numbers::pi);
        total += rule.weights[i];
    }
    for (double& wi : rule.weights) wi /= total;
    return rule;
}

double log_sum_exp(const std::vector<double>& x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double mx = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}

namespace {

// log(2 cosh x) - log 2 without overflow.
double log_cosh(double x) {
    const double a = std::abs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

double log_sphere_mgf(std::size_t dim, double x) {
    if (dim == 0) throw ValidationError("log_sphere_mgf: dimension must be >= 1");
    x = std::abs(x);
    if (dim == 1) return log_cosh(x);
    if (x == 0.0) return 0.0;

    const double a = static_cast<double>(dim) - 2.0;  // exponent of sin(phi)
    // Peak of g(phi) = x cos(phi) + a log sin(phi).
    double c = 1.0;
    if (a > 0.0) c = (-a + std::sqrt(a * a + 4.0 * x * x)) / (2.0 * x);
    c = std::clamp(c, -1.0, 1.0);
    const double phi_star = std::acos(c);
    const double s_star = std::sin(phi_star);
    double curvature = x * c;
    if (a > 0.0) curvature += a / (s_star * s_star);
    const double width = curvature > 0.0 ? 1.0 / std::sqrt(curvature) : std::numbers::pi;

    const double lo = std::max(0.0, phi_star - 12.0 * width);
    const double hi = std::min(std::numbers::pi, phi_star + 12.0 * width);

    static const QuadratureRule central = gauss_legendre(200);
    static const QuadratureRule tail = gauss_legendre(64);

    std::vector<double> terms;
    terms.reserve(central.nodes.size() + 2 * tail.nodes.size());
    auto add_panel = [&](const QuadratureRule& rule, double from, double to) {
        const double mid = 0.5 * (from + to);
        const double half = 0.5 * (to - from);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double phi = mid + half * rule.nodes[i];
            double g = x * std::cos(phi);
            if (a > 0.0) g += a * std::log(std::sin(phi));
            terms.push_back(std::log(half * rule.weights[i]) + g);
        }
    };
    add_panel(central, lo, hi);
    if (lo > 0.0) add_panel(tail, 0.0, lo);
    if (hi < std::numbers::pi) add_panel(tail, hi, std::numbers::pi);
    // Normalizer: int_0^pi sin^a(phi) dphi = sqrt(pi) Gamma((a+1)/2) / Gamma(a/2 + 1).
    const double log_norm = 0.5 * std::log(std::numbers::pi) + std::lgamma(0.5 * (a + 1.0)) -
                            std::lgamma(0.5 * a + 1.0);
    return log_sum_exp(terms) - log_norm;
}

}  // namespace spinglass
