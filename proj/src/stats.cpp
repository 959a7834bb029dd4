#include "spinglass/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spinglass/errors.hpp"

namespace spinglass {

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double mu = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double standard_error(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    return sample_sd(x) / std::sqrt(static_cast<double>(x.size()));
}

namespace {

double kolmogorov_q(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    KsResult r;
    r.statistic = d;
    r.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    return r;
}

std::vector<double> isotonic_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("isotonic_fit: size mismatch");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return x[l] < x[r]; });

    struct Block {
        double sum;
        double count;
        std::size_t first;
    };
    std::vector<Block> blocks;
    for (std::size_t pos = 0; pos < n; ++pos) {
        blocks.push_back({y[order[pos]], 1.0, pos});
        while (blocks.size() > 1) {
            const Block& last = blocks.back();
            const Block& prev = blocks[blocks.size() - 2];
            if (prev.sum / prev.count <= last.sum / last.count) break;
            Block merged{prev.sum + last.sum, prev.count + last.count, prev.first};
            blocks.pop_back();
            blocks.back() = merged;
        }
    }
    std::vector<double> fit(n);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::size_t end = b + 1 < blocks.size() ? blocks[b + 1].first : n;
        const double level = blocks[b].sum / blocks[b].count;
        for (std::size_t pos = blocks[b].first; pos < end; ++pos) fit[order[pos]] = level;
    }
    return fit;
}

}  // namespace spinglass
