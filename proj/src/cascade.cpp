#include "spinglass/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "spinglass/errors.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/parisi.hpp"
#include "spinglass/quadrature.hpp"
#include "spinglass/stats.hpp"

namespace spinglass {

namespace {

constexpr std::size_t kMaxLeaves = 1u << 25;

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) out *= base;
    return out;
}

// log of a Gamma(shape, 1) variate, accurate for small shapes.
double log_gamma_variate(double shape, Rng& rng) {
    if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
    const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
    return std::log(g) + std::log(rng.uniform_open()) / shape;
}

double log_add(double a, double b) {
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

// Children of one node: relative weights (decreasing) and the dust fraction.
struct NodeDraw {
    std::vector<double> weights;
    double dust = 0.0;
};

NodeDraw stick_breaking(double alpha, double theta, std::size_t n, Rng& rng) {
    NodeDraw out;
    out.weights.resize(n);
    double log_rem = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double la = log_gamma_variate(1.0 - alpha, rng);
        const double lb = log_gamma_variate(theta + static_cast<double>(i) * alpha, rng);
        const double lz = log_add(la, lb);
        out.weights[i - 1] = std::exp(log_rem + la - lz);
        log_rem += lb - lz;
    }
    out.dust = std::exp(log_rem);
    std::sort(out.weights.begin(), out.weights.end(), std::greater<>());
    return out;
}

// log of the decreasing Poisson points with intensity x^{-1-m} dx.
std::vector<double> poisson_log_points(double m, std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    double gamma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gamma += -std::log(rng.uniform_open());
        out[i] = -std::log(m * gamma) / m;
    }
    return out;
}

}  // namespace

void validate_cascade_spec(const CascadeSpec& spec) {
    const auto& m = spec.m;
    if (m.size() < 2) throw ValidationError("cascade: m needs at least m_0 and m_k");
    if (m.front() != 0.0 || m.back() != 1.0) throw ValidationError("cascade: m must start at 0 and end at 1");
    for (std::size_t r = 1; r < m.size(); ++r)
        if (!(m[r] > m[r - 1])) throw ValidationError("cascade: m must be strictly increasing");
    if (spec.fanout < 2) throw ValidationError("cascade: fanout must be >= 2");
    const std::size_t k = spec.depth();
    double leaves = 1.0;
    for (std::size_t j = 0; j + 1 < k; ++j) leaves *= static_cast<double>(spec.fanout);
    if (leaves > static_cast<double>(kMaxLeaves))
        throw ValidationError("cascade: fanout^(k-1) = " + std::to_string(leaves) + " leaves exceeds the limit of " +
                              std::to_string(kMaxLeaves));
}

double CascadeTree::total_mass() const {
    double t = std::accumulate(leaf_weights.begin(), leaf_weights.end(), 0.0);
    for (const auto& level : dust) t = std::accumulate(level.begin(), level.end(), t);
    return t;
}

std::vector<std::size_t> CascadeTree::path(std::size_t index) const {
    std::vector<std::size_t> digits(depth - 1);
    for (std::size_t i = digits.size(); i-- > 0;) {
        digits[i] = index % fanout;
        index /= fanout;
    }
    return digits;
}

namespace {

// Common prefix length of node a at level la and node b at level lb.
std::size_t common_prefix(std::size_t fanout, std::size_t a, std::size_t la, std::size_t b, std::size_t lb) {
    // Lift both to the shallower level, then climb until they agree.
    while (la > lb) {
        a /= fanout;
        --la;
    }
    while (lb > la) {
        b /= fanout;
        --lb;
    }
    while (a != b) {
        a /= fanout;
        b /= fanout;
        --la;
    }
    return la;
}

}  // namespace

std::size_t tree_overlap(const CascadeTree& tree, std::size_t a, std::size_t b) {
    return 1 + common_prefix(tree.fanout, a, tree.depth - 1, b, tree.depth - 1);
}

CascadeTree sample_cascade(const CascadeSpec& spec, std::uint64_t seed, std::uint64_t tree_id) {
    validate_cascade_spec(spec);
    const std::size_t k = spec.depth();
    const std::size_t n = spec.fanout;
    CascadeTree tree;
    tree.depth = k;
    tree.fanout = n;
    tree.dust.resize(k > 0 ? k - 1 : 0);
    if (k == 1) {
        tree.leaf_weights = {1.0};
        tree.fanout = 1;
        return tree;
    }

    if (spec.construction == CascadeConstruction::StickBreaking) {
        std::vector<double> mass{1.0};
        for (std::size_t j = 0; j + 1 < k; ++j) {
            std::vector<double> next(mass.size() * n);
            tree.dust[j].assign(mass.size(), 0.0);
            for (std::size_t node = 0; node < mass.size(); ++node) {
                auto rng = Rng::stream(seed, {tree_id, j, node});
                const auto draw = stick_breaking(spec.m[j + 1], -spec.m[j], n, rng);
                for (std::size_t c = 0; c < n; ++c) next[node * n + c] = mass[node] * draw.weights[c];
                tree.dust[j][node] = mass[node] * draw.dust;
            }
            mass = std::move(next);
        }
        tree.leaf_weights = std::move(mass);
    } else {
        std::vector<double> logw{0.0};
        for (std::size_t j = 0; j + 1 < k; ++j) {
            std::vector<double> next(logw.size() * n);
            tree.dust[j].assign(logw.size(), 0.0);
            for (std::size_t node = 0; node < logw.size(); ++node) {
                auto rng = Rng::stream(seed, {tree_id, j, node});
                const auto pts = poisson_log_points(spec.m[j + 1], n, rng);
                for (std::size_t c = 0; c < n; ++c) next[node * n + c] = logw[node] + pts[c];
            }
            logw = std::move(next);
        }
        const double norm = log_sum_exp(logw);
        tree.leaf_weights.resize(logw.size());
        for (std::size_t i = 0; i < logw.size(); ++i) tree.leaf_weights[i] = std::exp(logw[i] - norm);
    }
    // Absorb roundoff so the total is one.
    const double total = tree.total_mass();
    for (double& w : tree.leaf_weights) w /= total;
    for (auto& level : tree.dust)
        for (double& w : level) w /= total;
    return tree;
}

std::vector<double> overlap_law(const CascadeTree& tree) {
    const std::size_t k = tree.depth;
    if (k == 1) return {1.0};
    // masses[j] = subtree masses of the nodes at prefix length j.
    std::vector<std::vector<double>> masses(k);
    masses[k - 1] = tree.leaf_weights;
    for (std::size_t j = k - 1; j-- > 0;) {
        masses[j] = tree.dust[j];
        for (std::size_t c = 0; c < masses[j + 1].size(); ++c) masses[j][c / tree.fanout] += masses[j + 1][c];
    }
    const double total = masses[0][0];
    std::vector<double> at_least(k + 1, 0.0);  // at_least[j] = P(r >= j)
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (double v : masses[j]) s += v * v;
        at_least[j + 1] = s / (total * total);
    }
    std::vector<double> law(k);
    for (std::size_t r = 1; r <= k; ++r) law[r - 1] = at_least[r] - (r < k ? at_least[r + 1] : 0.0);
    return law;
}

std::vector<double> sample_overlap_frequencies(const CascadeTree& tree, std::size_t samples, Rng& rng) {
    const std::size_t k = tree.depth;
    std::vector<double> freq(k, 0.0);
    if (samples == 0) return freq;
    if (k == 1) {
        freq[0] = 1.0;
        return freq;
    }
    // Items: every leaf, then every dust cell, each with its level and index.
    struct Item {
        std::size_t level;
        std::size_t index;
    };
    std::vector<Item> items;
    std::vector<double> cumulative;
    double acc = 0.0;
    for (std::size_t i = 0; i < tree.leaf_weights.size(); ++i) {
        if (tree.leaf_weights[i] <= 0.0) continue;
        items.push_back({k - 1, i});
        cumulative.push_back(acc += tree.leaf_weights[i]);
    }
    for (std::size_t j = 0; j < tree.dust.size(); ++j)
        for (std::size_t i = 0; i < tree.dust[j].size(); ++i) {
            if (tree.dust[j][i] <= 0.0) continue;
            items.push_back({j, i});
            cumulative.push_back(acc += tree.dust[j][i]);
        }
    auto draw = [&]() -> const Item& {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it;
        return items[static_cast<std::size_t>(it - cumulative.begin())];
    };
    for (std::size_t t = 0; t < samples; ++t) {
        const Item& a = draw();
        const Item& b = draw();
        const std::size_t r = 1 + common_prefix(tree.fanout, a.index, a.level, b.index, b.level);
        freq[r - 1] += 1.0;
    }
    for (double& f : freq) f /= static_cast<double>(samples);
    return freq;
}

OverlapHistogram overlap_histogram(const CascadeSpec& spec, std::size_t trees, std::size_t samples,
                                   std::uint64_t seed, std::size_t workers) {
    validate_cascade_spec(spec);
    if (trees == 0) throw ValidationError("overlap_histogram: need at least one tree");
    const std::size_t k = spec.depth();
    std::vector<std::vector<double>> per_tree(trees);
    parallel_for(trees, workers, [&](std::size_t t) {
        const auto tree = sample_cascade(spec, seed, t);
        if (samples == 0) {
            per_tree[t] = overlap_law(tree);
        } else {
            auto rng = Rng::stream(seed, {t, 0xa11ce});
            per_tree[t] = sample_overlap_frequencies(tree, samples, rng);
        }
    });
    OverlapHistogram h;
    h.trees = trees;
    h.masses.resize(k);
    h.stderrs.resize(k);
    std::vector<double> column(trees);
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t t = 0; t < trees; ++t) column[t] = per_tree[t][r];
        h.masses[r] = mean(column);
        h.stderrs[r] = standard_error(column);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Hierarchical recursion

namespace {

void check_m(std::span<const double> m) {
    if (m.size() < 2 || m.front() != 0.0 || std::abs(m.back() - 1.0) > 1e-12)
        throw ValidationError("hierarchical_value: m must run from 0 to 1");
    for (std::size_t r = 1; r < m.size(); ++r)
        if (!(m[r] > m[r - 1])) throw ValidationError("hierarchical_value: m must be strictly increasing");
}

double combine_level(std::size_t r, double m_r, const std::vector<double>& log_weights, const std::vector<double>& v) {
    if (r == 0) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += std::exp(log_weights[i]) * v[i];
        return s;
    }
    std::vector<double> terms(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        terms[i] = log_weights[i] + m_r * v[i];
        if (std::isnan(terms[i]) || terms[i] == std::numeric_limits<double>::infinity())
            throw NumericalError("hierarchical_value: m_r F_{r+1} left the representable range at level " +
                                 std::to_string(r));
    }
    const double out = log_sum_exp(terms) / m_r;
    if (!std::isfinite(out))
        throw NumericalError("hierarchical_value: overflow in log E exp at level " + std::to_string(r));
    return out;
}

struct TensorLevel {
    std::vector<std::vector<double>> points;
    std::vector<double> log_weights;
};

TensorLevel tensor_rule(const QuadratureRule& rule, std::size_t dim) {
    TensorLevel out;
    const std::size_t n = rule.nodes.size();
    const std::size_t count = ipow(n, dim);
    out.points.reserve(count);
    out.log_weights.reserve(count);
    std::vector<std::size_t> idx(dim, 0);
    for (std::size_t c = 0; c < count; ++c) {
        std::vector<double> p(dim);
        double lw = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            p[d] = rule.nodes[idx[d]];
            lw += std::log(rule.weights[idx[d]]);
        }
        out.points.push_back(std::move(p));
        out.log_weights.push_back(lw);
        for (std::size_t d = dim; d-- > 0;) {
            if (++idx[d] < n) break;
            idx[d] = 0;
        }
    }
    return out;
}

double recurse_quadrature(std::size_t r, std::span<const double> m, const LeafFunctional& leaf,
                          const std::vector<TensorLevel>& levels, std::vector<std::vector<double>>& z) {
    const std::size_t k = levels.size();
    if (r == k) return leaf(z);
    const auto& level = levels[r];
    std::vector<double> v(level.points.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        z[r] = level.points[i];
        v[i] = recurse_quadrature(r + 1, m, leaf, levels, z);
    }
    return combine_level(r, m[r], level.log_weights, v);
}

double recurse_monte_carlo(std::size_t r, std::span<const double> m, const LeafFunctional& leaf, const ZLaw& law,
                           const std::vector<std::size_t>& samples, Rng& rng, std::vector<std::vector<double>>& z) {
    const std::size_t k = law.dims.size();
    if (r == k) return leaf(z);
    const std::size_t n = samples[r];
    std::vector<double> v(n);
    const std::vector<double> log_weights(n, -std::log(static_cast<double>(n)));
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < n; ++i) {
        z[r].resize(law.dims[r]);
        if (law.sampler) {
            law.sampler(r, rng, z[r]);
        } else {
            for (double& x : z[r]) x = normal(rng);
        }
        v[i] = recurse_monte_carlo(r + 1, m, leaf, law, samples, rng, z);
    }
    return combine_level(r, m[r], log_weights, v);
}

}  // namespace

Estimate hierarchical_value(std::span<const double> m, const LeafFunctional& leaf, const ZLaw& z_law,
                            const HierarchicalMethod& method) {
    check_m(m);
    const std::size_t k = m.size() - 1;
    if (z_law.dims.size() != k)
        throw ValidationError("hierarchical_value: z law has " + std::to_string(z_law.dims.size()) +
                              " levels, expected " + std::to_string(k));

    if (method.kind == HierarchicalMethod::Kind::GaussHermite) {
        if (z_law.sampler) throw ValidationError("hierarchical_value: Gauss-Hermite needs Gaussian levels");
        double count = 1.0;
        for (std::size_t d : z_law.dims) count *= std::pow(static_cast<double>(method.nodes), static_cast<double>(d));
        if (count > static_cast<double>(method.max_evaluations))
            throw NumericalError("hierarchical_value: tensor Gauss-Hermite rule needs " + std::to_string(count) +
                                 " leaf evaluations; use nested Monte Carlo");
        const auto rule = gauss_hermite_normal(method.nodes);
        std::vector<TensorLevel> levels;
        for (std::size_t d : z_law.dims) levels.push_back(tensor_rule(rule, d));
        std::vector<std::vector<double>> z(k);
        return {recurse_quadrature(0, m, leaf, levels, z), 0.0};
    }

    if (method.samples.empty()) throw ValidationError("hierarchical_value: nested Monte Carlo needs sample counts");
    std::vector<std::size_t> samples = method.samples;
    while (samples.size() < k) samples.push_back(samples.back());
    for (std::size_t n : samples)
        if (n == 0) throw ValidationError("hierarchical_value: sample counts must be positive");
    const std::size_t outer = samples[0];
    std::vector<double> values(outer);
    // Each outer draw owns its stream; inner levels are drawn from it in order.
    std::vector<std::size_t> inner(samples.begin(), samples.end());
    inner[0] = 1;
    parallel_for(outer, method.workers, [&](std::size_t i) {
        auto rng = Rng::stream(method.seed, {i});
        std::vector<std::vector<double>> z(k);
        values[i] = recurse_monte_carlo(0, m, leaf, z_law, inner, rng, z);
    });
    return {mean(values), standard_error(values)};
}

// ---------------------------------------------------------------------------
// Finite-M functionals

double p2_value(const MixedModel& model, const AdmissiblePair& pair, double M) {
    require_valid(model.lambda, pair);
    const auto profile = d_profile(model, pair);
    double s = 0.0;
    for (std::size_t r = 1; r <= pair.measure.levels(); ++r)
        s += pair.measure.m[r] * (profile.w[r + 1] - profile.w[r]);
    return 0.5 * M * s;
}

LeafFunctional p2_leaf(const MixedModel& model, const AdmissiblePair& pair, double M) {
    require_valid(model.lambda, pair);
    const auto profile = d_profile(model, pair);
    const std::size_t k = pair.measure.levels();
    std::vector<double> coef(k);
    for (std::size_t r = 0; r < k; ++r) coef[r] = std::sqrt(M * std::max(0.0, profile.w[r + 1] - profile.w[r]));
    const double tail = 0.5 * M * (profile.w[k + 1] - profile.w[k]);
    return [coef, tail](const std::vector<std::vector<double>>& z) {
        double v = tail;
        for (std::size_t r = 0; r < coef.size(); ++r) v += coef[r] * z[r][0];
        return v;
    };
}

std::vector<double> species_increments(const MixedModel& model, const AdmissiblePair& pair, std::size_t s) {
    require_valid(model.lambda, pair);
    const auto profile = d_profile(model, pair);
    const auto& u = profile.u.at(s);
    std::vector<double> du(u.size() - 1);
    for (std::size_t r = 0; r + 1 < u.size(); ++r) du[r] = std::max(0.0, u[r + 1] - u[r]);
    return du;
}

LeafFunctional p1_species_leaf(const MixedModel& model, const AdmissiblePair& pair, std::size_t s,
                               std::size_t M_s) {
    if (M_s < 1) throw ValidationError("p1: species count must be >= 1");
    const auto du = species_increments(model, pair, s);
    const std::size_t k = pair.measure.levels();
    std::vector<double> coef(k);
    for (std::size_t r = 0; r < k; ++r) coef[r] = std::sqrt(du[r]);
    const double tail = 0.5 * static_cast<double>(M_s) * du[k];
    return [coef, tail, M_s](const std::vector<std::vector<double>>& z) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < M_s; ++j) {
            double y = 0.0;
            for (std::size_t r = 0; r < coef.size(); ++r) y += coef[r] * z[r][j];
            norm2 += y * y;
        }
        const double x = std::sqrt(static_cast<double>(M_s) * norm2);
        return log_sphere_mgf(M_s, x) + tail;
    };
}

Estimate p1_species_value(const MixedModel& model, const AdmissiblePair& pair, std::size_t s, std::size_t M_s,
                          const HierarchicalMethod& method) {
    if (M_s < 1) throw ValidationError("p1: species count must be >= 1");
    const std::size_t k = pair.measure.levels();
    if (method.kind == HierarchicalMethod::Kind::GaussHermite)
        return hierarchical_value(pair.measure.m, p1_species_leaf(model, pair, s, M_s),
                                  ZLaw::gaussian(std::vector<std::size_t>(k, M_s)), method);

    const auto du = species_increments(model, pair, s);
    std::vector<double> coef(k);
    for (std::size_t r = 0; r < k; ++r) coef[r] = std::sqrt(du[r]);
    const double tail = 0.5 * static_cast<double>(M_s) * du[k];
    const double dim = static_cast<double>(M_s);
    LeafFunctional leaf = [coef, tail, dim, M_s](const std::vector<std::vector<double>>& z) {
        double rho = 0.0;
        for (std::size_t r = 0; r < coef.size(); ++r) {
            const double along = rho + coef[r] * z[r][0];
            rho = std::sqrt(along * along + coef[r] * coef[r] * z[r][1]);
        }
        return log_sphere_mgf(M_s, std::sqrt(dim) * rho) + tail;
    };
    ZLaw law;
    law.dims.assign(k, 2);
    law.sampler = [M_s](std::size_t, Rng& rng, std::span<double> out) {
        out[0] = std::normal_distribution<double>()(rng);
        out[1] = M_s > 1 ? std::chi_squared_distribution<double>(static_cast<double>(M_s - 1))(rng) : 0.0;
    };
    HierarchicalMethod species_method = method;
    species_method.seed = splitmix64(method.seed ^ splitmix64(0x5eed0000 + s));
    return hierarchical_value(pair.measure.m, leaf, law, species_method);
}

std::vector<std::size_t> split_counts(std::span<const double> lambda, std::size_t M) {
    if (M < lambda.size()) throw ValidationError("split_counts: need at least one coordinate per species");
    std::vector<std::size_t> counts(lambda.size());
    std::size_t total = 0;
    for (std::size_t s = 0; s < lambda.size(); ++s) {
        counts[s] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(lambda[s] * static_cast<double>(M) - 1e-9)));
        total += counts[s];
    }
    while (total > M) {
        const auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --total;
    }
    while (total < M) {
        const auto it = std::min_element(counts.begin(), counts.end());
        ++*it;
        ++total;
    }
    return counts;
}

Estimate pm_over_m(const MixedModel& model, const AdmissiblePair& pair, const std::vector<std::size_t>& counts,
                   const HierarchicalMethod& method) {
    require_valid(model);
    if (counts.size() != model.species_count())
        throw ValidationError("pm_over_m: need one count per species");
    const double M = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    double value = 0.0, var = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        const auto e = p1_species_value(model, pair, s, counts[s], method);
        value += e.value;
        var += e.std_error * e.std_error;
    }
    value -= p2_value(model, pair, M);
    return {value / M, std::sqrt(var) / M};
}

}  // namespace spinglass
