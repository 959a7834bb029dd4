#include "spinglass/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "spinglass/errors.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

// ---------------------------------------------------------------------------
// InteractionTensor

InteractionTensor::InteractionTensor(std::size_t species, std::size_t order)
    : species_(species), order_(order) {
    if (species == 0) throw ValidationError("InteractionTensor: need at least one species");
    if (order == 0) throw ValidationError("InteractionTensor: order must be >= 1");
    if (is_dense()) {
        std::size_t size = 1;
        for (std::size_t i = 0; i < order; ++i) size *= species;
        dense_.assign(size, 0.0);
    }
}

InteractionTensor InteractionTensor::filled(std::size_t species, std::size_t order, double value) {
    InteractionTensor t(species, order);
    if (t.is_dense()) {
        std::fill(t.dense_.begin(), t.dense_.end(), value);
        return t;
    }
    std::vector<std::size_t> idx(order, 0);
    for (;;) {
        t.sparse_[idx] = value;
        std::size_t pos = order;
        while (pos-- > 0) {
            if (++idx[pos] < species) break;
            idx[pos] = 0;
        }
        if (pos == static_cast<std::size_t>(-1)) break;
    }
    return t;
}

std::size_t InteractionTensor::flat_index(std::span<const std::size_t> index) const {
    if (index.size() != order_) throw ValidationError("InteractionTensor: index has wrong length");
    std::size_t flat = 0;
    for (std::size_t i : index) {
        if (i >= species_) throw ValidationError("InteractionTensor: species index out of range");
        flat = flat * species_ + i;
    }
    return flat;
}

double InteractionTensor::at(std::span<const std::size_t> index) const {
    const std::size_t flat = flat_index(index);
    if (is_dense()) return dense_[flat];
    const auto it = sparse_.find(std::vector<std::size_t>(index.begin(), index.end()));
    return it == sparse_.end() ? 0.0 : it->second;
}

void InteractionTensor::set(std::span<const std::size_t> index, double value) {
    const std::size_t flat = flat_index(index);
    if (is_dense()) {
        dense_[flat] = value;
    } else {
        sparse_[std::vector<std::size_t>(index.begin(), index.end())] = value;
    }
}

double InteractionTensor::max_entry() const {
    double mx = 0.0;
    for_each_nonzero([&](std::span<const std::size_t>, double v) { mx = std::max(mx, v); });
    return mx;
}

// ---------------------------------------------------------------------------
// MixedModel / SpeciesCounts

std::size_t MixedModel::species_index(std::string_view label) const {
    for (std::size_t s = 0; s < species.size(); ++s)
        if (species[s] == label) return s;
    throw ValidationError("unknown species label '" + std::string(label) + "'");
}

std::size_t SpeciesCounts::total() const {
    return std::accumulate(n_per_species.begin(), n_per_species.end(), std::size_t{0});
}

std::vector<double> SpeciesCounts::proportions() const {
    const double n = static_cast<double>(total());
    std::vector<double> out;
    out.reserve(n_per_species.size());
    for (std::size_t c : n_per_species) out.push_back(static_cast<double>(c) / n);
    return out;
}

std::vector<std::size_t> SpeciesCounts::offsets() const {
    std::vector<std::size_t> out(n_per_species.size() + 1, 0);
    for (std::size_t s = 0; s < n_per_species.size(); ++s) out[s + 1] = out[s] + n_per_species[s];
    return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string format_index(std::span<const std::size_t> idx, const MixedModel& model) {
    std::string out = "(";
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) out += ",";
        out += idx[i] < model.species.size() ? model.species[idx[i]] : std::to_string(idx[i]);
    }
    return out + ")";
}

}  // namespace

std::vector<Violation> validate_model(const MixedModel& model) {
    std::vector<Violation> out;
    const std::size_t S = model.species.size();
    if (S == 0) {
        out.push_back({"species", "model has no species"});
        return out;
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = s + 1; t < S; ++t)
            if (model.species[s] == model.species[t])
                out.push_back({"species", "duplicate species label '" + model.species[s] + "'"});
    if (model.lambda.size() != S) {
        out.push_back({"lambda", "expected " + std::to_string(S) + " weights, got " +
                                     std::to_string(model.lambda.size())});
    } else {
        double sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            const double l = model.lambda[s];
            if (!(l > 0.0) || l > 1.0)
                out.push_back({"lambda", "weight of species '" + model.species[s] + "' is " + format_number(l) +
                                             ", outside (0,1]"});
            sum += l;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            out.push_back({"lambda", "weights sum to " + format_number(sum) + " ≠ 1"});
    }
    if (!(model.epsilon_decay > 0.0) || !std::isfinite(model.epsilon_decay))
        out.push_back({"epsilon_decay", "decay witness must be a positive finite number"});

    double decay_sum = 0.0;
    for (std::size_t t = 0; t < model.terms.size(); ++t) {
        const auto& term = model.terms[t];
        const std::string where = "term " + std::to_string(t) + " (p=" + std::to_string(term.p) + ")";
        if (term.p < 1) out.push_back({"degree", where + ": degree must be >= 1"});
        if (!(term.beta >= 0.0) || !std::isfinite(term.beta))
            out.push_back({"beta", where + ": beta must be finite and >= 0"});
        const auto& tensor = term.delta_sq;
        if (tensor.species() != S || tensor.order() != static_cast<std::size_t>(std::max(term.p, 0))) {
            out.push_back({"tensor_shape", where + ": tensor must have order p over all species"});
            continue;
        }
        bool symmetric = true;
        tensor.for_each_nonzero([&](std::span<const std::size_t> idx, double v) {
            if (!(v >= 0.0) || !std::isfinite(v))
                out.push_back({"tensor_entries", where + ": negative or non-finite entry at " +
                                                     format_index(idx, model)});
            if (!symmetric) return;
            std::vector<std::size_t> perm(idx.begin(), idx.end());
            std::sort(perm.begin(), perm.end());
            do {
                if (tensor.at(perm) != v) {
                    symmetric = false;
                    // Report the offending pair of index tuples.
                    std::vector<std::size_t> a(idx.begin(), idx.end());
                    const bool smaller = std::lexicographical_compare(perm.begin(), perm.end(), a.begin(), a.end());
                    const auto& first = smaller ? perm : a;
                    out.push_back({"tensor_symmetry",
                                   where + ": tensor not symmetric at " + format_index(first, model)});
                    return;
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
        });
        decay_sum += term.beta * term.beta * tensor.max_entry() * std::pow(1.0 + model.epsilon_decay, term.p);
    }
    if (!std::isfinite(decay_sum))
        out.push_back({"decay", "sum of beta_p^2 |Delta^2_p| (1+eps)^p is not finite"});
    return out;
}

std::vector<Violation> validate_counts(const MixedModel& model, const SpeciesCounts& counts) {
    std::vector<Violation> out;
    if (counts.n_per_species.size() != model.species.size()) {
        out.push_back({"counts", "expected " + std::to_string(model.species.size()) + " species counts"});
        return out;
    }
    for (std::size_t s = 0; s < counts.n_per_species.size(); ++s)
        if (counts.n_per_species[s] < 1)
            out.push_back({"counts", "species '" + model.species[s] + "' has no coordinates"});
    return out;
}

void require_valid(const MixedModel& model) {
    const auto violations = validate_model(model);
    if (violations.empty()) return;
    std::string msg = "invalid model:";
    for (const auto& v : violations) msg += "\n  [" + v.invariant + "] " + v.detail;
    throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Covariance polynomials

namespace {

void check_argument(const MixedModel& model, std::span<const double> q) {
    if (q.size() != model.species.size())
        throw DomainError("overlap vector has " + std::to_string(q.size()) + " entries, expected " +
                          std::to_string(model.species.size()));
    for (double v : q)
        if (!(std::abs(v) <= 1.0 + 1e-12)) throw DomainError("overlap coordinate " + format_number(v) + " outside [-1,1]");
}

// Calls fn(p, coefficient, idx) where coefficient = beta_p^2 Delta^2 prod w^{s_i}.
template <typename Fn>
void for_each_monomial(const MixedModel& model, std::span<const double> weights, Fn&& fn) {
    for (const auto& term : model.terms) {
        const double b2 = term.beta * term.beta;
        if (b2 == 0.0) continue;
        term.delta_sq.for_each_nonzero([&](std::span<const std::size_t> idx, double v) {
            double c = b2 * v;
            for (std::size_t s : idx) c *= weights[s];
            fn(term.p, c, idx);
        });
    }
}

double monomial(std::span<const std::size_t> idx, std::span<const double> q) {
    double m = 1.0;
    for (std::size_t s : idx) m *= q[s];
    return m;
}

}  // namespace

namespace detail {

double xi_weighted(const MixedModel& model, std::span<const double> weights, std::span<const double> q) {
    check_argument(model, q);
    double sum = 0.0;
    for_each_monomial(model, weights, [&](int, double c, std::span<const std::size_t> idx) { sum += c * monomial(idx, q); });
    return sum;
}

double theta_weighted(const MixedModel& model, std::span<const double> weights, std::span<const double> q) {
    check_argument(model, q);
    double sum = 0.0;
    for_each_monomial(model, weights, [&](int p, double c, std::span<const std::size_t> idx) {
        if (p > 1) sum += (p - 1) * c * monomial(idx, q);
    });
    return sum;
}

XiDerivatives derivatives_weighted(const MixedModel& model, std::span<const double> weights,
                                   std::span<const double> q) {
    check_argument(model, q);
    const std::size_t S = model.species.size();
    XiDerivatives d{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S)),
                    Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S))};
    for_each_monomial(model, weights, [&](int, double c, std::span<const std::size_t> idx) {
        const std::size_t p = idx.size();
        for (std::size_t i = 0; i < p; ++i) {
            double g = c;
            for (std::size_t l = 0; l < p; ++l)
                if (l != i) g *= q[idx[l]];
            d.gradient(static_cast<Eigen::Index>(idx[i])) += g;
            for (std::size_t j = 0; j < p; ++j) {
                if (j == i) continue;
                double h = c;
                for (std::size_t l = 0; l < p; ++l)
                    if (l != i && l != j) h *= q[idx[l]];
                d.hessian(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j])) += h;
            }
        }
    });
    return d;
}

}  // namespace detail

double xi(const MixedModel& model, std::span<const double> q) {
    return detail::xi_weighted(model, model.lambda, q);
}

double xi_finite_n(const MixedModel& model, const SpeciesCounts& counts, std::span<const double> q) {
    if (counts.n_per_species.size() != model.species.size())
        throw ValidationError("species counts do not match the model");
    const auto w = counts.proportions();
    return detail::xi_weighted(model, w, q);
}

double xi_s(const MixedModel& model, std::size_t s, std::span<const double> q) {
    if (s >= model.species.size()) throw ValidationError("unknown species index " + std::to_string(s));
    check_argument(model, q);
    // sum_p p beta_p^2 sum_{t in S^{p-1}} Delta^2_{(t,s)} lambda^t q^t. By
    // symmetry of Delta^2 this is the derivative of xi in q^s divided by
    // lambda^s, computed here without dividing.
    double sum = 0.0;
    for (const auto& term : model.terms) {
        const double b2 = term.beta * term.beta;
        if (b2 == 0.0) continue;
        term.delta_sq.for_each_nonzero([&](std::span<const std::size_t> idx, double v) {
            if (idx.back() != s) return;
            double c = term.p * b2 * v;
            for (std::size_t i = 0; i + 1 < idx.size(); ++i) c *= model.lambda[idx[i]] * q[idx[i]];
            sum += c;
        });
    }
    return sum;
}

double xi_s(const MixedModel& model, std::string_view species, std::span<const double> q) {
    return xi_s(model, model.species_index(species), q);
}

double theta(const MixedModel& model, std::span<const double> q) {
    return detail::theta_weighted(model, model.lambda, q);
}

XiDerivatives xi_derivatives(const MixedModel& model, std::span<const double> q) {
    return detail::derivatives_weighted(model, model.lambda, q);
}

ConvexityReport check_convexity(const MixedModel& model, std::size_t grid_resolution) {
    if (grid_resolution < 2) throw ValidationError("check_convexity: grid_resolution must be >= 2");
    const std::size_t S = model.species.size();
    ConvexityReport report;
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    std::vector<double> q(S, 0.0);

    auto visit = [&](const std::vector<double>& point) {
        const auto d = xi_derivatives(model, point);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(d.hessian, Eigen::EigenvaluesOnly);
        const double ev = solver.eigenvalues().minCoeff();
        if (ev < report.min_eigenvalue) {
            report.min_eigenvalue = ev;
            report.worst_point = point;
        }
    };

    if (S <= 3) {
        std::vector<std::size_t> idx(S, 0);
        for (;;) {
            for (std::size_t s = 0; s < S; ++s)
                q[s] = static_cast<double>(idx[s]) / static_cast<double>(grid_resolution - 1);
            visit(q);
            std::size_t pos = S;
            while (pos-- > 0) {
                if (++idx[pos] < grid_resolution) break;
                idx[pos] = 0;
            }
            if (pos == static_cast<std::size_t>(-1)) break;
        }
    } else {
        Rng rng(0x5eedc0417e7ULL);
        for (std::size_t n = 0; n < 100000; ++n) {
            for (std::size_t s = 0; s < S; ++s) q[s] = rng.uniform();
            visit(q);
        }
    }
    report.convex = report.min_eigenvalue >= -1e-10;
    return report;
}

double c_star(const MixedModel& model) {
    const std::size_t S = model.species.size();
    const std::vector<double> ones(S, 1.0);
    const auto d = xi_derivatives(model, ones);
    double best = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t t = 0; t < S; ++t)
            best = std::max(best, d.hessian(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) /
                                      model.lambda[s]);
    return best;
}

std::uint64_t model_hash(const MixedModel& model) {
    std::ostringstream os;
    os.precision(17);
    os << "species";
    for (const auto& s : model.species) os << ' ' << s;
    os << "\nlambda";
    for (double l : model.lambda) os << ' ' << l;
    os << "\neps " << model.epsilon_decay;
    for (const auto& t : model.terms) {
        os << "\nterm " << t.p << ' ' << t.beta;
        t.delta_sq.for_each_nonzero([&](std::span<const std::size_t> idx, double v) {
            os << " [";
            for (std::size_t i : idx) os << i << ',';
            os << v << ']';
        });
    }
    const std::string text = os.str();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Canned models

namespace models {

namespace {

std::vector<std::string> default_labels(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t s = 0; s < n; ++s) out.push_back(std::string(1, static_cast<char>('a' + s)));
    return out;
}

}  // namespace

MixedModel zero(std::vector<double> lambda) {
    MixedModel m;
    m.species = default_labels(lambda.size());
    m.lambda = std::move(lambda);
    return m;
}

MixedModel single_species(std::vector<std::pair<int, double>> terms) {
    MixedModel m = zero({1.0});
    for (auto [p, beta] : terms)
        m.terms.push_back({p, beta, InteractionTensor::filled(1, static_cast<std::size_t>(p), 1.0)});
    return m;
}

MixedModel all_ones(std::vector<double> lambda, int p, double beta) {
    MixedModel m = zero(std::move(lambda));
    m.terms.push_back({p, beta, InteractionTensor::filled(m.species.size(), static_cast<std::size_t>(p), 1.0)});
    return m;
}

MixedModel bipartite(double beta, std::vector<double> lambda) {
    if (lambda.size() != 2) throw ValidationError("bipartite model needs exactly two species");
    MixedModel m = zero(std::move(lambda));
    InteractionTensor t(2, 2);
    const std::size_t ab[] = {0, 1};
    const std::size_t ba[] = {1, 0};
    t.set(ab, 1.0);
    t.set(ba, 1.0);
    m.terms.push_back({2, beta, std::move(t)});
    return m;
}

}  // namespace models

}  // namespace spinglass
