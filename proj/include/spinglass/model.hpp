#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace spinglass {

// Symmetric interaction tensor Delta^2_p over species indices. Stored densely
// (|S|^p entries, row-major) for p <= 4 and as a coordinate map above that.
class InteractionTensor {
public:
    static constexpr std::size_t kMaxDenseOrder = 4;

    InteractionTensor() = default;
    InteractionTensor(std::size_t species, std::size_t order);

    static InteractionTensor filled(std::size_t species, std::size_t order, double value);

    std::size_t species() const { return species_; }
    std::size_t order() const { return order_; }
    bool is_dense() const { return order_ <= kMaxDenseOrder; }

    double at(std::span<const std::size_t> index) const;
    void set(std::span<const std::size_t> index, double value);

    // Calls fn(index, value) for every nonzero entry, in lexicographic order.
    template <typename Fn>
    void for_each_nonzero(Fn&& fn) const {
        if (is_dense()) {
            std::vector<std::size_t> idx(order_, 0);
            for (std::size_t flat = 0; flat < dense_.size(); ++flat) {
                if (dense_[flat] != 0.0) fn(std::span<const std::size_t>(idx), dense_[flat]);
                for (std::size_t pos = order_; pos-- > 0;) {
                    if (++idx[pos] < species_) break;
                    idx[pos] = 0;
                }
            }
        } else {
            for (const auto& [idx, v] : sparse_)
                if (v != 0.0) fn(std::span<const std::size_t>(idx), v);
        }
    }

    double max_entry() const;

private:
    std::size_t flat_index(std::span<const std::size_t> index) const;

    std::size_t species_ = 0;
    std::size_t order_ = 0;
    std::vector<double> dense_;
    std::map<std::vector<std::size_t>, double> sparse_;
};

struct InteractionTerm {
    int p = 2;
    double beta = 0.0;
    InteractionTensor delta_sq;
};

// Multi-species mixed p-spin model: species weights lambda^s, per-degree
// inverse temperatures beta_p, and interaction tensors Delta^2_p.
struct MixedModel {
    std::vector<std::string> species;
    std::vector<double> lambda;
    std::vector<InteractionTerm> terms;
    double epsilon_decay = 1.0;

    std::size_t species_count() const { return species.size(); }
    std::size_t species_index(std::string_view label) const;
};

struct SpeciesCounts {
    std::vector<std::size_t> n_per_species;

    std::size_t total() const;
    std::vector<double> proportions() const;
    // First coordinate of each species block; blocks are contiguous.
    std::vector<std::size_t> offsets() const;
};

struct Violation {
    std::string invariant;
    std::string detail;
};

std::vector<Violation> validate_model(const MixedModel& model);
std::vector<Violation> validate_counts(const MixedModel& model, const SpeciesCounts& counts);

// Throws ValidationError listing every violation.
void require_valid(const MixedModel& model);

double xi(const MixedModel& model, std::span<const double> q);
double xi_finite_n(const MixedModel& model, const SpeciesCounts& counts, std::span<const double> q);
double xi_s(const MixedModel& model, std::size_t s, std::span<const double> q);
double xi_s(const MixedModel& model, std::string_view species, std::span<const double> q);
double theta(const MixedModel& model, std::span<const double> q);

struct XiDerivatives {
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

XiDerivatives xi_derivatives(const MixedModel& model, std::span<const double> q);

struct ConvexityReport {
    bool convex = true;
    std::vector<double> worst_point;
    double min_eigenvalue = 0.0;
};

// Smallest Hessian eigenvalue of xi over [0,1]^S: a uniform grid with
// `grid_resolution` points per axis for |S| <= 3, random sampling above that.
ConvexityReport check_convexity(const MixedModel& model, std::size_t grid_resolution = 21);

// max over (s, s') of d xi^s / d q^{s'} at the all-ones vector.
double c_star(const MixedModel& model);

// Stable 64-bit fingerprint of the model's canonical text form.
std::uint64_t model_hash(const MixedModel& model);

namespace detail {

// The covariance polynomials with explicit species weights in place of lambda
// (used for the finite-N versions).
double xi_weighted(const MixedModel& model, std::span<const double> weights, std::span<const double> q);
double theta_weighted(const MixedModel& model, std::span<const double> weights, std::span<const double> q);
XiDerivatives derivatives_weighted(const MixedModel& model, std::span<const double> weights,
                                   std::span<const double> q);

}  // namespace detail

// Canned models used throughout the tests, the CLI self-test, and the docs.
namespace models {

// No interaction terms.
MixedModel zero(std::vector<double> lambda = {1.0});

// One species, xi(q) = sum_p beta_p^2 q^p for the given (p, beta_p) list.
MixedModel single_species(std::vector<std::pair<int, double>> terms);

// Degree-p term with every Delta^2 entry equal to one.
MixedModel all_ones(std::vector<double> lambda, int p, double beta);

// Two species, p = 2, Delta^2 nonzero only off the diagonal.
MixedModel bipartite(double beta, std::vector<double> lambda = {0.5, 0.5});

}  // namespace models

}  // namespace spinglass
