#pragma once

// Interaction-graph prior: the normalized Laplacian of a gene graph and the
// Gaussian Markov random field it induces on each membership-coupling column.

#include "sntf/dist.hpp"
#include "sntf/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sntf {

/// Undirected, simple, optionally weighted graph over labelled nodes.
class InteractionGraph {
  public:
    struct Edge {
        std::size_t a; // a < b
        std::size_t b;
        double weight;
        bool operator==(const Edge&) const = default;
    };

    InteractionGraph() = default;

    /// Throws FormatError on duplicate labels.
    explicit InteractionGraph(std::vector<std::string> labels) {
        for (auto& l : labels) {
            if (contains(l))
                throw FormatError("duplicate node label '" + l + "'");
            push_node(std::move(l));
        }
    }

    /// Index of `label`, adding it if absent.
    std::size_t add_node(const std::string& label) {
        auto it = index_.find(label);
        if (it != index_.end())
            return it->second;
        push_node(label);
        return node_labels_.size() - 1;
    }

    /// Adds an undirected edge; a repeated edge keeps the larger weight.
    /// Self-loops are rejected with a DomainError.
    void add_edge(std::size_t u, std::size_t v, double weight = 1.0) {
        if (u == v)
            throw DomainError("self-loop on node '" + node_labels_.at(u) + "'");
        if (u >= size() || v >= size())
            throw DomainError("edge references unknown node");
        if (!(weight >= 0.0) || !std::isfinite(weight))
            throw DomainError("edge weight must be finite and nonnegative");
        const auto key = std::minmax(u, v);
        auto it = edge_slot_.find({key.first, key.second});
        if (it != edge_slot_.end()) {
            edges_[it->second].weight = std::max(edges_[it->second].weight, weight);
            return;
        }
        edge_slot_.emplace(std::pair{key.first, key.second}, edges_.size());
        edges_.push_back({key.first, key.second, weight});
    }

    void add_edge(const std::string& u, const std::string& v,
                  double weight = 1.0) {
        const auto a = add_node(u);
        const auto b = add_node(v);
        add_edge(a, b, weight);
    }

    std::size_t size() const noexcept { return node_labels_.size(); }
    const std::vector<std::string>& node_labels() const noexcept {
        return node_labels_;
    }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    bool contains(const std::string& label) const {
        return index_.count(label) > 0;
    }
    std::size_t index_of(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end())
            throw DomainError("unknown node label '" + label + "'");
        return it->second;
    }

    /// Subgraph induced by `labels`, with nodes in the given order.
    InteractionGraph induced(const std::vector<std::string>& labels) const {
        InteractionGraph sub(labels);
        std::vector<long> remap(size(), -1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto it = index_.find(labels[i]);
            if (it != index_.end())
                remap[it->second] = static_cast<long>(i);
        }
        for (const auto& e : edges_) {
            if (remap[e.a] >= 0 && remap[e.b] >= 0)
                sub.add_edge(static_cast<std::size_t>(remap[e.a]),
                             static_cast<std::size_t>(remap[e.b]), e.weight);
        }
        return sub;
    }

    bool operator==(const InteractionGraph& o) const {
        return node_labels_ == o.node_labels_ && edges_ == o.edges_;
    }

  private:
    void push_node(std::string label) {
        index_.emplace(label, node_labels_.size());
        node_labels_.push_back(std::move(label));
    }

    std::vector<std::string> node_labels_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Edge> edges_;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_slot_;
};

/// Normalized Laplacian L = I - D^{-1/2} A D^{-1/2} together with the GMRF
/// precision Lambda = L + epsilon*I, its sparse Cholesky factor and log
/// determinant. Immutable after construction.
class LaplacianOperator {
  public:
    using SparseMatrix = Eigen::SparseMatrix<double>;

    LaplacianOperator(const InteractionGraph& g, double epsilon)
        : epsilon_(epsilon) {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw DomainError("Laplacian jitter must be finite and >= 0");
        const auto n = static_cast<Eigen::Index>(g.size());
        if (n < 1)
            throw DomainError("graph must have at least one node");

        Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
        for (const auto& e : g.edges()) {
            degree(static_cast<Eigen::Index>(e.a)) += e.weight;
            degree(static_cast<Eigen::Index>(e.b)) += e.weight;
        }

        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(g.edges().size() * 2 + static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j)
            trips.emplace_back(j, j, 1.0);
        for (const auto& e : g.edges()) {
            const auto a = static_cast<Eigen::Index>(e.a);
            const auto b = static_cast<Eigen::Index>(e.b);
            if (e.weight == 0.0)
                continue;
            const double v = -e.weight / std::sqrt(degree(a) * degree(b));
            trips.emplace_back(a, b, v);
            trips.emplace_back(b, a, v);
        }
        laplacian_.resize(n, n);
        laplacian_.setFromTriplets(trips.begin(), trips.end());
        laplacian_.makeCompressed();

        SparseMatrix eye(n, n);
        eye.setIdentity();
        precision_ = laplacian_ + epsilon * eye;
        precision_.makeCompressed();
        precision_diag_ = precision_.diagonal();

        Eigen::SimplicialLLT<SparseMatrix> llt(precision_);
        if (llt.info() != Eigen::Success)
            throw DomainError("Laplacian precision is not positive definite; "
                              "use a positive jitter");
        chol_upper_ = llt.matrixU();
        perm_inv_ = llt.permutationPinv();
        log_det_ = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            log_det_ += 2.0 * std::log(chol_upper_.coeff(j, j));
    }

    Eigen::Index dimension() const noexcept { return laplacian_.rows(); }
    double epsilon() const noexcept { return epsilon_; }
    const SparseMatrix& laplacian() const noexcept { return laplacian_; }
    const SparseMatrix& precision() const noexcept { return precision_; }
    const Eigen::VectorXd& precision_diagonal() const noexcept {
        return precision_diag_;
    }
    double log_det_precision() const noexcept { return log_det_; }

    double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& g) const {
        check_dim(g.size());
        return g.dot(precision_ * g);
    }

    /// Maps a standard-normal vector to a draw from N(0, Lambda^{-1}).
    Eigen::VectorXd correlate(const Eigen::Ref<const Eigen::VectorXd>& z) const {
        check_dim(z.size());
        Eigen::VectorXd y =
            chol_upper_.triangularView<Eigen::Upper>().solve(Eigen::VectorXd(z));
        return perm_inv_ * y;
    }

    void check_dim(Eigen::Index n) const {
        if (n != dimension())
            throw DomainError("vector length " + std::to_string(n) +
                              " does not match graph dimension " +
                              std::to_string(dimension()));
    }

  private:
    double epsilon_;
    SparseMatrix laplacian_;
    SparseMatrix precision_;
    Eigen::VectorXd precision_diag_;
    SparseMatrix chol_upper_;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic> perm_inv_;
    double log_det_ = 0.0;
};

inline LaplacianOperator normalized_laplacian(const InteractionGraph& g,
                                              double epsilon = 0.05) {
    return LaplacianOperator(g, epsilon);
}

/// log N(g | 0, Lambda^{-1}).
inline double gp_log_prior(const Eigen::Ref<const Eigen::VectorXd>& g,
                           const LaplacianOperator& lap) {
    const double d = static_cast<double>(lap.dimension());
    return 0.5 * lap.log_det_precision() - 0.5 * d * kLog2Pi -
           0.5 * lap.quadratic_form(g);
}

/// Per column r: E[g_r^T Lambda g_r] under a diagonal Gaussian with means
/// `mu_g(:,r)` and variances `var_g(:,r)`.
inline Eigen::VectorXd gp_cross_terms(const Eigen::MatrixXd& mu_g,
                                      const Eigen::MatrixXd& var_g,
                                      const LaplacianOperator& lap) {
    lap.check_dim(mu_g.rows());
    if (var_g.rows() != mu_g.rows() || var_g.cols() != mu_g.cols())
        throw DomainError("gp_cross_terms: mean/variance shape mismatch");
    const Eigen::MatrixXd lam_mu = lap.precision() * mu_g;
    Eigen::VectorXd out(mu_g.cols());
    for (Eigen::Index r = 0; r < mu_g.cols(); ++r)
        out(r) = mu_g.col(r).dot(lam_mu.col(r)) +
                 lap.precision_diagonal().dot(var_g.col(r));
    return out;
}

} // namespace sntf
