#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "nlselect/errors.hpp"

namespace nlselect {

/* A model is the sorted set of active column indices.  Keeping the
 * representation canonical (sorted, unique, non-negative) makes the
 * ordering usable as a map key and makes equality mean set equality.
 */
class ModelIndex {
public:
    ModelIndex() = default;

    explicit ModelIndex(std::vector<int> indices) : idx_(std::move(indices)) {
        std::sort(idx_.begin(), idx_.end());
        idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
        if (!idx_.empty() && idx_.front() < 0) {
            throw Error("ModelIndex: negative column index");
        }
    }

    ModelIndex(std::initializer_list<int> indices)
        : ModelIndex(std::vector<int>(indices)) {}

    int size() const { return static_cast<int>(idx_.size()); }
    bool empty() const { return idx_.empty(); }

    bool contains(int j) const {
        return std::binary_search(idx_.begin(), idx_.end(), j);
    }

    /// Largest index, or -1 when empty.
    int max_index() const { return idx_.empty() ? -1 : idx_.back(); }

    ModelIndex with(int j) const {
        std::vector<int> v = idx_;
        v.push_back(j);
        return ModelIndex(std::move(v));
    }

    ModelIndex without(int j) const {
        std::vector<int> v;
        v.reserve(idx_.size());
        for (int i : idx_) {
            if (i != j) v.push_back(i);
        }
        return ModelIndex(std::move(v));
    }

    const std::vector<int>& indices() const { return idx_; }

    auto operator<=>(const ModelIndex&) const = default;

    std::string to_string() const {
        if (idx_.empty()) return "{}";
        std::string s = "{";
        for (std::size_t i = 0; i < idx_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(idx_[i]);
        }
        return s + "}";
    }

private:
    std::vector<int> idx_;
};

/* Regression data.  Library entry points that score models require the
 * standardized flag: columns centered with unit sample standard
 * deviation, response centered (not rescaled).
 */
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    bool standardized = false;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
};

inline void validate_dataset(const Dataset& data) {
    if (data.X.rows() != data.y.size()) {
        throw Error("dataset: X rows and y length differ");
    }
    if (data.n() < 2) throw Error("dataset: need at least 2 observations");
    if (data.p() < 1) throw Error("dataset: need at least 1 column");
}

/// Center columns, scale each to unit sample sd, center the response.
inline Dataset standardize(Eigen::MatrixXd X, Eigen::VectorXd y) {
    Dataset data{std::move(X), std::move(y), false};
    validate_dataset(data);
    const int n = data.n();
    for (int j = 0; j < data.p(); ++j) {
        const double mean = data.X.col(j).mean();
        data.X.col(j).array() -= mean;
        const double sd = std::sqrt(data.X.col(j).squaredNorm() / (n - 1));
        if (!(sd > 0.0)) {
            throw ZeroVarianceColumn("column " + std::to_string(j) +
                                     " has zero variance");
        }
        data.X.col(j) /= sd;
    }
    data.y.array() -= data.y.mean();
    data.standardized = true;
    return data;
}

/// (beta, tau, sigma2) for a given model's active coordinates.
struct ParamPoint {
    Eigen::VectorXd beta;
    double tau = 1.0;
    double sigma2 = 1.0;
};

enum class TauMode { hierarchical, fixed };

struct ModelPriorSpec {
    enum class Kind { uniform_restricted, complexity };
    Kind kind = Kind::uniform_restricted;
    double c1 = 2.0; // complexity prior base, per active variable
    double c2 = 1.0; // complexity prior exponent on p
};

struct HyperConfig {
    int r = 2;             // pMOM polynomial order
    double alpha1 = 0.01;  // sigma^2 ~ IG(alpha1, alpha2)
    double alpha2 = 0.01;
    TauMode tau_mode = TauMode::hierarchical;
    double fixed_tau = 0.072; // used only when tau_mode == fixed
    ModelPriorSpec model_prior;
    int q_n = 0; // model size cap; 0 derives ceil(n/2) from the data
};

inline void validate_hyper(const HyperConfig& cfg) {
    if (cfg.r < 1) throw Error("config: r must be a positive integer");
    if (!(cfg.alpha1 > 0.0) || !(cfg.alpha2 > 0.0)) {
        throw Error("config: alpha1 and alpha2 must be positive");
    }
    if (cfg.tau_mode == TauMode::fixed && !(cfg.fixed_tau > 0.0)) {
        throw NonPositiveScale("config: fixed tau must be positive");
    }
    if (cfg.model_prior.kind == ModelPriorSpec::Kind::complexity) {
        if (!(cfg.model_prior.c1 > 0.0) || !(cfg.model_prior.c2 > 0.0)) {
            throw Error("config: complexity prior constants must be positive");
        }
    }
    if (cfg.q_n < 0) throw Error("config: q_n must be >= 1 (or 0 for auto)");
}

/// Size cap actually in force for a sample of size n.
inline int effective_qn(const HyperConfig& cfg, int n) {
    if (cfg.q_n > 0) return cfg.q_n;
    return (n + 1) / 2;
}

} // namespace nlselect
