#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ope/model.hpp"
#include "ope/oracle.hpp"
#include "ope/probtables.hpp"
#include "ope/simulate.hpp"

namespace ope {

struct EstimatorDiagnostics {
    std::vector<double> norm_residual;  // |sum_r P(r_t = r) - 1| per step
    double worst_condition = 0.0;
    std::size_t nan_skipped = 0;  // terms dropped for undefined conditioning contexts
    std::optional<IndexSets> index_sets;
    std::size_t dropped_records = 0;
    std::size_t excluded_contexts = 0;
    std::size_t clip_events = 0;
    std::string path;          // "dynamic-program", "enumeration", "records", "population"
    std::string context_mode;  // IS estimators only
    double stderr_v = std::numeric_limits<double>::quiet_NaN();
    std::size_t terms = 0;

    double max_norm_residual() const;
    nlohmann::json to_json() const;
};

struct EstimateRecord {
    std::string method;
    double v_hat = 0.0;
    std::vector<RewardDistribution> per_step;
    EstimatorDiagnostics diag;
};

/// Discounted value implied by per-step reward distributions.
double value_of(const std::vector<RewardDistribution>& per_step, double gamma);

struct ChainOptions {
    SolveOptions solve;
    std::size_t budget = 100'000'000;
    /// Use explicit enumeration over observable trajectories even for memoryless policies.
    bool force_enumeration = false;
    /// Divide each estimated P(r_t) by its total before computing the value (plotting aid).
    bool renormalize = false;
};

/// The W_i(tau) matrices of one observable trajectory, their product and the policy product.
struct WeightChain {
    std::vector<Eigen::MatrixXd> w;
    Eigen::VectorXd omega;
    double pi_e = 1.0;
};

/// Builds W_0..W_t for tau = (z_0, a_0, ..., z_t, a_t) from POMDP matrices.
WeightChain theorem1_chain(const MatrixSource& src, const EvaluationPolicy& policy, const std::vector<int>& z,
                           const std::vector<int>& a, const SolveOptions& opts = {});

EstimateRecord theorem1_value(const MatrixSource& src, const EvaluationPolicy& policy, int horizon, double gamma,
                              const ChainOptions& opts = {});

/// Index sets default to select_index_sets on the same source.
EstimateRecord theorem2_value(const MatrixSource& src, const EvaluationPolicy& policy, int horizon, double gamma,
                              const std::optional<IndexSets>& sets = std::nullopt, const ChainOptions& opts = {});

/// P(r_L) under the policy that follows the behavior policy before L and pi_e at L.
RewardDistribution proposition1_value(const MatrixSource& src, const EvaluationPolicy& policy, int horizon,
                                      const SolveOptions& opts = {});

struct ISOptions {
    ContextMode mode = ContextMode::FullHistory;
    int min_count = 5;
    std::optional<double> clip;  // cap on the weight product
};

/// IS with weights pi_e(a|h) / P^b(a|context) estimated from the same records.
EstimateRecord naive_is_value(const std::vector<ObservableRecord>& data, const SpaceSpec& spaces,
                              const EvaluationPolicy& policy, double gamma, const ISOptions& opts = {});

/// The same estimator's expectation computed exactly from the model (population quantities).
EstimateRecord naive_is_population(const AnyModel& model, const BehaviorPolicy& behavior,
                                   const EvaluationPolicy& policy, int horizon, ContextMode mode,
                                   const OracleOptions& opts = {});

/// IS with the true weights pi_e(a|h) / pi_b(a|hidden) on full trajectories.
EstimateRecord oracle_is_value(const Dataset& data, const SpaceSpec& spaces, const EvaluationPolicy& policy,
                               const BehaviorPolicy& behavior, double gamma);

struct Assumption1Report {
    bool reward_condition = false;
    double transition_violation = 0.0;
    bool holds = false;
};

Assumption1Report check_assumption1(const AnyModel& model, const BehaviorPolicy& behavior,
                                    const EvaluationPolicy& policy, int horizon, const OracleOptions& opts = {});

}  // namespace ope
