#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ope/model.hpp"
#include "ope/model_io.hpp"
#include "ope/probtables.hpp"

namespace ope {

/// Raised when an exact enumeration would exceed its term budget.
class BudgetExceededError : public Error {
public:
    using Error::Error;
};

/// Distribution of r_t over the model's reward support.
struct RewardDistribution {
    int t = 0;
    std::vector<double> values;
    std::vector<double> prob;

    double expectation() const;
    double total() const;
};

struct ValueResult {
    double v = 0.0;
    std::vector<RewardDistribution> per_step;
    std::string path;       // which computation produced the value
    std::size_t terms = 0;  // enumeration terms visited (0 for recursions)
};

struct OracleOptions {
    std::size_t budget = 100'000'000;
};

/// Exact discounted value of a behavior (hidden-state) or evaluation (history) policy.
ValueResult exact_value(const AnyModel& model, const AnyPolicy& policy, int horizon, const OracleOptions& opts = {});

/// Exact P^e(r_t) by enumerating full trajectories (hidden and observable).
RewardDistribution exact_reward_dist(const AnyModel& model, const EvaluationPolicy& policy, int t,
                                     const OracleOptions& opts = {});

/// Reward distribution at step L of the policy that follows the behavior policy
/// for t < L and the evaluation policy at L.
RewardDistribution composite_reward_dist(const TabularPOMDP& model, const BehaviorPolicy& behavior,
                                         const EvaluationPolicy& policy, int horizon);

CondProbMatrix population_matrix(const AnyModel& model, const BehaviorPolicy& behavior, const MatrixDescriptor& d);

struct IdentityResidual {
    std::string name;
    double max_residual = 0.0;
    std::size_t compared = 0;  // matrix identities evaluated
    std::size_t skipped = 0;   // identities with an undefined conditioning context
};

struct IdentityReport {
    std::vector<IdentityResidual> residuals;

    double max_residual() const;
};

/// Checks the matrix identities behind both identification results at step t >= 1.
IdentityReport verify_lemma_identities(const AnyModel& model, const BehaviorPolicy& behavior, int t);

struct MonteCarloResult {
    double v = 0.0;
    double stderr_v = 0.0;
};

MonteCarloResult monte_carlo_value(const AnyModel& model, const EvaluationPolicy& policy, int horizon,
                                   std::size_t n, std::uint64_t seed, int threads = 1);

/// Discounted return of a reward-index sequence.
double discounted_return(const std::vector<int>& r, const SpaceSpec& s, double gamma);

}  // namespace ope
