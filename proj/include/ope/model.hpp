#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ope {

using ProbVector = std::vector<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An input model or policy failed validation.
class InvalidModelError : public Error {
public:
    using Error::Error;
};

/// A caller passed arguments that do not fit the operation (wrong policy kind, bad step, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

enum class ModelKind { Pomdp, Decoupled };

const char* to_string(ModelKind kind);

/// Cardinalities of the finite spaces plus the discrete reward support.
///
/// Reward values must be finite and strictly increasing. Generated
/// environments keep them in [0,1] except the IS counterexample, whose
/// rewards scale with alpha and take negative values.
struct SpaceSpec {
    int n_u = 0;
    int n_z = 0;
    int n_a = 0;
    int n_o = 0;  // independent observations; Decoupled models only
    std::vector<double> reward_values;

    int n_r() const { return static_cast<int>(reward_values.size()); }
};

/// Plain POMDP: hidden u, observation z ~ O(.|u), reward r(u, a).
///
/// Tables are stored flat, row-major in the index order given next to each
/// member. Instances are treated as immutable values once built.
struct TabularPOMDP {
    SpaceSpec spaces;
    std::vector<double> transition;       // [a][u][u']
    std::vector<double> observation;      // [u][z]
    std::vector<double> pre_observation;  // [u0][z_-1]
    std::vector<int> reward;              // [u][a] -> index into reward_values
    double gamma = 0.9;
    std::vector<double> init;  // [u0]

    double trans(int u, int a, int u2) const {
        return transition[(static_cast<std::size_t>(a) * spaces.n_u + u) * spaces.n_u + u2];
    }
    double obs(int u, int z) const { return observation[static_cast<std::size_t>(u) * spaces.n_z + z]; }
    double pre_obs(int u, int z) const { return pre_observation[static_cast<std::size_t>(u) * spaces.n_z + z]; }
    int reward_index(int u, int a) const { return reward[static_cast<std::size_t>(u) * spaces.n_a + a]; }
    double reward_value(int u, int a) const { return spaces.reward_values[reward_index(u, a)]; }
};

/// Decoupled POMDP: observed chain z, unobserved chain u, independent
/// observation o ~ P_O(.|u), reward r(u, z, a).
struct TabularDPOMDP {
    SpaceSpec spaces;
    std::vector<double> transition;               // [a][z][u][z'][u']
    std::vector<double> independent_observation;  // [u][o]
    std::vector<int> reward;                      // [u][z][a]
    double gamma = 0.9;
    std::vector<double> init;  // [z_-1][z0][u0]

    double trans(int z, int u, int a, int z2, int u2) const {
        const auto nz = static_cast<std::size_t>(spaces.n_z);
        const auto nu = static_cast<std::size_t>(spaces.n_u);
        return transition[(((a * nz + z) * nu + u) * nz + z2) * nu + u2];
    }
    double obs(int u, int o) const {
        return independent_observation[static_cast<std::size_t>(u) * spaces.n_o + o];
    }
    int reward_index(int u, int z, int a) const {
        return reward[(static_cast<std::size_t>(u) * spaces.n_z + z) * spaces.n_a + a];
    }
    double reward_value(int u, int z, int a) const { return spaces.reward_values[reward_index(u, z, a)]; }
    double init_prob(int z_pre, int z0, int u0) const {
        return init[(static_cast<std::size_t>(z_pre) * spaces.n_z + z0) * spaces.n_u + u0];
    }
};

/// Time-indexed behavior policy over hidden contexts.
///
/// Context index is u for POMDPs and u * n_z + z for Decoupled models.
struct BehaviorPolicy {
    ModelKind kind = ModelKind::Pomdp;
    int n_context = 0;
    int n_a = 0;
    std::vector<std::vector<double>> tables;  // [t][context * n_a + a]

    int horizon() const { return static_cast<int>(tables.size()) - 1; }
    double prob(int t, int context, int a) const {
        return tables[t][static_cast<std::size_t>(context) * n_a + a];
    }
};

/// Observable history h_t: z_0..z_t, o_0..o_t (Decoupled), a_0..a_{t-1}.
struct ObservableHistory {
    std::vector<int> z;
    std::vector<int> o;
    std::vector<int> a;

    int step() const { return static_cast<int>(z.size()) - 1; }
};

/// Evaluation policy: either a memoryless table over the current observation
/// (z for POMDPs, z * n_o + o for Decoupled models) or an arbitrary pure
/// function of the observable history.
class EvaluationPolicy {
public:
    using HistoryFn = std::function<ProbVector(int t, const ObservableHistory&)>;

    static EvaluationPolicy memoryless(ModelKind kind, int n_context, int n_a,
                                       std::vector<std::vector<double>> tables);
    static EvaluationPolicy general(ModelKind kind, int n_a, int horizon, HistoryFn fn);

    ModelKind kind() const { return kind_; }
    bool is_memoryless() const { return !fn_; }
    int n_a() const { return n_a_; }
    int n_context() const { return n_context_; }
    int horizon() const { return horizon_; }
    const std::vector<std::vector<double>>& tables() const { return tables_; }

    /// Memoryless lookup. Throws UsageError for general policies.
    double prob(int t, int context, int a) const;
    ProbVector action_dist(int t, const ObservableHistory& h, int n_o = 0) const;

private:
    ModelKind kind_ = ModelKind::Pomdp;
    int n_context_ = 0;
    int n_a_ = 0;
    int horizon_ = 0;
    std::vector<std::vector<double>> tables_;
    HistoryFn fn_;
};

/// Full trajectory including the hidden states.
struct Trajectory {
    int z_pre = 0;
    std::vector<int> u;
    std::vector<int> z;
    std::vector<int> o;  // empty for POMDPs
    std::vector<int> a;
    std::vector<int> r;  // indices into reward_values
};

/// Projection of a Trajectory without hidden states.
struct ObservableRecord {
    int z_pre = 0;
    std::vector<int> z;
    std::vector<int> o;
    std::vector<int> a;
    std::vector<int> r;

    int horizon() const { return static_cast<int>(a.size()) - 1; }
    bool operator==(const ObservableRecord&) const = default;
};

ObservableRecord project(const Trajectory& tr);

struct Violation {
    std::string location;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

inline constexpr double kSumTolerance = 1e-12;

ValidationReport validate_spaces(const SpaceSpec& s, ModelKind kind);
ValidationReport validate_pomdp(const TabularPOMDP& m);
ValidationReport validate_dpomdp(const TabularDPOMDP& m);
ValidationReport validate_behavior(const BehaviorPolicy& p, const SpaceSpec& s);
ValidationReport validate_evaluation(const EvaluationPolicy& p, const SpaceSpec& s);

/// Throws InvalidModelError carrying the report if it is not empty.
void require_valid(const ValidationReport& report, const std::string& what);

/// The Decoupled model as a POMDP with hidden (u, z) and observation (z, o).
///
/// Hidden index is u * n_z + z, observation index is z * n_o + o. The
/// pre-observation of the embedding is (z_-1, o_-1) with z_-1 drawn from the
/// init joint given (z0, u0) and o_-1 ~ P_O(.|u0).
TabularPOMDP embed_dpomdp_as_pomdp(const TabularDPOMDP& m);

/// Re-indexes a Decoupled behavior policy onto the embedded hidden space.
BehaviorPolicy embed_behavior(const BehaviorPolicy& p, const SpaceSpec& s);

/// Re-indexes a Decoupled evaluation policy onto the embedded observation space.
EvaluationPolicy embed_evaluation(const EvaluationPolicy& p, const SpaceSpec& s);

/// Policy lookup with a dynamically typed context.
struct HiddenContext {
    int index = 0;
};
using PolicyContext = std::variant<HiddenContext, ObservableHistory>;
using AnyPolicy = std::variant<BehaviorPolicy, EvaluationPolicy>;

ProbVector policy_action_dist(const AnyPolicy& p, int t, const PolicyContext& ctx, int n_o = 0);

/// Stationary policy stored by replication over `horizon + 1` steps.
BehaviorPolicy replicate_behavior(ModelKind kind, int n_context, int n_a, const std::vector<double>& table,
                                  int horizon);

}  // namespace ope
