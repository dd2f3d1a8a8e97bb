#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "ope/model.hpp"
#include "ope/probtables.hpp"

namespace ope {

struct Figure3Problem {
    TabularPOMDP model;
    BehaviorPolicy behavior;
    EvaluationPolicy evaluation;
    int horizon = 0;
};

/// The six-state IS counterexample; rewards scale with alpha.
Figure3Problem figure3_pomdp(double alpha, double gamma);

/// Horizon of the counterexample.
int figure3_horizon();

/// Weights of the synthetic medical environment. Features are two bits plus a
/// constant 1; each kernel has one weight vector per outcome (and action).
struct MedicalConfig {
    using W3 = std::array<double, 3>;
    using W6 = std::array<double, 6>;
    using W5 = std::array<double, 5>;

    std::uint64_t seed = 0;
    double alpha = 0.0;
    int horizon = 4;
    double gamma = 0.9;

    std::vector<W3> c_z;       // [z' * n_a + a], features phi_z(z)
    std::vector<W3> c_o;       // [o], features phi_u(u)
    std::vector<W3> c_mood;    // [a * 2 + mood'], features phi_u(u)
    std::vector<W6> c_look;    // [look'], features (phi_look(look), phi_z(z'))
    std::vector<W3> c_r_z;     // [a], features phi_z(z)
    std::vector<W3> c_r_u;     // [a], features phi_u(u)
    std::vector<W3> c_b_z;     // [a]
    std::vector<W3> c_b_u;     // [a]
    std::vector<W5> c_e;       // [a], features (z bits, o bits, 1)

    /// Weights drawn i.i.d. standard normal; evaluation weights use a separate stream.
    static MedicalConfig from_seed(std::uint64_t seed, double alpha, int horizon = 4, double gamma = 0.9);
    void validate() const;
};

inline constexpr int kMedicalStates = 4;
inline constexpr int kMedicalRewardLevels = 8;

struct MedicalProblem {
    TabularDPOMDP model;
    BehaviorPolicy behavior;
};

MedicalProblem medical_dpomdp(const MedicalConfig& cfg);
EvaluationPolicy medical_eval_policy(const MedicalConfig& cfg);

struct ControlProblem {
    TabularPOMDP model;
    BehaviorPolicy behavior;
    EvaluationPolicy evaluation;
    int horizon = 2;
};

/// POMDP whose hidden state is a deterministic function of the observation.
ControlProblem assumption1_env(std::uint64_t seed);

struct RandomSizes {
    int n_u = 2;
    int n_z = 2;
    int n_a = 2;
    int n_o = 2;  // Decoupled only
    int horizon = 2;
    std::vector<double> reward_values{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    double gamma = 0.9;
    /// Transition ignores the hidden state (degenerate; used to exercise rejection).
    bool iid_hidden = false;
};

struct RandomPomdp {
    TabularPOMDP model;
    BehaviorPolicy behavior;
    double certificate = 0.0;  // worst condition number of P(Z_i | a_i, Z_{i-1})
    int tries = 0;
};

struct RandomDpomdp {
    TabularDPOMDP model;
    BehaviorPolicy behavior;
    IndexSets index_sets;
    double certificate = 0.0;  // worst condition number over the selected sub-matrices
    int tries = 0;
};

RandomPomdp random_pomdp(std::uint64_t seed, const RandomSizes& sizes,
                         double condition_cap = std::numeric_limits<double>::infinity(), int max_tries = 1000);
RandomDpomdp random_dpomdp(std::uint64_t seed, const RandomSizes& sizes,
                           double condition_cap = std::numeric_limits<double>::infinity(), int max_tries = 1000);

/// Memoryless evaluation policy with Dirichlet(1) rows, time-dependent.
EvaluationPolicy random_eval_policy(std::uint64_t seed, ModelKind kind, int n_context, int n_a, int horizon);

}  // namespace ope
