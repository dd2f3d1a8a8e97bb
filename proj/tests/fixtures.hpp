#pragma once

#include "ope/model.hpp"

namespace fixtures {

// Two hidden states, two observations, two actions, rewards {0, 1}.
inline ope::TabularPOMDP tiny_pomdp() {
    ope::TabularPOMDP m;
    m.spaces = {2, 2, 2, 0, {0.0, 1.0}};
    m.transition = {0.8, 0.2, 0.3, 0.7,   // a = 0
                    0.4, 0.6, 0.1, 0.9};  // a = 1
    m.observation = {0.9, 0.1, 0.25, 0.75};
    m.pre_observation = {0.6, 0.4, 0.2, 0.8};
    m.reward = {1, 0, 0, 1};
    m.gamma = 0.5;
    m.init = {0.5, 0.5};
    return m;
}

inline ope::BehaviorPolicy tiny_behavior(int horizon) {
    return ope::replicate_behavior(ope::ModelKind::Pomdp, 2, 2, {0.7, 0.3, 0.2, 0.8}, horizon);
}

inline ope::EvaluationPolicy tiny_eval(int horizon) {
    std::vector<std::vector<double>> tables(horizon + 1, {0.1, 0.9, 0.6, 0.4});
    return ope::EvaluationPolicy::memoryless(ope::ModelKind::Pomdp, 2, 2, tables);
}

// n_u = 2, n_z = 2, n_o = 2, n_a = 2 with uniform init.
inline ope::TabularDPOMDP tiny_dpomdp() {
    ope::TabularDPOMDP m;
    m.spaces = {2, 2, 2, 2, {0.0, 0.5, 1.0}};
    const int n = 2 * 2 * 2 * 2 * 2;
    m.transition.resize(n);
    for (int a = 0; a < 2; ++a)
        for (int z = 0; z < 2; ++z)
            for (int u = 0; u < 2; ++u) {
                double* row = &m.transition[((a * 2 + z) * 2 + u) * 4];
                // P(z' = 0 | z, u, a) times P(u' | u, z'), which keeps u' tied to u.
                const double stay = 0.6 + 0.1 * a - 0.2 * u + 0.05 * z;
                const double keep0 = 0.85, keep1 = 0.65;
                row[0] = stay * (u == 0 ? keep0 : 1 - keep0);
                row[1] = stay * (u == 1 ? keep0 : 1 - keep0);
                row[2] = (1 - stay) * (u == 0 ? keep1 : 1 - keep1);
                row[3] = (1 - stay) * (u == 1 ? keep1 : 1 - keep1);
            }
    m.independent_observation = {0.8, 0.2, 0.3, 0.7};
    m.reward = {0, 2, 1, 1, 2, 0, 1, 2};
    m.gamma = 0.8;
    m.init.assign(8, 0.0);
    const double w[8] = {0.2, 0.1, 0.05, 0.15, 0.05, 0.1, 0.15, 0.2};
    for (int i = 0; i < 8; ++i) m.init[i] = w[i];
    return m;
}

inline ope::BehaviorPolicy tiny_dbehavior(int horizon) {
    return ope::replicate_behavior(ope::ModelKind::Decoupled, 4, 2, {0.5, 0.5, 0.3, 0.7, 0.9, 0.1, 0.4, 0.6},
                                   horizon);
}

inline ope::EvaluationPolicy tiny_deval(int horizon) {
    std::vector<std::vector<double>> tables(horizon + 1, {0.2, 0.8, 0.5, 0.5, 0.7, 0.3, 1.0, 0.0});
    return ope::EvaluationPolicy::memoryless(ope::ModelKind::Decoupled, 4, 2, tables);
}

}  // namespace fixtures
