#include "ope/environments.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ope/model_io.hpp"
#include "ope/simulate.hpp"

namespace ope {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <std::size_t N>
double dot(const std::array<double, N>& w, const std::array<double, N>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += w[i] * x[i];
    return s;
}

std::vector<double> dirichlet(Rng& rng, int n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& x : p) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        total += x = -std::log(u);
    }
    for (auto& x : p) x /= total;
    return p;
}

void append_dirichlet(std::vector<double>& out, Rng& rng, int n) {
    const auto p = dirichlet(rng, n);
    out.insert(out.end(), p.begin(), p.end());
}

int uniform_index(Rng& rng, int n) { return std::min(n - 1, static_cast<int>(rng.uniform() * n)); }

void normalize(std::vector<double>& p) {
    double total = 0.0;
    for (double x : p) total += x;
    for (double& x : p) x /= total;
}

// Support {c + d * alpha}, deduplicated, with each (u, a) mapped into it.
void set_affine_rewards(TabularPOMDP& m, const std::vector<std::array<double, 2>>& cd, double alpha) {
    std::vector<double> raw;
    for (const auto& [c, d] : cd) raw.push_back(c + d * alpha);
    std::vector<double> support = raw;
    std::sort(support.begin(), support.end());
    std::vector<double> unique;
    for (double v : support)
        if (unique.empty() || v - unique.back() > 1e-12) unique.push_back(v);
    m.spaces.reward_values = unique;
    m.reward.clear();
    for (double v : raw) {
        const auto it = std::lower_bound(unique.begin(), unique.end(), v - 1e-12);
        m.reward.push_back(static_cast<int>(it - unique.begin()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// IS counterexample. Hidden states 0 and 1 are the initial states u^(0), u^(1);
// states 2..5 form the second layer. State k carries the label j = k % 2, which
// drives the behavior policy. Rewards are c + d * alpha.

namespace {

constexpr int kFig3States = 6;
constexpr int kFig3Horizon = 1;
// P(z = 0 | u)
constexpr std::array<double, kFig3States> kFig3ObsZ0{0.75, 0.75, 0.0, 2.0 / 3.0, 2.0 / 3.0, 0.5};
// P(u' | u, a) for the initial layer, over states 2..5
constexpr double kFig3Next[2][2][4] = {
    {{0.0, 1.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}},
    {{0.75, 0.0, 0.0, 0.25}, {0.0, 0.0, 1.0, 0.0}},
};
// (c, d) per (u, a)
constexpr double kFig3Reward[kFig3States][2][2] = {
    {{0.75, 0.25}, {-0.5, -0.25}}, {{-0.75, -1.75}, {1.0, 1.75}}, {{-0.5, -1.0}, {0.25, -1.0}},
    {{0.5, 0.75}, {-0.25, 0.75}},  {{-0.5, 0.75}, {0.0, -0.25}},  {{-0.25, -0.5}, {0.0, -2.0}},
};

}  // namespace

int figure3_horizon() { return kFig3Horizon; }

Figure3Problem figure3_pomdp(double alpha, double gamma) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("figure3: alpha must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("figure3: gamma must lie in (0, 1)");
    const int n = kFig3States;
    Figure3Problem p;
    auto& m = p.model;
    m.spaces.n_u = n;
    m.spaces.n_z = 2;
    m.spaces.n_a = 2;
    m.gamma = gamma;
    m.init.assign(n, 0.0);
    m.init[0] = m.init[1] = 0.5;
    for (int u = 0; u < n; ++u) {
        m.observation.push_back(kFig3ObsZ0[u]);
        m.observation.push_back(1.0 - kFig3ObsZ0[u]);
    }
    m.pre_observation = m.observation;
    m.transition.assign(static_cast<std::size_t>(2) * n * n, 0.0);
    for (int a = 0; a < 2; ++a)
        for (int u = 0; u < n; ++u) {
            double* row = &m.transition[(static_cast<std::size_t>(a) * n + u) * n];
            if (u < 2) {
                for (int k = 0; k < 4; ++k) row[2 + k] = kFig3Next[u][a][k];
            } else {
                row[u] = 1.0;  // second layer is terminal within the horizon
            }
        }
    std::vector<std::array<double, 2>> cd;
    for (int u = 0; u < n; ++u)
        for (int a = 0; a < 2; ++a) cd.push_back({kFig3Reward[u][a][0], kFig3Reward[u][a][1]});
    set_affine_rewards(m, cd, alpha);

    std::vector<double> pb;
    for (int u = 0; u < n; ++u)
        for (int a = 0; a < 2; ++a) pb.push_back(a == u % 2 ? 2.0 / 3.0 : 1.0 / 3.0);
    p.behavior = replicate_behavior(ModelKind::Pomdp, n, 2, pb, kFig3Horizon);
    const std::vector<double> pe{2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0};
    p.evaluation = EvaluationPolicy::memoryless(ModelKind::Pomdp, 2, 2,
                                                std::vector<std::vector<double>>(kFig3Horizon + 1, pe));
    p.horizon = kFig3Horizon;
    require_valid(validate_pomdp(m), "figure3 model");
    return p;
}

// ---------------------------------------------------------------------------
// Synthetic medical environment. z, u and o each consist of two bits; u packs
// (mood, look) as mood + 2 * look.

namespace {

using W3 = MedicalConfig::W3;

W3 phi2(int x) { return {static_cast<double>(x & 1), static_cast<double>((x >> 1) & 1), 1.0}; }

template <std::size_t N>
std::array<double, N> normal_vector(Rng& rng) {
    std::array<double, N> w{};
    for (auto& x : w) x = rng.normal();
    return w;
}

template <std::size_t N>
std::vector<std::array<double, N>> normal_table(Rng& rng, int rows) {
    std::vector<std::array<double, N>> out;
    for (int i = 0; i < rows; ++i) out.push_back(normal_vector<N>(rng));
    return out;
}

// P(outcome | context) proportional to sigmoid scores, normalized over outcomes.
template <class Score>
std::vector<double> sigmoid_kernel(int n_outcomes, Score&& score) {
    std::vector<double> p(n_outcomes);
    for (int k = 0; k < n_outcomes; ++k) p[k] = sigmoid(score(k));
    normalize(p);
    return p;
}

}  // namespace

MedicalConfig MedicalConfig::from_seed(std::uint64_t seed, double alpha, int horizon, double gamma) {
    MedicalConfig c;
    c.seed = seed;
    c.alpha = alpha;
    c.horizon = horizon;
    c.gamma = gamma;
    Rng rng = Rng::stream(seed, 0);
    c.c_z = normal_table<3>(rng, kMedicalStates * 2);
    c.c_o = normal_table<3>(rng, kMedicalStates);
    c.c_mood = normal_table<3>(rng, 2 * 2);
    c.c_look = normal_table<6>(rng, 2);
    c.c_r_z = normal_table<3>(rng, 2);
    c.c_r_u = normal_table<3>(rng, 2);
    c.c_b_z = normal_table<3>(rng, 2);
    c.c_b_u = normal_table<3>(rng, 2);
    Rng eval_rng = Rng::stream(seed, 1);
    c.c_e = normal_table<5>(eval_rng, 2);
    return c;
}

void MedicalConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("medical: alpha must lie in [0, 1]");
    if (horizon < 0) throw UsageError("medical: horizon must be non-negative");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("medical: gamma must lie in (0, 1]");
    if (c_z.size() != kMedicalStates * 2 || c_o.size() != kMedicalStates || c_mood.size() != 4 ||
        c_look.size() != 2 || c_r_z.size() != 2 || c_r_u.size() != 2 || c_b_z.size() != 2 || c_b_u.size() != 2 ||
        c_e.size() != 2)
        throw UsageError("medical: weight tables are incomplete");
}

MedicalProblem medical_dpomdp(const MedicalConfig& cfg) {
    cfg.validate();
    constexpr int nz = kMedicalStates, nu = kMedicalStates, no = kMedicalStates, na = 2;
    const double al = cfg.alpha;
    MedicalProblem p;
    auto& m = p.model;
    m.spaces = {nu, nz, na, no, {}};
    for (int k = 0; k < kMedicalRewardLevels; ++k)
        m.spaces.reward_values.push_back(static_cast<double>(k) / (kMedicalRewardLevels - 1));
    m.gamma = cfg.gamma;

    // Component kernels.
    std::vector<std::vector<double>> pz(nz * na);  // [z * na + a][z']
    for (int z = 0; z < nz; ++z)
        for (int a = 0; a < na; ++a)
            pz[z * na + a] = sigmoid_kernel(nz, [&](int z2) { return dot(cfg.c_z[z2 * na + a], phi2(z)); });
    std::vector<std::vector<double>> pmood(nu * na);  // [u * na + a][mood']
    for (int u = 0; u < nu; ++u)
        for (int a = 0; a < na; ++a)
            pmood[u * na + a] = sigmoid_kernel(2, [&](int md) { return dot(cfg.c_mood[a * 2 + md], phi2(u)); });
    std::vector<std::vector<double>> plook(nz * 2);  // [z' * 2 + look][look']
    for (int z2 = 0; z2 < nz; ++z2)
        for (int lk = 0; lk < 2; ++lk) {
            const W3 fz = phi2(z2);
            const MedicalConfig::W6 f{static_cast<double>(lk), static_cast<double>(1 - lk), 1.0, fz[0], fz[1], fz[2]};
            plook[z2 * 2 + lk] = sigmoid_kernel(2, [&](int lk2) { return dot(cfg.c_look[lk2], f); });
        }

    m.transition.assign(static_cast<std::size_t>(na) * nz * nu * nz * nu, 0.0);
    for (int a = 0; a < na; ++a)
        for (int z = 0; z < nz; ++z)
            for (int u = 0; u < nu; ++u)
                for (int z2 = 0; z2 < nz; ++z2)
                    for (int u2 = 0; u2 < nu; ++u2) {
                        const int mood2 = u2 & 1, look2 = u2 >> 1, look = u >> 1;
                        m.transition[(((static_cast<std::size_t>(a) * nz + z) * nu + u) * nz + z2) * nu + u2] =
                            pz[z * na + a][z2] * pmood[u * na + a][mood2] * plook[z2 * 2 + look][look2];
                    }
    for (int u = 0; u < nu; ++u) {
        const auto po = sigmoid_kernel(no, [&](int o) { return dot(cfg.c_o[o], phi2(u)); });
        m.independent_observation.insert(m.independent_observation.end(), po.begin(), po.end());
    }
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z) {
            const auto r = sigmoid_kernel(na, [&](int a) {
                return (1.0 - al) * dot(cfg.c_r_z[a], phi2(z)) + al * dot(cfg.c_r_u[a], phi2(u));
            });
            for (int a = 0; a < na; ++a)
                m.reward.push_back(static_cast<int>(std::lround(r[a] * (kMedicalRewardLevels - 1))));
        }

    std::vector<double> pb;  // [(u * nz + z) * na + a]
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z) {
            const auto q = sigmoid_kernel(na, [&](int a) {
                return (1.0 - al) * dot(cfg.c_b_z[a], phi2(z)) + al * dot(cfg.c_b_u[a], phi2(u));
            });
            pb.insert(pb.end(), q.begin(), q.end());
        }
    p.behavior = replicate_behavior(ModelKind::Decoupled, nu * nz, na, pb, cfg.horizon);

    // Virtual step -1 under the behavior policy from uniform (z_-1, u_-1).
    m.init.assign(static_cast<std::size_t>(nz) * nz * nu, 0.0);
    const double w0 = 1.0 / (nz * nu);
    for (int zp = 0; zp < nz; ++zp)
        for (int up = 0; up < nu; ++up)
            for (int a = 0; a < na; ++a) {
                const double w = w0 * pb[(up * nz + zp) * na + a];
                for (int z = 0; z < nz; ++z)
                    for (int u = 0; u < nu; ++u)
                        m.init[(static_cast<std::size_t>(zp) * nz + z) * nu + u] += w * m.trans(zp, up, a, z, u);
            }
    require_valid(validate_dpomdp(m), "medical model");
    return p;
}

EvaluationPolicy medical_eval_policy(const MedicalConfig& cfg) {
    cfg.validate();
    constexpr int nz = kMedicalStates, no = kMedicalStates, na = 2;
    std::vector<double> table;  // [(z * no + o) * na + a]
    for (int z = 0; z < nz; ++z)
        for (int o = 0; o < no; ++o) {
            const MedicalConfig::W5 f{static_cast<double>(z & 1), static_cast<double>(z >> 1),
                                      static_cast<double>(o & 1), static_cast<double>(o >> 1), 1.0};
            const auto q = sigmoid_kernel(na, [&](int a) { return dot(cfg.c_e[a], f); });
            table.insert(table.end(), q.begin(), q.end());
        }
    return EvaluationPolicy::memoryless(ModelKind::Decoupled, nz * no, na,
                                        std::vector<std::vector<double>>(cfg.horizon + 1, table));
}

// ---------------------------------------------------------------------------

ControlProblem assumption1_env(std::uint64_t seed) {
    constexpr int nu = 2, nz = 3, na = 2, L = 2;
    constexpr std::array<int, nz> g{0, 1, 1};  // u = g(z)
    Rng rng = Rng::stream(seed, 0);
    ControlProblem p;
    p.horizon = L;
    auto& m = p.model;
    m.spaces = {nu, nz, na, 0, {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}};
    m.gamma = 0.9;
    m.init = dirichlet(rng, nu);
    for (int a = 0; a < na; ++a)
        for (int u = 0; u < nu; ++u) append_dirichlet(m.transition, rng, nu);
    for (int u = 0; u < nu; ++u) {
        std::vector<int> support;
        for (int z = 0; z < nz; ++z)
            if (g[z] == u) support.push_back(z);
        const auto w = dirichlet(rng, static_cast<int>(support.size()));
        std::vector<double> row(nz, 0.0);
        for (std::size_t k = 0; k < support.size(); ++k) row[support[k]] = w[k];
        m.observation.insert(m.observation.end(), row.begin(), row.end());
    }
    m.pre_observation = m.observation;
    for (int u = 0; u < nu; ++u)
        for (int a = 0; a < na; ++a) m.reward.push_back(uniform_index(rng, m.spaces.n_r()));
    p.behavior.kind = ModelKind::Pomdp;
    p.behavior.n_context = nu;
    p.behavior.n_a = na;
    for (int t = 0; t <= L; ++t) {
        std::vector<double> table;
        for (int u = 0; u < nu; ++u) append_dirichlet(table, rng, na);
        p.behavior.tables.push_back(table);
    }
    p.evaluation = random_eval_policy(splitmix64(seed) ^ 0x5851f42d4c957f2dULL, ModelKind::Pomdp, nz, na, L);
    require_valid(validate_pomdp(m), "assumption-1 model");
    return p;
}

EvaluationPolicy random_eval_policy(std::uint64_t seed, ModelKind kind, int n_context, int n_a, int horizon) {
    Rng rng = Rng::stream(seed, 2);
    std::vector<std::vector<double>> tables;
    for (int t = 0; t <= horizon; ++t) {
        std::vector<double> table;
        for (int c = 0; c < n_context; ++c) append_dirichlet(table, rng, n_a);
        tables.push_back(std::move(table));
    }
    return EvaluationPolicy::memoryless(kind, n_context, n_a, std::move(tables));
}

namespace {

void check_sizes(const RandomSizes& s, bool decoupled) {
    if (s.n_u < 1 || s.n_z < 1 || s.n_a < 1 || s.horizon < 0 || (decoupled && s.n_o < 1))
        throw UsageError("random model: sizes must be positive");
    if (!decoupled && s.n_z < s.n_u) throw UsageError("random model: n_z must be at least n_u");
    if (decoupled && (s.n_z < s.n_u || s.n_o < s.n_u))
        throw UsageError("random model: n_z and n_o must be at least n_u");
    if (s.reward_values.empty()) throw UsageError("random model: empty reward support");
}

BehaviorPolicy random_behavior(Rng& rng, ModelKind kind, int n_context, int n_a, int horizon) {
    BehaviorPolicy b;
    b.kind = kind;
    b.n_context = n_context;
    b.n_a = n_a;
    for (int t = 0; t <= horizon; ++t) {
        std::vector<double> table;
        for (int c = 0; c < n_context; ++c) append_dirichlet(table, rng, n_a);
        b.tables.push_back(std::move(table));
    }
    return b;
}

}  // namespace

RandomPomdp random_pomdp(std::uint64_t seed, const RandomSizes& s, double condition_cap, int max_tries) {
    check_sizes(s, false);
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(attempt));
        RandomPomdp out;
        out.tries = attempt + 1;
        auto& m = out.model;
        m.spaces = {s.n_u, s.n_z, s.n_a, 0, s.reward_values};
        m.gamma = s.gamma;
        m.init = dirichlet(rng, s.n_u);
        // i.i.d. hidden states: one next-state distribution for every (a, u).
        const auto shared = dirichlet(rng, s.n_u);
        for (int a = 0; a < s.n_a; ++a) {
            for (int u = 0; u < s.n_u; ++u) {
                if (s.iid_hidden)
                    m.transition.insert(m.transition.end(), shared.begin(), shared.end());
                else
                    append_dirichlet(m.transition, rng, s.n_u);
            }
        }
        for (int u = 0; u < s.n_u; ++u) append_dirichlet(m.observation, rng, s.n_z);
        for (int u = 0; u < s.n_u; ++u) append_dirichlet(m.pre_observation, rng, s.n_z);
        for (int u = 0; u < s.n_u; ++u)
            for (int a = 0; a < s.n_a; ++a) m.reward.push_back(uniform_index(rng, m.spaces.n_r()));
        out.behavior = random_behavior(rng, ModelKind::Pomdp, s.n_u, s.n_a, s.horizon);

        const PopulationSource src(m, out.behavior);
        for (int i = 0; i <= s.horizon; ++i)
            for (int a = 0; a < s.n_a; ++a)
                out.certificate = std::max(
                    out.certificate, condition_number(src.matrix({{Z(i)}, {}, {Z(i - 1)}, {{A(i), a}}}).values));
        if (out.certificate <= condition_cap) return out;
    }
    throw Error("random_pomdp: no model met the condition cap within " + std::to_string(max_tries) + " tries");
}

RandomDpomdp random_dpomdp(std::uint64_t seed, const RandomSizes& s, double condition_cap, int max_tries) {
    check_sizes(s, true);
    const int nz = s.n_z, nu = s.n_u, no = s.n_o, na = s.n_a;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(attempt));
        RandomDpomdp out;
        out.tries = attempt + 1;
        auto& m = out.model;
        m.spaces = {nu, nz, na, no, s.reward_values};
        m.gamma = s.gamma;
        m.init = dirichlet(rng, nz * nz * nu);
        const auto shared = dirichlet(rng, nz * nu);
        for (int a = 0; a < na; ++a)
            for (int z = 0; z < nz; ++z) {
                for (int u = 0; u < nu; ++u) {
                    if (s.iid_hidden)
                        m.transition.insert(m.transition.end(), shared.begin(), shared.end());
                    else
                        append_dirichlet(m.transition, rng, nz * nu);
                }
            }
        for (int u = 0; u < nu; ++u) append_dirichlet(m.independent_observation, rng, no);
        for (int u = 0; u < nu; ++u)
            for (int z = 0; z < nz; ++z)
                for (int a = 0; a < na; ++a) m.reward.push_back(uniform_index(rng, m.spaces.n_r()));
        out.behavior = random_behavior(rng, ModelKind::Decoupled, nu * nz, na, s.horizon);

        const PopulationSource src(m, out.behavior);
        IndexSelectionOptions opts;
        opts.condition_cap = condition_cap;
        try {
            out.index_sets = select_index_sets(src, s.horizon, opts);
        } catch (const SingularMatrixError&) {
            continue;
        }
        for (double c : out.index_sets.worst_condition) out.certificate = std::max(out.certificate, c);
        if (out.certificate <= condition_cap) return out;
    }
    throw Error("random_dpomdp: no model met the condition cap within " + std::to_string(max_tries) + " tries");
}

}  // namespace ope
