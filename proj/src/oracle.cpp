#include "ope/oracle.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "ope/simulate.hpp"

namespace ope {

namespace {

// Hidden Markov chain view shared by both model kinds. Hidden index h is u for
// POMDPs and u * n_z + z for Decoupled models; observation x is z or z * n_o + o.
// Both coincide with the policy context encodings.
struct Chain {
    ModelKind kind = ModelKind::Pomdp;
    int n_h = 0, n_x = 0, n_a = 0, n_o = 0;
    std::vector<double> init;   // [h]
    std::vector<double> emit;   // [h][x]
    std::vector<double> trans;  // [a][h][h']
    std::vector<int> reward;    // [h][a]
    std::vector<double> reward_values;
    double gamma = 0.0;

    double e(int h, int x) const { return emit[static_cast<std::size_t>(h) * n_x + x]; }
    double p(int h, int a, int h2) const { return trans[(static_cast<std::size_t>(a) * n_h + h) * n_h + h2]; }
    int r(int h, int a) const { return reward[static_cast<std::size_t>(h) * n_a + a]; }

    void push_observation(ObservableHistory& hist, int x) const {
        if (kind == ModelKind::Pomdp) {
            hist.z.push_back(x);
        } else {
            hist.z.push_back(x / n_o);
            hist.o.push_back(x % n_o);
        }
    }
    void pop_observation(ObservableHistory& hist) const {
        hist.z.pop_back();
        if (kind == ModelKind::Decoupled) hist.o.pop_back();
    }
};

Chain make_chain(const AnyModel& any) {
    require_valid(validate_model(any), "model");
    Chain c;
    if (const auto* pm = std::get_if<TabularPOMDP>(&any)) {
        const auto& m = *pm;
        const auto& s = m.spaces;
        c.kind = ModelKind::Pomdp;
        c.n_h = s.n_u;
        c.n_x = s.n_z;
        c.n_a = s.n_a;
        c.init = m.init;
        c.emit = m.observation;
        c.trans = m.transition;
        c.reward = m.reward;
        c.reward_values = s.reward_values;
        c.gamma = m.gamma;
        return c;
    }
    const auto& m = std::get<TabularDPOMDP>(any);
    const auto& s = m.spaces;
    const int nu = s.n_u, nz = s.n_z, no = s.n_o;
    c.kind = ModelKind::Decoupled;
    c.n_h = nu * nz;
    c.n_x = nz * no;
    c.n_a = s.n_a;
    c.n_o = no;
    c.reward_values = s.reward_values;
    c.gamma = m.gamma;
    c.init.assign(c.n_h, 0.0);
    for (int zp = 0; zp < nz; ++zp)
        for (int z = 0; z < nz; ++z)
            for (int u = 0; u < nu; ++u) c.init[u * nz + z] += m.init_prob(zp, z, u);
    c.emit.assign(static_cast<std::size_t>(c.n_h) * c.n_x, 0.0);
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z)
            for (int o = 0; o < no; ++o) c.emit[static_cast<std::size_t>(u * nz + z) * c.n_x + z * no + o] = m.obs(u, o);
    c.trans.assign(static_cast<std::size_t>(c.n_a) * c.n_h * c.n_h, 0.0);
    for (int a = 0; a < c.n_a; ++a)
        for (int u = 0; u < nu; ++u)
            for (int z = 0; z < nz; ++z)
                for (int u2 = 0; u2 < nu; ++u2)
                    for (int z2 = 0; z2 < nz; ++z2)
                        c.trans[(static_cast<std::size_t>(a) * c.n_h + u * nz + z) * c.n_h + u2 * nz + z2] =
                            m.trans(z, u, a, z2, u2);
    c.reward.assign(static_cast<std::size_t>(c.n_h) * c.n_a, 0);
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z)
            for (int a = 0; a < c.n_a; ++a) c.reward[(u * nz + z) * c.n_a + a] = m.reward_index(u, z, a);
    return c;
}

ValueResult finish(const Chain& c, std::vector<std::vector<double>> dists, std::string path, std::size_t terms) {
    ValueResult out;
    out.path = std::move(path);
    out.terms = terms;
    double disc = 1.0;
    for (std::size_t t = 0; t < dists.size(); ++t) {
        RewardDistribution rd{static_cast<int>(t), c.reward_values, std::move(dists[t])};
        out.v += disc * rd.expectation();
        disc *= c.gamma;
        out.per_step.push_back(std::move(rd));
    }
    return out;
}

// Recursion over the hidden chain with a per-step action kernel q_t(a | h).
template <class Kernel>
ValueResult markov_recursion(const Chain& c, int L, Kernel&& q, std::string path) {
    std::vector<std::vector<double>> dists(L + 1, std::vector<double>(c.reward_values.size(), 0.0));
    std::vector<double> d = c.init;
    for (int t = 0; t <= L; ++t) {
        std::vector<double> next(c.n_h, 0.0);
        for (int h = 0; h < c.n_h; ++h) {
            if (d[h] == 0.0) continue;
            for (int a = 0; a < c.n_a; ++a) {
                const double w = d[h] * q(t, h, a);
                if (w == 0.0) continue;
                dists[t][c.r(h, a)] += w;
                if (t < L)
                    for (int h2 = 0; h2 < c.n_h; ++h2) next[h2] += w * c.p(h, a, h2);
            }
        }
        d.swap(next);
    }
    return finish(c, std::move(dists), std::move(path), 0);
}

class Budget {
public:
    explicit Budget(std::size_t limit) : limit_(limit) {}
    void spend(std::size_t n) {
        used_ += n;
        if (used_ > limit_) throw BudgetExceededError("exact enumeration exceeds the budget of " + std::to_string(limit_) + " terms");
    }
    std::size_t used() const { return used_; }

private:
    std::size_t limit_;
    std::size_t used_ = 0;
};

// Enumerates observable histories carrying the joint mass P(h_t, hidden_t).
struct HistoryEnumerator {
    const Chain& c;
    const EvaluationPolicy& pi;
    int L;
    Budget& budget;
    std::vector<std::vector<double>>& dists;
    ObservableHistory hist;

    void run(int t, const std::vector<double>& alpha) {
        for (int x = 0; x < c.n_x; ++x) {
            budget.spend(c.n_h);
            std::vector<double> ax(c.n_h);
            double mass = 0.0;
            for (int h = 0; h < c.n_h; ++h) mass += ax[h] = alpha[h] * c.e(h, x);
            if (mass == 0.0) continue;
            c.push_observation(hist, x);
            const ProbVector pa = pi.action_dist(t, hist, c.n_o);
            for (int a = 0; a < c.n_a; ++a) {
                if (pa[a] == 0.0) continue;
                std::vector<double> next(c.n_h, 0.0);
                for (int h = 0; h < c.n_h; ++h) {
                    const double w = ax[h] * pa[a];
                    if (w == 0.0) continue;
                    dists[t][c.r(h, a)] += w;
                    if (t < L)
                        for (int h2 = 0; h2 < c.n_h; ++h2) next[h2] += w * c.p(h, a, h2);
                }
                if (t < L) {
                    hist.a.push_back(a);
                    run(t + 1, next);
                    hist.a.pop_back();
                }
            }
            c.pop_observation(hist);
        }
    }
};

void check_horizon(int L, int policy_horizon) {
    if (L < 0) throw UsageError("horizon must be non-negative");
    if (L > policy_horizon) throw UsageError("policy does not cover the requested horizon");
}

}  // namespace

double RewardDistribution::expectation() const {
    double e = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) e += values[i] * prob[i];
    return e;
}

double RewardDistribution::total() const {
    return std::accumulate(prob.begin(), prob.end(), 0.0);
}

ValueResult exact_value(const AnyModel& model, const AnyPolicy& policy, int L, const OracleOptions& opts) {
    const Chain c = make_chain(model);
    if (const auto* b = std::get_if<BehaviorPolicy>(&policy)) {
        if (b->kind != c.kind) throw UsageError("behavior policy kind does not match the model");
        require_valid(validate_behavior(*b, spaces_of(model)), "behavior policy");
        check_horizon(L, b->horizon());
        return markov_recursion(c, L, [&](int t, int h, int a) { return b->prob(t, h, a); }, "behavior-recursion");
    }
    const auto& e = std::get<EvaluationPolicy>(policy);
    if (e.kind() != c.kind) throw UsageError("evaluation policy kind does not match the model");
    require_valid(validate_evaluation(e, spaces_of(model)), "evaluation policy");
    check_horizon(L, e.horizon());
    if (e.is_memoryless()) {
        // Precompute q_t(a|h) = sum_x emit(x|h) pi_e(a|x).
        std::vector<std::vector<double>> q(L + 1, std::vector<double>(static_cast<std::size_t>(c.n_h) * c.n_a, 0.0));
        for (int t = 0; t <= L; ++t)
            for (int h = 0; h < c.n_h; ++h)
                for (int x = 0; x < c.n_x; ++x) {
                    const double px = c.e(h, x);
                    if (px == 0.0) continue;
                    for (int a = 0; a < c.n_a; ++a) q[t][h * c.n_a + a] += px * e.prob(t, x, a);
                }
        return markov_recursion(c, L, [&](int t, int h, int a) { return q[t][h * c.n_a + a]; },
                                "memoryless-recursion");
    }
    std::vector<std::vector<double>> dists(L + 1, std::vector<double>(c.reward_values.size(), 0.0));
    Budget budget(opts.budget);
    HistoryEnumerator en{c, e, L, budget, dists, {}};
    en.run(0, c.init);
    return finish(c, std::move(dists), "history-enumeration", budget.used());
}

RewardDistribution exact_reward_dist(const AnyModel& model, const EvaluationPolicy& policy, int t,
                                     const OracleOptions& opts) {
    const Chain c = make_chain(model);
    if (policy.kind() != c.kind) throw UsageError("evaluation policy kind does not match the model");
    require_valid(validate_evaluation(policy, spaces_of(model)), "evaluation policy");
    check_horizon(t, policy.horizon());
    RewardDistribution out{t, c.reward_values, std::vector<double>(c.reward_values.size(), 0.0)};
    Budget budget(opts.budget);
    ObservableHistory hist;
    // Product of kernel and policy terms along every full trajectory.
    auto rec = [&](auto&& self, int i, int h, double w) -> void {
        for (int x = 0; x < c.n_x; ++x) {
            const double wx = w * c.e(h, x);
            if (wx == 0.0) continue;
            c.push_observation(hist, x);
            const ProbVector pa = policy.action_dist(i, hist, c.n_o);
            for (int a = 0; a < c.n_a; ++a) {
                budget.spend(1);
                const double wa = wx * pa[a];
                if (wa == 0.0) continue;
                if (i == t) {
                    out.prob[c.r(h, a)] += wa;
                    continue;
                }
                hist.a.push_back(a);
                for (int h2 = 0; h2 < c.n_h; ++h2) {
                    const double w2 = wa * c.p(h, a, h2);
                    if (w2 != 0.0) self(self, i + 1, h2, w2);
                }
                hist.a.pop_back();
            }
            c.pop_observation(hist);
        }
    };
    for (int h = 0; h < c.n_h; ++h)
        if (c.init[h] != 0.0) rec(rec, 0, h, c.init[h]);
    return out;
}

RewardDistribution composite_reward_dist(const TabularPOMDP& m, const BehaviorPolicy& behavior,
                                         const EvaluationPolicy& policy, int L) {
    require_valid(validate_pomdp(m), "model");
    if (!policy.is_memoryless()) throw UsageError("composite policy needs a memoryless evaluation policy");
    check_horizon(L, behavior.horizon());
    const auto& s = m.spaces;
    std::vector<double> d = m.init;
    for (int t = 0; t < L; ++t) {
        std::vector<double> next(s.n_u, 0.0);
        for (int u = 0; u < s.n_u; ++u)
            for (int a = 0; a < s.n_a; ++a)
                for (int u2 = 0; u2 < s.n_u; ++u2) next[u2] += d[u] * behavior.prob(t, u, a) * m.trans(u, a, u2);
        d.swap(next);
    }
    RewardDistribution out{L, s.reward_values, std::vector<double>(s.n_r(), 0.0)};
    for (int u = 0; u < s.n_u; ++u)
        for (int z = 0; z < s.n_z; ++z)
            for (int a = 0; a < s.n_a; ++a) out.prob[m.reward_index(u, a)] += d[u] * m.obs(u, z) * policy.prob(L, z, a);
    return out;
}

CondProbMatrix population_matrix(const AnyModel& model, const BehaviorPolicy& behavior, const MatrixDescriptor& d) {
    return PopulationSource(model, behavior).matrix(d);
}

double IdentityReport::max_residual() const {
    double m = 0.0;
    for (const auto& r : residuals) m = std::max(m, r.max_residual);
    return m;
}

namespace {

// Product with 0 * NaN = 0. Returns false if a NaN meets a non-zero factor.
bool nan_safe_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& out) {
    out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                const double x = a(i, k), y = b(k, j);
                if (x == 0.0 || y == 0.0) continue;
                if (std::isnan(x) || std::isnan(y)) return false;
                out(i, j) += x * y;
            }
    return true;
}

void compare(IdentityResidual& acc, const CondProbMatrix& a, const CondProbMatrix& b, const CondProbMatrix& rhs) {
    Eigen::MatrixXd lhs;
    if (!nan_safe_product(a.values, b.values, lhs)) {
        ++acc.skipped;
        return;
    }
    bool any = false;
    for (Eigen::Index i = 0; i < lhs.rows(); ++i)
        for (Eigen::Index j = 0; j < lhs.cols(); ++j) {
            const double r = rhs.values(i, j);
            if (std::isnan(r)) continue;
            any = true;
            acc.max_residual = std::max(acc.max_residual, std::abs(lhs(i, j) - r));
        }
    any ? ++acc.compared : ++acc.skipped;
}

}  // namespace

IdentityReport verify_lemma_identities(const AnyModel& model, const BehaviorPolicy& behavior, int i) {
    if (i < 1) throw UsageError("identities need t >= 1");
    PopulationSource src(model, behavior);
    const auto& s = src.spaces();
    IdentityReport report;
    if (src.kind() == ModelKind::Pomdp) {
        IdentityResidual mult{"P(Z_i|a_i,U_i) P(U_i,z_i-1|a_i-1,Z_i-2) = P(Z_i,z_i-1|a_i-1,Z_i-2)"};
        IdentityResidual chain{"P(Z_i|a_i,Z_i-1) = P(Z_i|a_i,U_i) P(U_i|a_i,Z_i-1)"};
        IdentityResidual fact{"P(U_i+1,z_i|a_i,Z_i-1) = P(U_i+1,z_i|a_i,U_i) P(U_i|a_i,Z_i-1)"};
        for (int a = 0; a < s.n_a; ++a) {
            const auto zu = src.matrix({{Z(i)}, {}, {U(i)}, {{A(i), a}}});
            const auto uz = src.matrix({{U(i)}, {}, {Z(i - 1)}, {{A(i), a}}});
            compare(chain, zu, uz, src.matrix({{Z(i)}, {}, {Z(i - 1)}, {{A(i), a}}}));
            for (int a1 = 0; a1 < s.n_a; ++a1)
                for (int z1 = 0; z1 < s.n_z; ++z1)
                    compare(mult, zu, src.matrix({{U(i)}, {{Z(i - 1), z1}}, {Z(i - 2)}, {{A(i - 1), a1}}}),
                            src.matrix({{Z(i)}, {{Z(i - 1), z1}}, {Z(i - 2)}, {{A(i - 1), a1}}}));
            if (i + 1 <= src.horizon())
                for (int z = 0; z < s.n_z; ++z)
                    compare(fact, src.matrix({{U(i + 1)}, {{Z(i), z}}, {U(i)}, {{A(i), a}}}), uz,
                            src.matrix({{U(i + 1)}, {{Z(i), z}}, {Z(i - 1)}, {{A(i), a}}}));
        }
        report.residuals = {mult, chain, fact};
        return report;
    }
    IdentityResidual mult{"P(O_i|z_i,a_i,U_i) P(U_i,o_i-1,z_i|z_i-1,a_i-1,Z_i-2) = P(O_i,o_i-1,z_i|z_i-1,a_i-1,Z_i-2)"};
    IdentityResidual chain{"P(O_i|z_i,a_i,Z_i-1) = P(O_i|z_i,a_i,U_i) P(U_i|z_i,a_i,Z_i-1)"};
    for (int a = 0; a < s.n_a; ++a)
        for (int z = 0; z < s.n_z; ++z) {
            const auto ou = src.matrix({{O(i)}, {}, {U(i)}, {{Z(i), z}, {A(i), a}}});
            compare(chain, ou, src.matrix({{U(i)}, {}, {Z(i - 1)}, {{Z(i), z}, {A(i), a}}}),
                    src.matrix({{O(i)}, {}, {Z(i - 1)}, {{Z(i), z}, {A(i), a}}}));
            for (int a1 = 0; a1 < s.n_a; ++a1)
                for (int z1 = 0; z1 < s.n_z; ++z1)
                    for (int o1 = 0; o1 < s.n_o; ++o1)
                        compare(mult, ou,
                                src.matrix({{U(i)}, {{O(i - 1), o1}, {Z(i), z}}, {Z(i - 2)}, {{Z(i - 1), z1}, {A(i - 1), a1}}}),
                                src.matrix({{O(i)}, {{O(i - 1), o1}, {Z(i), z}}, {Z(i - 2)}, {{Z(i - 1), z1}, {A(i - 1), a1}}}));
        }
    report.residuals = {mult, chain};
    return report;
}

double discounted_return(const std::vector<int>& r, const SpaceSpec& s, double gamma) {
    double v = 0.0, disc = 1.0;
    for (int x : r) {
        v += disc * s.reward_values[x];
        disc *= gamma;
    }
    return v;
}

MonteCarloResult monte_carlo_value(const AnyModel& model, const EvaluationPolicy& policy, int horizon,
                                   std::size_t n, std::uint64_t seed, int threads) {
    if (n == 0) throw UsageError("monte_carlo_value: n must be positive");
    require_valid(validate_model(model), "model");
    check_horizon(horizon, policy.horizon());
    const AnyPolicy any = policy;
    const auto& s = spaces_of(model);
    const double gamma = gamma_of(model);
    std::vector<double> returns(n);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng = Rng::stream(seed, i);
            returns[i] = discounted_return(sample_trajectory(model, any, horizon, rng).r, s, gamma);
        }
    });
    double sum = 0.0;
    for (double x : returns) sum += x;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double x : returns) ss += (x - mean) * (x - mean);
    MonteCarloResult out;
    out.v = mean;
    out.stderr_v = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return out;
}

}  // namespace ope
