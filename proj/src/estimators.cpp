#include "ope/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace ope {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Factored conditional matrix for repeated solves; mirrors solve_weights.
class Inverter {
public:
    Inverter() = default;
    Inverter(CondProbMatrix m, const SolveOptions& opts) : m_(std::move(m)), ridge_(opts.ridge) {
        if (m_.has_nan()) {
            undefined_ = true;
            cond_ = std::numeric_limits<double>::infinity();
            return;
        }
        const auto& a = m_.values;
        cond_ = condition_number(a);
        if (ridge_ > 0.0) {
            ldlt_.compute(a.transpose() * a + ridge_ * Eigen::MatrixXd::Identity(a.cols(), a.cols()));
            return;
        }
        if (a.rows() < a.cols()) throw UsageError(m_.descriptor + " has fewer rows than columns");
        if (!(cond_ <= opts.condition_cap)) throw SingularMatrixError(m_.descriptor, cond_);
        if (a.rows() == a.cols())
            lu_.compute(a);
        else
            qr_.compute(a);
    }

    bool undefined() const { return undefined_; }
    double cond() const { return cond_; }
    Eigen::Index cols() const { return m_.values.cols(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        if (ridge_ > 0.0) return ldlt_.solve(m_.values.transpose() * b);
        if (m_.values.rows() == m_.values.cols()) return lu_.solve(b);
        return qr_.solve(b);
    }

private:
    CondProbMatrix m_;
    double ridge_ = 0.0;
    bool undefined_ = false;
    double cond_ = 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

// acc += scale * M v, skipping NaN columns that v would touch.
void add_product(Eigen::VectorXd& acc, const Eigen::MatrixXd& m, const Eigen::VectorXd& v, double scale,
                 std::size_t& skipped) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (v(k) == 0.0) continue;
        if (m.col(k).hasNaN()) {
            ++skipped;
            continue;
        }
        acc += (scale * v(k)) * m.col(k);
    }
}

struct Tracker {
    EstimatorDiagnostics& diag;

    Eigen::VectorXd solve(const Inverter& inv, const Eigen::VectorXd& rhs) {
        if (inv.undefined()) {
            if (!rhs.isZero(0.0)) ++diag.nan_skipped;
            return Eigen::VectorXd::Zero(inv.cols());
        }
        diag.worst_condition = std::max(diag.worst_condition, inv.cond());
        return inv.solve(rhs);
    }
};

void check_inputs(const MatrixSource& src, const EvaluationPolicy& policy, int L, ModelKind kind) {
    if (src.kind() != kind) throw UsageError("matrix source has the wrong model kind for this estimator");
    if (policy.kind() != kind) throw UsageError("evaluation policy kind does not match the model kind");
    if (L < 0 || L > src.horizon()) throw UsageError("horizon exceeds the logged horizon");
    if (L > policy.horizon()) throw UsageError("evaluation policy does not cover the requested horizon");
    if (policy.n_a() != src.spaces().n_a) throw UsageError("evaluation policy action count does not match the model");
}

EstimateRecord finish(std::string method, const SpaceSpec& s, double gamma, std::vector<Eigen::VectorXd> dists,
                      EstimatorDiagnostics diag, bool renormalize) {
    EstimateRecord out;
    out.method = std::move(method);
    for (std::size_t t = 0; t < dists.size(); ++t) {
        RewardDistribution rd{static_cast<int>(t), s.reward_values,
                              std::vector<double>(dists[t].data(), dists[t].data() + dists[t].size())};
        const double total = rd.total();
        diag.norm_residual.push_back(std::abs(total - 1.0));
        if (renormalize && total != 0.0)
            for (auto& p : rd.prob) p /= total;
        out.per_step.push_back(std::move(rd));
    }
    out.v_hat = value_of(out.per_step, gamma);
    out.diag = std::move(diag);
    return out;
}

// Matrices of the POMDP identification, cached per step.
struct Theorem1Tables {
    Eigen::VectorXd p_z0;
    std::vector<std::vector<Inverter>> b;                  // [t][a]
    std::vector<std::vector<Eigen::MatrixXd>> d;           // [t][z' * n_a + a'], t >= 1
    std::vector<std::vector<Eigen::MatrixXd>> f;           // [t][z * n_a + a]

    Theorem1Tables(const MatrixSource& src, int L, const SolveOptions& opts) {
        const auto& s = src.spaces();
        p_z0 = src.matrix({{Z(0)}, {}, {}, {}}).values.col(0);
        b.resize(L + 1);
        d.resize(L + 1);
        f.resize(L + 1);
        for (int t = 0; t <= L; ++t) {
            for (int a = 0; a < s.n_a; ++a) b[t].emplace_back(src.matrix({{Z(t)}, {}, {Z(t - 1)}, {{A(t), a}}}), opts);
            for (int z = 0; z < s.n_z; ++z)
                for (int a = 0; a < s.n_a; ++a) {
                    f[t].push_back(src.matrix({{R(t)}, {{Z(t), z}}, {Z(t - 1)}, {{A(t), a}}}).values);
                    if (t >= 1)
                        d[t].push_back(src.matrix({{Z(t)}, {{Z(t - 1), z}}, {Z(t - 2)}, {{A(t - 1), a}}}).values);
                }
        }
    }
};

// Matrices of the Decoupled identification restricted to the index sets.
struct Theorem2Tables {
    int n_z, n_o, n_a;
    std::vector<Eigen::VectorXd> g0;                // [z]
    std::vector<std::vector<Inverter>> b;           // [t][a * n_z + z]
    std::vector<std::vector<Eigen::MatrixXd>> d;    // [t][((z * n_o + o') * n_a + a') * n_z + z']
    std::vector<std::vector<Eigen::MatrixXd>> f;    // [t][(z * n_o + o) * n_a + a]

    Theorem2Tables(const MatrixSource& src, int L, const IndexSets& sets, const SolveOptions& opts) {
        const auto& s = src.spaces();
        n_z = s.n_z;
        n_o = s.n_o;
        n_a = s.n_a;
        std::vector<int> all_r(s.n_r());
        std::iota(all_r.begin(), all_r.end(), 0);
        const auto pz = src.matrix({{Z(0)}, {}, {}, {}}).values;
        for (int z = 0; z < n_z; ++z) {
            const auto po = src.matrix({{O(0)}, {}, {}, {{Z(0), z}}}).select(sets.rows[0], {0}).values;
            Eigen::VectorXd g = po.col(0) * pz(z, 0);
            if (pz(z, 0) == 0.0) g.setZero();
            g0.push_back(g);
        }
        b.resize(L + 1);
        d.resize(L + 1);
        f.resize(L + 1);
        for (int t = 0; t <= L; ++t) {
            for (int a = 0; a < n_a; ++a)
                for (int z = 0; z < n_z; ++z)
                    b[t].emplace_back(src.matrix(decoupled_b_descriptor(t, a, z)).select(sets.rows[t], sets.cols[t]),
                                      opts);
            for (int z = 0; z < n_z; ++z)
                for (int o = 0; o < n_o; ++o)
                    for (int a = 0; a < n_a; ++a)
                        f[t].push_back(src.matrix({{R(t)}, {{O(t), o}}, {Z(t - 1)}, {{Z(t), z}, {A(t), a}}})
                                           .select(all_r, sets.cols[t])
                                           .values);
            if (t == 0) continue;
            for (int z = 0; z < n_z; ++z)
                for (int o = 0; o < n_o; ++o)
                    for (int a = 0; a < n_a; ++a)
                        for (int zp = 0; zp < n_z; ++zp)
                            d[t].push_back(src.matrix({{O(t)},
                                                       {{O(t - 1), o}, {Z(t), z}},
                                                       {Z(t - 2)},
                                                       {{Z(t - 1), zp}, {A(t - 1), a}}})
                                               .select(sets.rows[t], sets.cols[t - 1])
                                               .values);
        }
    }

    const Inverter& B(int t, int a, int z) const { return b[t][a * n_z + z]; }
    const Eigen::MatrixXd& D(int t, int z, int o, int a, int zp) const {
        return d[t][((z * n_o + o) * n_a + a) * n_z + zp];
    }
    const Eigen::MatrixXd& F(int t, int z, int o, int a) const { return f[t][(z * n_o + o) * n_a + a]; }
};

class Budget {
public:
    explicit Budget(std::size_t limit) : limit_(limit) {}
    void spend(std::size_t n) {
        used_ += n;
        if (used_ > limit_)
            throw BudgetExceededError("enumeration exceeds the budget of " + std::to_string(limit_) + " terms");
    }
    std::size_t used() const { return used_; }

private:
    std::size_t limit_;
    std::size_t used_ = 0;
};

}  // namespace

double EstimatorDiagnostics::max_norm_residual() const {
    double m = 0.0;
    for (double r : norm_residual) m = std::max(m, r);
    return m;
}

json EstimatorDiagnostics::to_json() const {
    json j{{"norm_residual", norm_residual},
           {"max_norm_residual", max_norm_residual()},
           {"worst_condition", std::isfinite(worst_condition) ? json(worst_condition) : json("inf")},
           {"nan_skipped", nan_skipped},
           {"dropped_records", dropped_records},
           {"excluded_contexts", excluded_contexts},
           {"clip_events", clip_events},
           {"path", path},
           {"terms", terms}};
    if (!context_mode.empty()) j["context_mode"] = context_mode;
    if (std::isfinite(stderr_v)) j["stderr"] = stderr_v;
    if (index_sets) j["index_sets"] = index_sets->to_json();
    return j;
}

double value_of(const std::vector<RewardDistribution>& per_step, double gamma) {
    double v = 0.0, disc = 1.0;
    for (const auto& rd : per_step) {
        v += disc * rd.expectation();
        disc *= gamma;
    }
    return v;
}

WeightChain theorem1_chain(const MatrixSource& src, const EvaluationPolicy& policy, const std::vector<int>& z,
                           const std::vector<int>& a, const SolveOptions& opts) {
    if (z.empty() || z.size() != a.size()) throw UsageError("theorem1_chain: z and a must have equal positive length");
    const int t = static_cast<int>(z.size()) - 1;
    check_inputs(src, policy, t, ModelKind::Pomdp);
    WeightChain out;
    ObservableHistory h;
    for (int i = 0; i <= t; ++i) {
        const CondProbMatrix b = src.matrix({{Z(i)}, {}, {Z(i - 1)}, {{A(i), a[i]}}});
        Eigen::MatrixXd rhs;
        if (i == 0)
            rhs = src.matrix({{Z(0)}, {}, {}, {}}).values;
        else
            rhs = src.matrix({{Z(i)}, {{Z(i - 1), z[i - 1]}}, {Z(i - 2)}, {{A(i - 1), a[i - 1]}}}).values;
        out.w.push_back(solve_weights(b, rhs, opts).x);
        h.z.push_back(z[i]);
        out.pi_e *= policy.action_dist(i, h)[a[i]];
        h.a.push_back(a[i]);
    }
    out.omega = out.w.back();
    for (int i = t - 1; i >= 0; --i) out.omega = out.omega * out.w[i];
    return out;
}

EstimateRecord theorem1_value(const MatrixSource& src, const EvaluationPolicy& policy, int L, double gamma,
                              const ChainOptions& opts) {
    check_inputs(src, policy, L, ModelKind::Pomdp);
    const auto& s = src.spaces();
    const int nz = s.n_z, na = s.n_a;
    const Theorem1Tables tab(src, L, opts.solve);
    EstimatorDiagnostics diag;
    Tracker tr{diag};
    std::vector<Eigen::VectorXd> dists(L + 1, Eigen::VectorXd::Zero(s.n_r()));

    if (policy.is_memoryless() && !opts.force_enumeration) {
        diag.path = "dynamic-program";
        std::vector<Eigen::VectorXd> v(na);
        for (int a = 0; a < na; ++a) v[a] = tr.solve(tab.b[0][a], tab.p_z0);
        for (int t = 0; t <= L; ++t) {
            for (int z = 0; z < nz; ++z)
                for (int a = 0; a < na; ++a) {
                    const double p = policy.prob(t, z, a);
                    if (p != 0.0) add_product(dists[t], tab.f[t][z * na + a], v[a], p, diag.nan_skipped);
                }
            if (t == L) break;
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nz);
            for (int zp = 0; zp < nz; ++zp)
                for (int ap = 0; ap < na; ++ap) {
                    const double p = policy.prob(t, zp, ap);
                    if (p != 0.0) add_product(rhs, tab.d[t + 1][zp * na + ap], v[ap], p, diag.nan_skipped);
                }
            for (int a = 0; a < na; ++a) v[a] = tr.solve(tab.b[t + 1][a], rhs);
        }
        return finish("theorem1", s, gamma, std::move(dists), std::move(diag), opts.renormalize);
    }

    diag.path = "enumeration";
    Budget budget(opts.budget);
    ObservableHistory h;
    auto dfs = [&](auto&& self, int t, const Eigen::VectorXd& rhs, double pe) -> void {
        for (int a = 0; a < na; ++a) {
            const Eigen::VectorXd x = tr.solve(tab.b[t][a], rhs);
            if (x.isZero(0.0)) continue;
            for (int z = 0; z < nz; ++z) {
                budget.spend(1);
                h.z.push_back(z);
                const double p = pe * policy.action_dist(t, h)[a];
                if (p != 0.0) {
                    add_product(dists[t], tab.f[t][z * na + a], x, p, diag.nan_skipped);
                    if (t < L) {
                        Eigen::VectorXd next = Eigen::VectorXd::Zero(nz);
                        add_product(next, tab.d[t + 1][z * na + a], x, 1.0, diag.nan_skipped);
                        h.a.push_back(a);
                        self(self, t + 1, next, p);
                        h.a.pop_back();
                    }
                }
                h.z.pop_back();
            }
        }
    };
    dfs(dfs, 0, tab.p_z0, 1.0);
    diag.terms = budget.used();
    return finish("theorem1", s, gamma, std::move(dists), std::move(diag), opts.renormalize);
}

EstimateRecord theorem2_value(const MatrixSource& src, const EvaluationPolicy& policy, int L, double gamma,
                              const std::optional<IndexSets>& sets_in, const ChainOptions& opts) {
    check_inputs(src, policy, L, ModelKind::Decoupled);
    const auto& s = src.spaces();
    const int nz = s.n_z, no = s.n_o, na = s.n_a;
    IndexSelectionOptions sel;
    // A ridge solve is defined for singular blocks, so selection only ranks them.
    sel.condition_cap = opts.solve.ridge > 0.0 ? std::numeric_limits<double>::infinity() : opts.solve.condition_cap;
    const IndexSets sets = sets_in ? *sets_in : select_index_sets(src, L, sel);
    if (sets.horizon() < L) throw UsageError("index sets do not cover the requested horizon");
    const Theorem2Tables tab(src, L, sets, opts.solve);
    EstimatorDiagnostics diag;
    diag.index_sets = sets;
    Tracker tr{diag};
    std::vector<Eigen::VectorXd> dists(L + 1, Eigen::VectorXd::Zero(s.n_r()));

    if (policy.is_memoryless() && !opts.force_enumeration) {
        diag.path = "dynamic-program";
        std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(na) * nz);  // [a * nz + z]
        for (int a = 0; a < na; ++a)
            for (int z = 0; z < nz; ++z) v[a * nz + z] = tr.solve(tab.B(0, a, z), tab.g0[z]);
        for (int t = 0; t <= L; ++t) {
            for (int z = 0; z < nz; ++z)
                for (int o = 0; o < no; ++o)
                    for (int a = 0; a < na; ++a) {
                        const double p = policy.prob(t, z * no + o, a);
                        if (p != 0.0) add_product(dists[t], tab.F(t, z, o, a), v[a * nz + z], p, diag.nan_skipped);
                    }
            if (t == L) break;
            std::vector<Eigen::VectorXd> next(v.size());
            const auto rows = static_cast<Eigen::Index>(sets.rows[t + 1].size());
            for (int z = 0; z < nz; ++z) {
                Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
                for (int zp = 0; zp < nz; ++zp)
                    for (int op = 0; op < no; ++op)
                        for (int ap = 0; ap < na; ++ap) {
                            const double p = policy.prob(t, zp * no + op, ap);
                            if (p != 0.0)
                                add_product(rhs, tab.D(t + 1, z, op, ap, zp), v[ap * nz + zp], p, diag.nan_skipped);
                        }
                for (int a = 0; a < na; ++a) next[a * nz + z] = tr.solve(tab.B(t + 1, a, z), rhs);
            }
            v.swap(next);
        }
        return finish("theorem2", s, gamma, std::move(dists), std::move(diag), opts.renormalize);
    }

    diag.path = "enumeration";
    Budget budget(opts.budget);
    ObservableHistory h;
    // x_prev solves the previous step; (zp, op, ap) is the previous observable step.
    auto dfs = [&](auto&& self, int t, const Eigen::VectorXd& x_prev, int zp, int op, int ap, double pe) -> void {
        for (int z = 0; z < nz; ++z) {
            Eigen::VectorXd rhs;
            if (t == 0) {
                rhs = tab.g0[z];
            } else {
                rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sets.rows[t].size()));
                add_product(rhs, tab.D(t, z, op, ap, zp), x_prev, 1.0, diag.nan_skipped);
            }
            if (rhs.isZero(0.0)) continue;
            h.z.push_back(z);
            for (int a = 0; a < na; ++a) {
                const Eigen::VectorXd x = tr.solve(tab.B(t, a, z), rhs);
                if (x.isZero(0.0)) continue;
                for (int o = 0; o < no; ++o) {
                    budget.spend(1);
                    h.o.push_back(o);
                    const double p = pe * policy.action_dist(t, h, no)[a];
                    if (p != 0.0) {
                        add_product(dists[t], tab.F(t, z, o, a), x, p, diag.nan_skipped);
                        if (t < L) {
                            h.a.push_back(a);
                            self(self, t + 1, x, z, o, a, p);
                            h.a.pop_back();
                        }
                    }
                    h.o.pop_back();
                }
            }
            h.z.pop_back();
        }
    };
    dfs(dfs, 0, Eigen::VectorXd(), 0, 0, 0, 1.0);
    diag.terms = budget.used();
    return finish("theorem2", s, gamma, std::move(dists), std::move(diag), opts.renormalize);
}

RewardDistribution proposition1_value(const MatrixSource& src, const EvaluationPolicy& policy, int L,
                                      const SolveOptions& opts) {
    check_inputs(src, policy, L, ModelKind::Pomdp);
    const auto& s = src.spaces();
    const Eigen::MatrixXd pz = src.matrix({{Z(L)}, {}, {}, {}}).values;
    Eigen::VectorXd dist = Eigen::VectorXd::Zero(s.n_r());
    std::size_t skipped = 0;
    for (int a = 0; a < s.n_a; ++a) {
        const Inverter inv(src.matrix({{Z(L)}, {}, {Z(L - 1)}, {{A(L), a}}}), opts);
        if (inv.undefined()) throw SingularMatrixError("P(Z_" + std::to_string(L) + " | a, Z_" + std::to_string(L - 1) + ")",
                                                       std::numeric_limits<double>::infinity());
        const Eigen::VectorXd x = inv.solve(pz.col(0));
        for (int z = 0; z < s.n_z; ++z) {
            const double p = policy.prob(L, z, a);
            if (p == 0.0) continue;
            add_product(dist, src.matrix({{R(L)}, {{Z(L), z}}, {Z(L - 1)}, {{A(L), a}}}).values, x, p, skipped);
        }
    }
    return RewardDistribution{L, s.reward_values, std::vector<double>(dist.data(), dist.data() + dist.size())};
}

EstimateRecord naive_is_value(const std::vector<ObservableRecord>& data, const SpaceSpec& spaces,
                              const EvaluationPolicy& policy, double gamma, const ISOptions& opts) {
    if (data.empty()) throw UsageError("naive IS needs a non-empty dataset");
    const int L = data.front().horizon();
    if (L > policy.horizon()) throw UsageError("evaluation policy does not cover the logged horizon");
    const BehaviorActionTable table(data, spaces.n_a, opts.mode, opts.min_count);
    const int no = policy.kind() == ModelKind::Decoupled ? spaces.n_o : 0;

    EstimatorDiagnostics diag;
    diag.path = "records";
    diag.context_mode = to_string(opts.mode);
    diag.excluded_contexts = table.excluded_contexts();
    std::vector<Eigen::VectorXd> dists(L + 1, Eigen::VectorXd::Zero(spaces.n_r()));
    std::vector<double> returns;
    returns.reserve(data.size());
    for (const auto& r : data) {
        if (r.horizon() != L) throw UsageError("records do not share a horizon");
        ObservableHistory h;
        double w = 1.0;
        bool dropped = false;
        for (int t = 0; t <= L; ++t) {
            h.z.push_back(r.z[t]);
            if (no) h.o.push_back(r.o[t]);
            const auto pb = table.prob(r, t, r.a[t]);
            if (!pb) {
                dropped = true;
                break;
            }
            w *= policy.action_dist(t, h, no)[r.a[t]] / *pb;
            h.a.push_back(r.a[t]);
        }
        if (dropped) {
            ++diag.dropped_records;
            continue;
        }
        if (opts.clip && w > *opts.clip) {
            w = *opts.clip;
            ++diag.clip_events;
        }
        double ret = 0.0, disc = 1.0;
        for (int t = 0; t <= L; ++t) {
            dists[t](r.r[t]) += w;
            ret += disc * spaces.reward_values[r.r[t]];
            disc *= gamma;
        }
        returns.push_back(w * ret);
    }
    const auto kept = static_cast<double>(returns.size());
    diag.terms = returns.size();
    if (returns.empty()) {
        for (auto& d : dists) d.setConstant(kNaN);
    } else {
        for (auto& d : dists) d /= kept;
        if (returns.size() > 1) {
            const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / kept;
            double ss = 0.0;
            for (double x : returns) ss += (x - mean) * (x - mean);
            diag.stderr_v = std::sqrt(ss / (kept - 1.0) / kept);
        }
    }
    return finish("naive-is", spaces, gamma, std::move(dists), std::move(diag), false);
}

namespace {

struct EmbeddedProblem {
    TabularPOMDP m;
    BehaviorPolicy b;
    EvaluationPolicy e;
    SpaceSpec original;
};

EmbeddedProblem as_pomdp(const AnyModel& model, const BehaviorPolicy& behavior, const EvaluationPolicy& policy) {
    require_valid(validate_model(model), "model");
    if (behavior.kind != kind_of(model) || policy.kind() != kind_of(model))
        throw UsageError("policy kinds do not match the model");
    if (const auto* m = std::get_if<TabularPOMDP>(&model)) return {*m, behavior, policy, m->spaces};
    const auto& dm = std::get<TabularDPOMDP>(model);
    return {embed_dpomdp_as_pomdp(dm), embed_behavior(behavior, dm.spaces), embed_evaluation(policy, dm.spaces),
            dm.spaces};
}

// Histories of the embedded model carry x = z * n_o + o; the caller's policy sees (z, o).
struct HistoryView {
    int n_o = 0;  // 0 for plain POMDPs
    ObservableHistory h;
    void push(int x) {
        if (n_o) {
            h.z.push_back(x / n_o);
            h.o.push_back(x % n_o);
        } else {
            h.z.push_back(x);
        }
    }
    void pop() {
        h.z.pop_back();
        if (n_o) h.o.pop_back();
    }
};

// P^b(a_t | z_t) marginalized over the behavior process: [t][z * n_a + a].
std::vector<std::vector<double>> last_observation_probs(const TabularPOMDP& m, const BehaviorPolicy& b, int L) {
    const auto& s = m.spaces;
    std::vector<std::vector<double>> out(L + 1, std::vector<double>(static_cast<std::size_t>(s.n_z) * s.n_a, 0.0));
    std::vector<double> d = m.init;
    for (int t = 0; t <= L; ++t) {
        std::vector<double> next(s.n_u, 0.0);
        for (int z = 0; z < s.n_z; ++z) {
            double mass = 0.0;
            for (int u = 0; u < s.n_u; ++u) mass += d[u] * m.obs(u, z);
            if (mass == 0.0) continue;
            for (int a = 0; a < s.n_a; ++a) {
                double p = 0.0;
                for (int u = 0; u < s.n_u; ++u) p += d[u] * m.obs(u, z) * b.prob(t, u, a);
                out[t][z * s.n_a + a] = p / mass;
            }
        }
        for (int u = 0; u < s.n_u; ++u)
            for (int a = 0; a < s.n_a; ++a)
                for (int u2 = 0; u2 < s.n_u; ++u2) next[u2] += d[u] * b.prob(t, u, a) * m.trans(u, a, u2);
        d.swap(next);
    }
    return out;
}

// Reward-indicator mass M[t'][r][u] alongside the filter alpha[u].
struct WeightedState {
    std::vector<double> alpha;
    std::vector<double> mass;  // [(t' * n_r + r) * n_u + u]
};

WeightedState propagate(const TabularPOMDP& m, const WeightedState& s, int a) {
    const int nu = m.spaces.n_u;
    WeightedState out{std::vector<double>(nu, 0.0), std::vector<double>(s.mass.size(), 0.0)};
    const std::size_t rows = s.mass.size() / nu;
    for (int u = 0; u < nu; ++u)
        for (int u2 = 0; u2 < nu; ++u2) {
            const double p = m.trans(u, a, u2);
            if (p == 0.0) continue;
            out.alpha[u2] += s.alpha[u] * p;
            for (std::size_t k = 0; k < rows; ++k) out.mass[k * nu + u2] += s.mass[k * nu + u] * p;
        }
    return out;
}

}  // namespace

EstimateRecord naive_is_population(const AnyModel& model, const BehaviorPolicy& behavior,
                                   const EvaluationPolicy& policy, int L, ContextMode mode, const OracleOptions& opts) {
    const EmbeddedProblem p = as_pomdp(model, behavior, policy);
    if (L < 0 || L > behavior.horizon() || L > policy.horizon())
        throw UsageError("horizon exceeds a policy horizon");
    const auto& m = p.m;
    const int nu = m.spaces.n_u, nx = m.spaces.n_z, na = m.spaces.n_a, nr = m.spaces.n_r();
    const double gamma = gamma_of(model);
    const auto pb_last = last_observation_probs(m, p.b, L);
    const std::size_t block = static_cast<std::size_t>(L + 1) * nr;

    EstimatorDiagnostics diag;
    diag.path = "population";
    diag.context_mode = to_string(mode);
    std::vector<Eigen::VectorXd> dists(L + 1, Eigen::VectorXd::Zero(nr));
    auto collect = [&](const WeightedState& st, double w) {
        for (int t = 0; t <= L; ++t)
            for (int r = 0; r < nr; ++r) {
                double s = 0.0;
                for (int u = 0; u < nu; ++u) s += st.mass[(static_cast<std::size_t>(t) * nr + r) * nu + u];
                dists[t](r) += w * s;
            }
    };
    auto act = [&](const WeightedState& st, int t, int x, int a, double scale) {
        WeightedState out{std::vector<double>(nu), std::vector<double>(st.mass.size())};
        for (int u = 0; u < nu; ++u) {
            const double f = m.obs(u, x) * p.b.prob(t, u, a) * scale;
            out.alpha[u] = st.alpha[u] * f;
            for (std::size_t k = 0; k < block; ++k) out.mass[k * nu + u] = st.mass[k * nu + u] * f;
            out.mass[(static_cast<std::size_t>(t) * nr + m.reward_index(u, a)) * nu + u] += out.alpha[u];
        }
        return out;
    };
    WeightedState start{m.init, std::vector<double>(block * nu, 0.0)};

    if (mode == ContextMode::LastObservation && policy.is_memoryless()) {
        // Weights depend on (t, x_t, a_t) only, so the weighted process stays Markov.
        WeightedState st = start;
        for (int t = 0; t <= L; ++t) {
            WeightedState acc{std::vector<double>(nu, 0.0), std::vector<double>(st.mass.size(), 0.0)};
            for (int a = 0; a < na; ++a) {
                WeightedState sum{std::vector<double>(nu, 0.0), std::vector<double>(st.mass.size(), 0.0)};
                for (int x = 0; x < nx; ++x) {
                    const double pb = pb_last[t][x * na + a];
                    const double pe = p.e.prob(t, x, a);
                    if (pb == 0.0 || pe == 0.0) continue;
                    const WeightedState part = act(st, t, x, a, pe / pb);
                    for (int u = 0; u < nu; ++u) sum.alpha[u] += part.alpha[u];
                    for (std::size_t k = 0; k < sum.mass.size(); ++k) sum.mass[k] += part.mass[k];
                }
                const WeightedState moved = t < L ? propagate(m, sum, a) : sum;
                for (int u = 0; u < nu; ++u) acc.alpha[u] += moved.alpha[u];
                for (std::size_t k = 0; k < acc.mass.size(); ++k) acc.mass[k] += moved.mass[k];
            }
            st = std::move(acc);
        }
        collect(st, 1.0);
        return finish("naive-is", p.original, gamma, std::move(dists), std::move(diag), false);
    }

    Budget budget(opts.budget);
    HistoryView view{kind_of(model) == ModelKind::Decoupled ? p.original.n_o : 0, {}};
    auto dfs = [&](auto&& self, int t, const WeightedState& st, double w) -> void {
        for (int x = 0; x < nx; ++x) {
            budget.spend(static_cast<std::size_t>(nu) * (block + 1));
            double mass = 0.0;
            for (int u = 0; u < nu; ++u) mass += st.alpha[u] * m.obs(u, x);
            if (mass == 0.0) continue;
            view.push(x);
            const ProbVector pe = policy.action_dist(t, view.h, view.n_o);
            for (int a = 0; a < na; ++a) {
                if (pe[a] == 0.0) continue;
                double pb = 0.0;
                if (mode == ContextMode::LastObservation) {
                    pb = pb_last[t][x * na + a];
                } else {
                    for (int u = 0; u < nu; ++u) pb += st.alpha[u] * m.obs(u, x) * p.b.prob(t, u, a);
                    pb /= mass;
                }
                if (pb == 0.0) continue;
                const WeightedState next = act(st, t, x, a, 1.0);
                const double w2 = w * pe[a] / pb;
                if (t == L) {
                    collect(next, w2);
                } else {
                    view.h.a.push_back(a);
                    self(self, t + 1, propagate(m, next, a), w2);
                    view.h.a.pop_back();
                }
            }
            view.pop();
        }
    };
    dfs(dfs, 0, start, 1.0);
    diag.terms = budget.used();
    return finish("naive-is", p.original, gamma, std::move(dists), std::move(diag), false);
}

EstimateRecord oracle_is_value(const Dataset& data, const SpaceSpec& spaces, const EvaluationPolicy& policy,
                               const BehaviorPolicy& behavior, double gamma) {
    if (data.records.empty()) throw UsageError("oracle IS needs a non-empty dataset");
    if (policy.kind() != data.kind || behavior.kind != data.kind)
        throw UsageError("oracle IS: policy kinds do not match the dataset");
    const int L = data.horizon;
    if (L > policy.horizon() || L > behavior.horizon()) throw UsageError("a policy does not cover the logged horizon");
    const bool dec = data.kind == ModelKind::Decoupled;
    const int no = dec ? spaces.n_o : 0;

    EstimatorDiagnostics diag;
    diag.path = "records";
    diag.context_mode = "hidden-state";
    std::vector<Eigen::VectorXd> dists(L + 1, Eigen::VectorXd::Zero(spaces.n_r()));
    std::vector<double> returns;
    returns.reserve(data.records.size());
    for (const auto& tr : data.records) {
        if (tr.u.size() != tr.a.size()) throw UsageError("oracle IS needs hidden states in every record");
        ObservableHistory h;
        double w = 1.0;
        for (int t = 0; t <= L; ++t) {
            h.z.push_back(tr.z[t]);
            if (dec) h.o.push_back(tr.o[t]);
            const int ctx = dec ? tr.u[t] * spaces.n_z + tr.z[t] : tr.u[t];
            const double pb = behavior.prob(t, ctx, tr.a[t]);
            if (pb == 0.0) throw UsageError("oracle IS: record has an action with zero behavior probability");
            w *= policy.action_dist(t, h, no)[tr.a[t]] / pb;
            h.a.push_back(tr.a[t]);
        }
        double ret = 0.0, disc = 1.0;
        for (int t = 0; t <= L; ++t) {
            dists[t](tr.r[t]) += w;
            ret += disc * spaces.reward_values[tr.r[t]];
            disc *= gamma;
        }
        returns.push_back(w * ret);
    }
    const auto n = static_cast<double>(returns.size());
    for (auto& d : dists) d /= n;
    diag.terms = returns.size();
    if (returns.size() > 1) {
        const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : returns) ss += (x - mean) * (x - mean);
        diag.stderr_v = std::sqrt(ss / (n - 1.0) / n);
    }
    return finish("oracle-is", spaces, gamma, std::move(dists), std::move(diag), false);
}

Assumption1Report check_assumption1(const AnyModel& model, const BehaviorPolicy& behavior,
                                    const EvaluationPolicy& policy, int L, const OracleOptions& opts) {
    const EmbeddedProblem p = as_pomdp(model, behavior, policy);
    if (L < 0 || L > behavior.horizon() || L > policy.horizon())
        throw UsageError("horizon exceeds a policy horizon");
    const auto& m = p.m;
    const int nu = m.spaces.n_u, nx = m.spaces.n_z, na = m.spaces.n_a;
    Budget budget(opts.budget);
    HistoryView view{kind_of(model) == ModelKind::Decoupled ? p.original.n_o : 0, {}};
    Assumption1Report rep;
    rep.reward_condition = true;

    // Reward condition: along every trajectory with positive probability under
    // either process, r_t is determined by (z_0, a_0, ..., z_t, a_t).
    std::map<std::vector<int>, int> reward_of;
    std::vector<int> key;
    auto rewards = [&](auto&& self, int t, int u, bool pos_b, bool pos_e) -> void {
        for (int x = 0; x < nx; ++x) {
            if (m.obs(u, x) == 0.0) continue;
            budget.spend(1);
            view.push(x);
            key.push_back(x);
            const ProbVector pe = policy.action_dist(t, view.h, view.n_o);
            for (int a = 0; a < na; ++a) {
                const bool b2 = pos_b && p.b.prob(t, u, a) > 0.0;
                const bool e2 = pos_e && pe[a] > 0.0;
                if (!b2 && !e2) continue;
                key.push_back(a);
                const auto [it, inserted] = reward_of.emplace(key, m.reward_index(u, a));
                if (!inserted && it->second != m.reward_index(u, a)) rep.reward_condition = false;
                if (t < L) {
                    view.h.a.push_back(a);
                    for (int u2 = 0; u2 < nu; ++u2)
                        if (m.trans(u, a, u2) > 0.0) self(self, t + 1, u2, b2, e2);
                    view.h.a.pop_back();
                }
                key.pop_back();
            }
            key.pop_back();
            view.pop();
        }
    };
    for (int u = 0; u < nu; ++u)
        if (m.init[u] > 0.0) rewards(rewards, 0, u, true, true);

    // Transition condition: P^b(z_{t+1} | tau_t) = P^e(z_{t+1} | tau_t) where both are defined.
    // Under the evaluation process the action factor depends on the history only and cancels.
    auto predict = [&](const std::vector<double>& beta, int a) {
        std::vector<double> out(nx, 0.0);
        double total = 0.0;
        for (int u = 0; u < nu; ++u) {
            if (beta[u] == 0.0) continue;
            for (int u2 = 0; u2 < nu; ++u2) {
                const double q = beta[u] * m.trans(u, a, u2);
                if (q == 0.0) continue;
                for (int x = 0; x < nx; ++x) out[x] += q * m.obs(u2, x);
                total += q;
            }
        }
        for (double& v : out) v /= total;
        return out;
    };
    auto step = [&](const std::vector<double>& beta, int a) {
        std::vector<double> out(nu, 0.0);
        for (int u = 0; u < nu; ++u)
            if (beta[u] != 0.0)
                for (int u2 = 0; u2 < nu; ++u2) out[u2] += beta[u] * m.trans(u, a, u2);
        return out;
    };
    auto transitions = [&](auto&& self, int t, const std::vector<double>& bb, const std::vector<double>& be) -> void {
        for (int x = 0; x < nx; ++x) {
            budget.spend(static_cast<std::size_t>(nu) * nu);
            std::vector<double> bbx(nu), bex(nu);
            double mb = 0.0, me = 0.0;
            for (int u = 0; u < nu; ++u) {
                mb += bbx[u] = bb[u] * m.obs(u, x);
                me += bex[u] = be[u] * m.obs(u, x);
            }
            if (mb == 0.0 || me == 0.0) continue;
            view.push(x);
            const ProbVector pe = policy.action_dist(t, view.h, view.n_o);
            for (int a = 0; a < na; ++a) {
                if (pe[a] == 0.0) continue;
                std::vector<double> bba(nu);
                double mba = 0.0;
                for (int u = 0; u < nu; ++u) mba += bba[u] = bbx[u] * p.b.prob(t, u, a);
                if (mba == 0.0) continue;
                const auto qb = predict(bba, a), qe = predict(bex, a);
                for (int x2 = 0; x2 < nx; ++x2)
                    rep.transition_violation = std::max(rep.transition_violation, std::abs(qb[x2] - qe[x2]));
                if (t + 1 < L) {
                    view.h.a.push_back(a);
                    self(self, t + 1, step(bba, a), step(bex, a));
                    view.h.a.pop_back();
                }
            }
            view.pop();
        }
    };
    if (L > 0) transitions(transitions, 0, m.init, m.init);
    rep.holds = rep.reward_condition && rep.transition_violation <= 1e-10;
    return rep;
}

}  // namespace ope
