#include "ope/model.hpp"

#include <cmath>
#include <sstream>

namespace ope {

const char* to_string(ModelKind kind) {
    return kind == ModelKind::Pomdp ? "pomdp" : "dpomdp";
}

namespace {

class Checker {
public:
    explicit Checker(ValidationReport& r) : report_(r) {}

    void fail(std::string location, std::string message) {
        report_.violations.push_back({std::move(location), std::move(message)});
    }

    // Checks entries in [0,1] and that the slice sums to 1.
    void distribution(const double* p, std::size_t n, const std::string& location) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
                std::ostringstream os;
                os << "entry " << i << " = " << p[i] << " outside [0,1]";
                fail(location, os.str());
                return;
            }
            sum += p[i];
        }
        if (std::abs(sum - 1.0) > kSumTolerance) {
            std::ostringstream os;
            os.precision(17);
            os << "slice sums to " << sum;
            fail(location, os.str());
        }
    }

    bool size(std::size_t actual, std::size_t expected, const std::string& what) {
        if (actual == expected) return true;
        std::ostringstream os;
        os << "size " << actual << ", expected " << expected;
        fail(what, os.str());
        return false;
    }

private:
    ValidationReport& report_;
};

std::string loc(const std::string& table, std::initializer_list<std::pair<const char*, int>> idx) {
    std::ostringstream os;
    os << table << "[";
    bool first = true;
    for (const auto& [name, v] : idx) {
        if (!first) os << ",";
        os << name << "=" << v;
        first = false;
    }
    os << "]";
    return os.str();
}

void check_gamma(Checker& c, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) c.fail("gamma", "must lie strictly inside (0,1)");
}

}  // namespace

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v.location << ": " << v.message << "\n";
    return os.str();
}

void require_valid(const ValidationReport& report, const std::string& what) {
    if (!report.ok()) throw InvalidModelError(what + " is invalid:\n" + report.to_string());
}

ValidationReport validate_spaces(const SpaceSpec& s, ModelKind kind) {
    ValidationReport report;
    Checker c(report);
    if (s.n_u < 1) c.fail("spaces.n_u", "must be >= 1");
    if (s.n_z < 1) c.fail("spaces.n_z", "must be >= 1");
    if (s.n_a < 1) c.fail("spaces.n_a", "must be >= 1");
    if (kind == ModelKind::Decoupled && s.n_o < 1) c.fail("spaces.n_o", "must be >= 1");
    if (s.reward_values.empty()) c.fail("spaces.reward_values", "must be non-empty");
    for (std::size_t i = 0; i < s.reward_values.size(); ++i) {
        const double v = s.reward_values[i];
        if (!std::isfinite(v)) c.fail("spaces.reward_values", "value is not finite");
        if (i > 0 && !(v > s.reward_values[i - 1])) c.fail("spaces.reward_values", "not strictly increasing");
    }
    return report;
}

ValidationReport validate_pomdp(const TabularPOMDP& m) {
    ValidationReport report = validate_spaces(m.spaces, ModelKind::Pomdp);
    if (!report.ok()) return report;
    Checker c(report);
    const auto& s = m.spaces;
    const std::size_t nu = s.n_u, nz = s.n_z, na = s.n_a;
    bool sizes_ok = c.size(m.transition.size(), na * nu * nu, "transition");
    sizes_ok &= c.size(m.observation.size(), nu * nz, "observation");
    sizes_ok &= c.size(m.pre_observation.size(), nu * nz, "pre_observation");
    sizes_ok &= c.size(m.reward.size(), nu * na, "reward");
    sizes_ok &= c.size(m.init.size(), nu, "init");
    check_gamma(c, m.gamma);
    if (!sizes_ok) return report;

    for (int a = 0; a < s.n_a; ++a)
        for (int u = 0; u < s.n_u; ++u)
            c.distribution(&m.transition[(a * nu + u) * nu], nu, loc("transition", {{"a", a}, {"u", u}}));
    for (int u = 0; u < s.n_u; ++u) {
        c.distribution(&m.observation[u * nz], nz, loc("observation", {{"u", u}}));
        c.distribution(&m.pre_observation[u * nz], nz, loc("pre_observation", {{"u", u}}));
    }
    for (std::size_t i = 0; i < m.reward.size(); ++i)
        if (m.reward[i] < 0 || m.reward[i] >= s.n_r())
            c.fail(loc("reward", {{"u", static_cast<int>(i / na)}, {"a", static_cast<int>(i % na)}}),
                   "not an index into reward_values");
    c.distribution(m.init.data(), nu, "init");
    return report;
}

ValidationReport validate_dpomdp(const TabularDPOMDP& m) {
    ValidationReport report = validate_spaces(m.spaces, ModelKind::Decoupled);
    if (!report.ok()) return report;
    Checker c(report);
    const auto& s = m.spaces;
    const std::size_t nu = s.n_u, nz = s.n_z, na = s.n_a, no = s.n_o;
    bool sizes_ok = c.size(m.transition.size(), na * nz * nu * nz * nu, "transition");
    sizes_ok &= c.size(m.independent_observation.size(), nu * no, "independent_observation");
    sizes_ok &= c.size(m.reward.size(), nu * nz * na, "reward");
    sizes_ok &= c.size(m.init.size(), nz * nz * nu, "init");
    check_gamma(c, m.gamma);
    if (!sizes_ok) return report;

    for (int a = 0; a < s.n_a; ++a)
        for (int z = 0; z < s.n_z; ++z)
            for (int u = 0; u < s.n_u; ++u)
                c.distribution(&m.transition[((a * nz + z) * nu + u) * nz * nu], nz * nu,
                               loc("transition", {{"a", a}, {"z", z}, {"u", u}}));
    for (int u = 0; u < s.n_u; ++u)
        c.distribution(&m.independent_observation[u * no], no, loc("independent_observation", {{"u", u}}));
    for (std::size_t i = 0; i < m.reward.size(); ++i)
        if (m.reward[i] < 0 || m.reward[i] >= s.n_r()) c.fail("reward", "entry is not an index into reward_values");
    c.distribution(m.init.data(), m.init.size(), "init");
    return report;
}

ValidationReport validate_behavior(const BehaviorPolicy& p, const SpaceSpec& s) {
    ValidationReport report;
    Checker c(report);
    const int expected = p.kind == ModelKind::Pomdp ? s.n_u : s.n_u * s.n_z;
    if (p.n_context != expected) c.fail("behavior.n_context", "does not match model spaces");
    if (p.n_a != s.n_a) c.fail("behavior.n_a", "does not match model spaces");
    if (p.tables.empty()) c.fail("behavior.tables", "no steps");
    if (!report.ok()) return report;
    for (std::size_t t = 0; t < p.tables.size(); ++t) {
        if (!c.size(p.tables[t].size(), static_cast<std::size_t>(p.n_context) * p.n_a,
                    loc("behavior.tables", {{"t", static_cast<int>(t)}})))
            continue;
        for (int x = 0; x < p.n_context; ++x)
            c.distribution(&p.tables[t][static_cast<std::size_t>(x) * p.n_a], p.n_a,
                           loc("behavior", {{"t", static_cast<int>(t)}, {"context", x}}));
    }
    return report;
}

ValidationReport validate_evaluation(const EvaluationPolicy& p, const SpaceSpec& s) {
    ValidationReport report;
    Checker c(report);
    if (p.n_a() != s.n_a) c.fail("eval.n_a", "does not match model spaces");
    if (!p.is_memoryless()) return report;
    const int expected = p.kind() == ModelKind::Pomdp ? s.n_z : s.n_z * s.n_o;
    if (p.n_context() != expected) c.fail("eval.n_context", "does not match model spaces");
    if (!report.ok()) return report;
    const auto& tables = p.tables();
    for (std::size_t t = 0; t < tables.size(); ++t) {
        if (!c.size(tables[t].size(), static_cast<std::size_t>(p.n_context()) * p.n_a(),
                    loc("eval.tables", {{"t", static_cast<int>(t)}})))
            continue;
        for (int x = 0; x < p.n_context(); ++x)
            c.distribution(&tables[t][static_cast<std::size_t>(x) * p.n_a()], p.n_a(),
                           loc("eval", {{"t", static_cast<int>(t)}, {"context", x}}));
    }
    return report;
}

EvaluationPolicy EvaluationPolicy::memoryless(ModelKind kind, int n_context, int n_a,
                                              std::vector<std::vector<double>> tables) {
    EvaluationPolicy p;
    p.kind_ = kind;
    p.n_context_ = n_context;
    p.n_a_ = n_a;
    p.horizon_ = static_cast<int>(tables.size()) - 1;
    p.tables_ = std::move(tables);
    return p;
}

EvaluationPolicy EvaluationPolicy::general(ModelKind kind, int n_a, int horizon, HistoryFn fn) {
    if (!fn) throw UsageError("general evaluation policy needs a callable");
    EvaluationPolicy p;
    p.kind_ = kind;
    p.n_a_ = n_a;
    p.horizon_ = horizon;
    p.fn_ = std::move(fn);
    return p;
}

double EvaluationPolicy::prob(int t, int context, int a) const {
    if (fn_) throw UsageError("table lookup on a history-dependent evaluation policy");
    if (t < 0 || t > horizon_) throw UsageError("evaluation policy step out of range");
    return tables_[t][static_cast<std::size_t>(context) * n_a_ + a];
}

ProbVector EvaluationPolicy::action_dist(int t, const ObservableHistory& h, int n_o) const {
    if (t < 0 || t > horizon_) throw UsageError("evaluation policy step out of range");
    if (h.step() != t) throw UsageError("history length does not match step");
    if (fn_) return fn_(t, h);
    int context = h.z[t];
    if (kind_ == ModelKind::Decoupled) {
        if (static_cast<int>(h.o.size()) <= t) throw UsageError("Decoupled history without o_t");
        context = h.z[t] * n_o + h.o[t];
    }
    const auto* row = &tables_[t][static_cast<std::size_t>(context) * n_a_];
    return ProbVector(row, row + n_a_);
}

ObservableRecord project(const Trajectory& tr) {
    return ObservableRecord{tr.z_pre, tr.z, tr.o, tr.a, tr.r};
}

TabularPOMDP embed_dpomdp_as_pomdp(const TabularDPOMDP& m) {
    require_valid(validate_dpomdp(m), "Decoupled model");
    const auto& s = m.spaces;
    const int nu = s.n_u, nz = s.n_z, no = s.n_o, na = s.n_a;
    const int nh = nu * nz;
    const int nx = nz * no;
    auto hid = [nz](int u, int z) { return u * nz + z; };

    TabularPOMDP e;
    e.spaces = SpaceSpec{nh, nx, na, 0, s.reward_values};
    e.gamma = m.gamma;
    e.transition.assign(static_cast<std::size_t>(na) * nh * nh, 0.0);
    for (int a = 0; a < na; ++a)
        for (int z = 0; z < nz; ++z)
            for (int u = 0; u < nu; ++u)
                for (int z2 = 0; z2 < nz; ++z2)
                    for (int u2 = 0; u2 < nu; ++u2)
                        e.transition[(static_cast<std::size_t>(a) * nh + hid(u, z)) * nh + hid(u2, z2)] =
                            m.trans(z, u, a, z2, u2);

    e.observation.assign(static_cast<std::size_t>(nh) * nx, 0.0);
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z)
            for (int o = 0; o < no; ++o) e.observation[hid(u, z) * nx + z * no + o] = m.obs(u, o);

    e.init.assign(nh, 0.0);
    e.pre_observation.assign(static_cast<std::size_t>(nh) * nx, 0.0);
    for (int z0 = 0; z0 < nz; ++z0)
        for (int u0 = 0; u0 < nu; ++u0) {
            double mass = 0.0;
            for (int zp = 0; zp < nz; ++zp) mass += m.init_prob(zp, z0, u0);
            e.init[hid(u0, z0)] = mass;
            for (int zp = 0; zp < nz; ++zp) {
                const double cond = mass > 0.0 ? m.init_prob(zp, z0, u0) / mass : 1.0 / nz;
                for (int o = 0; o < no; ++o) e.pre_observation[hid(u0, z0) * nx + zp * no + o] = cond * m.obs(u0, o);
            }
        }

    e.reward.assign(static_cast<std::size_t>(nh) * na, 0);
    for (int u = 0; u < nu; ++u)
        for (int z = 0; z < nz; ++z)
            for (int a = 0; a < na; ++a) e.reward[hid(u, z) * na + a] = m.reward_index(u, z, a);
    return e;
}

BehaviorPolicy embed_behavior(const BehaviorPolicy& p, const SpaceSpec& s) {
    if (p.kind != ModelKind::Decoupled) throw UsageError("embed_behavior expects a Decoupled policy");
    // Decoupled context u * n_z + z already equals the embedded hidden index.
    BehaviorPolicy e = p;
    e.kind = ModelKind::Pomdp;
    e.n_context = s.n_u * s.n_z;
    return e;
}

EvaluationPolicy embed_evaluation(const EvaluationPolicy& p, const SpaceSpec& s) {
    if (p.kind() != ModelKind::Decoupled) throw UsageError("embed_evaluation expects a Decoupled policy");
    if (p.is_memoryless()) return EvaluationPolicy::memoryless(ModelKind::Pomdp, s.n_z * s.n_o, p.n_a(), p.tables());
    const int no = s.n_o;
    auto inner = p;
    return EvaluationPolicy::general(ModelKind::Pomdp, p.n_a(), p.horizon(),
                                     [inner, no](int t, const ObservableHistory& h) {
                                         ObservableHistory d;
                                         for (int x : h.z) {
                                             d.z.push_back(x / no);
                                             d.o.push_back(x % no);
                                         }
                                         d.a = h.a;
                                         return inner.action_dist(t, d, no);
                                     });
}

ProbVector policy_action_dist(const AnyPolicy& p, int t, const PolicyContext& ctx, int n_o) {
    if (const auto* b = std::get_if<BehaviorPolicy>(&p)) {
        const auto* hc = std::get_if<HiddenContext>(&ctx);
        if (!hc) throw UsageError("behavior policy needs a hidden-state context");
        if (t < 0 || t > b->horizon()) throw UsageError("behavior policy step out of range");
        if (hc->index < 0 || hc->index >= b->n_context) throw UsageError("hidden context out of range");
        const auto* row = &b->tables[t][static_cast<std::size_t>(hc->index) * b->n_a];
        return ProbVector(row, row + b->n_a);
    }
    const auto& e = std::get<EvaluationPolicy>(p);
    const auto* h = std::get_if<ObservableHistory>(&ctx);
    if (!h) throw UsageError("evaluation policy needs an observable-history context");
    return e.action_dist(t, *h, n_o);
}

BehaviorPolicy replicate_behavior(ModelKind kind, int n_context, int n_a, const std::vector<double>& table,
                                  int horizon) {
    BehaviorPolicy p;
    p.kind = kind;
    p.n_context = n_context;
    p.n_a = n_a;
    p.tables.assign(horizon + 1, table);
    return p;
}

}  // namespace ope
