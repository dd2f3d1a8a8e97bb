#include "ope/probtables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace ope {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

const char* kind_name(VarKind k) {
    switch (k) {
        case VarKind::U: return "U";
        case VarKind::Z: return "Z";
        case VarKind::O: return "O";
        case VarKind::A: return "A";
        case VarKind::R: return "R";
    }
    return "?";
}

std::string lower_name(const Var& v, int value) {
    std::ostringstream os;
    std::string k = kind_name(v.kind);
    k[0] = static_cast<char>(std::tolower(k[0]));
    os << k << "_" << v.t << "=" << value;
    return os.str();
}

void check_var(const Var& v, const SpaceSpec& s, ModelKind kind, int horizon) {
    const bool ok_t = v.kind == VarKind::Z ? v.t >= -1 : v.t >= 0;
    if (!ok_t || v.t > horizon) throw UsageError("variable " + to_string(v) + " outside the horizon");
    if (v.kind == VarKind::O && kind != ModelKind::Decoupled) throw UsageError("O variables need a Decoupled model");
    (void)s;
}

// Mixed-radix enumeration helper over a list of dimensions.
std::vector<int> decode(std::size_t code, const std::vector<int>& dims) {
    std::vector<int> out(dims.size());
    for (std::size_t i = dims.size(); i-- > 0;) {
        out[i] = static_cast<int>(code % dims[i]);
        code /= dims[i];
    }
    return out;
}

std::size_t product(const std::vector<int>& dims) {
    std::size_t p = 1;
    for (int d : dims) p *= static_cast<std::size_t>(d);
    return p;
}

JointTable empty_joint(const std::vector<Var>& vars, const SpaceSpec& s) {
    JointTable j;
    j.vars = vars;
    for (const auto& v : vars) j.dims.push_back(cardinality(v, s));
    j.values.assign(product(j.dims), 0.0);
    return j;
}

// Forward marginalization over (kept-variable code, hidden state).
class Propagator {
public:
    Propagator(const JointTable& layout, int n_hidden) : layout_(layout), n_h_(n_hidden) {
        mass_.assign(layout.values.size() * n_hidden, 0.0);
    }

    std::size_t stride_of(const Var& v) const {
        const int p = layout_.position(v);
        return p < 0 ? 0 : layout_.stride(p);
    }
    bool kept(const Var& v) const { return layout_.position(v) >= 0; }

    double& at(std::size_t code, int h) { return mass_[code * n_h_ + h]; }

    // Calls f(code, h, mass) for every non-zero entry.
    template <class F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < mass_.size(); ++i)
            if (mass_[i] != 0.0) f(i / n_h_, static_cast<int>(i % n_h_), mass_[i]);
    }

    void swap_in(std::vector<double>& next) { mass_.swap(next); }
    std::vector<double> blank() const { return std::vector<double>(mass_.size(), 0.0); }
    int n_hidden() const { return n_h_; }

    JointTable finish() const {
        JointTable out = layout_;
        out.total = 1.0;
        for (std::size_t i = 0; i < mass_.size(); ++i) out.values[i / n_h_] += mass_[i];
        return out;
    }

private:
    const JointTable& layout_;
    int n_h_;
    std::vector<double> mass_;
};

JointTable pomdp_joint(const TabularPOMDP& m, const BehaviorPolicy& b, const JointTable& layout, int T) {
    const auto& s = m.spaces;
    Propagator p(layout, s.n_u);
    const std::size_t s_pre = p.stride_of(Z(-1));
    for (int u = 0; u < s.n_u; ++u) {
        if (m.init[u] == 0.0) continue;
        if (p.kept(Z(-1))) {
            for (int z = 0; z < s.n_z; ++z) p.at(z * s_pre, u) += m.init[u] * m.pre_obs(u, z);
        } else {
            p.at(0, u) += m.init[u];
        }
    }
    for (int t = 0; t <= T; ++t) {
        if (p.kept(Z(t))) {
            const std::size_t st = p.stride_of(Z(t));
            auto next = p.blank();
            p.for_each([&](std::size_t code, int u, double w) {
                for (int z = 0; z < s.n_z; ++z) next[(code + z * st) * s.n_u + u] += w * m.obs(u, z);
            });
            p.swap_in(next);
        }
        if (p.kept(U(t))) {
            const std::size_t st = p.stride_of(U(t));
            auto next = p.blank();
            p.for_each([&](std::size_t code, int u, double w) { next[(code + u * st) * s.n_u + u] += w; });
            p.swap_in(next);
        }
        const bool need_action = p.kept(A(t)) || p.kept(R(t));
        if (t == T && !need_action) break;
        const std::size_t sa = p.stride_of(A(t)), sr = p.stride_of(R(t));
        auto next = p.blank();
        p.for_each([&](std::size_t code, int u, double w) {
            for (int a = 0; a < s.n_a; ++a) {
                const double pa = b.prob(t, u, a);
                if (pa == 0.0) continue;
                const std::size_t c2 = code + a * sa + m.reward_index(u, a) * sr;
                if (t == T) {
                    next[c2 * s.n_u + u] += w * pa;
                    continue;
                }
                for (int u2 = 0; u2 < s.n_u; ++u2) next[c2 * s.n_u + u2] += w * pa * m.trans(u, a, u2);
            }
        });
        p.swap_in(next);
    }
    return p.finish();
}

JointTable dpomdp_joint(const TabularDPOMDP& m, const BehaviorPolicy& b, const JointTable& layout, int T) {
    const auto& s = m.spaces;
    const int nz = s.n_z, nu = s.n_u, nh = nu * nz;
    Propagator p(layout, nh);
    const std::size_t s_pre = p.stride_of(Z(-1));
    for (int zp = 0; zp < nz; ++zp)
        for (int z0 = 0; z0 < nz; ++z0)
            for (int u0 = 0; u0 < nu; ++u0) p.at(zp * s_pre, u0 * nz + z0) += m.init_prob(zp, z0, u0);
    for (int t = 0; t <= T; ++t) {
        if (p.kept(Z(t)) || p.kept(U(t))) {
            const std::size_t sz = p.stride_of(Z(t)), su = p.stride_of(U(t));
            auto next = p.blank();
            p.for_each([&](std::size_t code, int h, double w) {
                next[(code + (h % nz) * sz + (h / nz) * su) * nh + h] += w;
            });
            p.swap_in(next);
        }
        if (p.kept(O(t))) {
            const std::size_t so = p.stride_of(O(t));
            auto next = p.blank();
            p.for_each([&](std::size_t code, int h, double w) {
                for (int o = 0; o < s.n_o; ++o) next[(code + o * so) * nh + h] += w * m.obs(h / nz, o);
            });
            p.swap_in(next);
        }
        const bool need_action = p.kept(A(t)) || p.kept(R(t));
        if (t == T && !need_action) break;
        const std::size_t sa = p.stride_of(A(t)), sr = p.stride_of(R(t));
        auto next = p.blank();
        p.for_each([&](std::size_t code, int h, double w) {
            const int u = h / nz, z = h % nz;
            for (int a = 0; a < s.n_a; ++a) {
                const double pa = b.prob(t, h, a);
                if (pa == 0.0) continue;
                const std::size_t c2 = code + a * sa + m.reward_index(u, z, a) * sr;
                if (t == T) {
                    next[c2 * nh + h] += w * pa;
                    continue;
                }
                for (int z2 = 0; z2 < nz; ++z2)
                    for (int u2 = 0; u2 < nu; ++u2) {
                        const double pt = m.trans(z, u, a, z2, u2);
                        if (pt != 0.0) next[c2 * nh + u2 * nz + z2] += w * pa * pt;
                    }
            }
        });
        p.swap_in(next);
    }
    return p.finish();
}

int record_value(const ObservableRecord& r, const Var& v) {
    switch (v.kind) {
        case VarKind::Z: return v.t < 0 ? r.z_pre : r.z[v.t];
        case VarKind::O: return r.o[v.t];
        case VarKind::A: return r.a[v.t];
        case VarKind::R: return r.r[v.t];
        case VarKind::U: break;
    }
    throw UsageError("hidden variables are not observable");
}

std::vector<int> iota_vec(int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

SingularMatrixError::SingularMatrixError(const std::string& descriptor, double condition_number)
    : Error([&] {
          std::ostringstream os;
          os << "singular matrix " << descriptor << " (condition number " << condition_number << ")";
          return os.str();
      }()),
      descriptor_(descriptor),
      condition_number_(condition_number) {}

std::string to_string(const Var& v) {
    std::ostringstream os;
    os << kind_name(v.kind) << "_" << v.t;
    return os.str();
}

int cardinality(const Var& v, const SpaceSpec& s) {
    switch (v.kind) {
        case VarKind::U: return s.n_u;
        case VarKind::Z: return s.n_z;
        case VarKind::O: return s.n_o;
        case VarKind::A: return s.n_a;
        case VarKind::R: return s.n_r();
    }
    return 0;
}

std::string MatrixDescriptor::label() const {
    std::ostringstream os;
    os << "P(";
    bool first = true;
    auto sep = [&] {
        if (!first) os << ",";
        first = false;
    };
    for (const auto& v : rows) sep(), os << to_string(v);
    for (const auto& [v, x] : row_fixed) sep(), os << lower_name(v, x);
    os << "|";
    first = true;
    for (const auto& [v, x] : given) sep(), os << lower_name(v, x);
    for (const auto& v : cols) sep(), os << to_string(v);
    os << ")";
    return os.str();
}

std::vector<Var> MatrixDescriptor::variables() const {
    std::vector<Var> out(rows.begin(), rows.end());
    for (const auto& [v, x] : row_fixed) out.push_back(v);
    out.insert(out.end(), cols.begin(), cols.end());
    for (const auto& [v, x] : given) out.push_back(v);
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        throw UsageError("descriptor " + label() + " repeats a variable");
    return out;
}

int MatrixDescriptor::max_step() const {
    int t = -1;
    for (const auto& v : variables()) t = std::max(t, v.t);
    return t;
}

bool CondProbMatrix::column_is_nan(int c) const {
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        if (std::isnan(values(r, c))) return true;
    return false;
}

bool CondProbMatrix::has_nan() const {
    return values.hasNaN();
}

CondProbMatrix CondProbMatrix::select(const std::vector<int>& rows, const std::vector<int>& cols) const {
    CondProbMatrix out;
    out.descriptor = descriptor;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row_labels.push_back(row_labels.at(rows[i]));
        for (std::size_t j = 0; j < cols.size(); ++j) out.values(i, j) = values(rows[i], cols[j]);
    }
    for (int c : cols) {
        out.col_labels.push_back(col_labels.at(c));
        out.counts.push_back(counts.at(c));
    }
    if (out.values.rows() == out.values.cols()) out.condition_number = ope::condition_number(out.values);
    return out;
}

json CondProbMatrix::to_json() const {
    json vals = json::array();
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            const double v = values(r, c);
            row.push_back(std::isnan(v) ? json(nullptr) : json(v));
        }
        vals.push_back(row);
    }
    return json{{"descriptor", descriptor},
                {"row_labels", row_labels},
                {"col_labels", col_labels},
                {"values", vals},
                {"counts", counts},
                {"condition_number", std::isfinite(condition_number) ? json(condition_number) : json(nullptr)}};
}

double condition_number(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return kNaN;
    if (a.hasNaN()) return kInf;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    const double lo = sv(sv.size() - 1);
    if (lo <= 0.0) return kInf;
    return sv(0) / lo;
}

std::size_t JointTable::stride(std::size_t var_index) const {
    std::size_t s = 1;
    for (std::size_t i = var_index + 1; i < dims.size(); ++i) s *= dims[i];
    return s;
}

int JointTable::position(const Var& v) const {
    const auto it = std::lower_bound(vars.begin(), vars.end(), v);
    return it != vars.end() && *it == v ? static_cast<int>(it - vars.begin()) : -1;
}

CondProbMatrix slice_conditional(const JointTable& joint, const MatrixDescriptor& d, const SpaceSpec& s,
                                 double smoothing, bool record_counts) {
    std::vector<int> row_dims, col_dims;
    for (const auto& v : d.rows) row_dims.push_back(cardinality(v, s));
    for (const auto& v : d.cols) col_dims.push_back(cardinality(v, s));
    const std::size_t n_rows = product(row_dims), n_cols = product(col_dims);

    auto pos = [&](const Var& v) {
        const int p = joint.position(v);
        if (p < 0) throw UsageError("joint table lacks " + to_string(v));
        return static_cast<std::size_t>(p);
    };
    std::vector<std::size_t> row_pos, col_pos;
    for (const auto& v : d.rows) row_pos.push_back(pos(v));
    for (const auto& v : d.cols) col_pos.push_back(pos(v));
    std::vector<std::pair<std::size_t, int>> fixed_pos, given_pos;
    for (const auto& [v, x] : d.row_fixed) fixed_pos.emplace_back(pos(v), x);
    for (const auto& [v, x] : d.given) given_pos.emplace_back(pos(v), x);

    Eigen::MatrixXd num = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    std::vector<double> den(n_cols, 0.0);
    for (std::size_t code = 0; code < joint.values.size(); ++code) {
        const double w = joint.values[code];
        if (w == 0.0) continue;
        const auto x = decode(code, joint.dims);
        bool match = true;
        for (const auto& [p, v] : given_pos) match &= x[p] == v;
        if (!match) continue;
        std::size_t c = 0;
        for (std::size_t k = 0; k < col_pos.size(); ++k) c = c * col_dims[k] + x[col_pos[k]];
        den[c] += w;
        for (const auto& [p, v] : fixed_pos) match &= x[p] == v;
        if (!match) continue;
        std::size_t r = 0;
        for (std::size_t k = 0; k < row_pos.size(); ++k) r = r * row_dims[k] + x[row_pos[k]];
        num(r, c) += w;
    }

    CondProbMatrix out;
    out.descriptor = d.label();
    out.values.resize(num.rows(), num.cols());
    for (std::size_t c = 0; c < n_cols; ++c) {
        const double denom = den[c] + smoothing * static_cast<double>(n_rows);
        for (std::size_t r = 0; r < n_rows; ++r)
            out.values(r, c) = denom > 0.0 ? (num(r, c) + smoothing) / denom : kNaN;
        out.counts.push_back(record_counts ? den[c] : 0.0);
    }
    for (std::size_t r = 0; r < n_rows; ++r) out.row_labels.push_back(decode(r, row_dims));
    for (std::size_t c = 0; c < n_cols; ++c) out.col_labels.push_back(decode(c, col_dims));
    if (n_rows == n_cols) out.condition_number = condition_number(out.values);
    return out;
}

SolveResult solve_weights(const CondProbMatrix& a, const Eigen::MatrixXd& b, const SolveOptions& opts) {
    const auto& m = a.values;
    if (m.rows() != b.rows()) throw UsageError("solve_weights: row mismatch for " + a.descriptor);
    if (m.hasNaN()) throw SingularMatrixError(a.descriptor, kInf);
    SolveResult out;
    if (opts.ridge > 0.0) {
        const Eigen::MatrixXd g =
            m.transpose() * m + opts.ridge * Eigen::MatrixXd::Identity(m.cols(), m.cols());
        out.x = g.ldlt().solve(m.transpose() * b);
        out.condition_number = condition_number(m);
        return out;
    }
    if (m.rows() < m.cols()) throw UsageError("solve_weights: " + a.descriptor + " has fewer rows than columns");
    out.condition_number = condition_number(m);
    if (!(out.condition_number <= opts.condition_cap)) throw SingularMatrixError(a.descriptor, out.condition_number);
    if (m.rows() == m.cols())
        out.x = m.partialPivLu().solve(b);
    else
        out.x = m.colPivHouseholderQr().solve(b);
    return out;
}

SolveResult solve_weights(const CondProbMatrix& a, const CondProbMatrix& b, const SolveOptions& opts) {
    return solve_weights(a, b.values, opts);
}

CondProbMatrix MatrixSource::matrix(const MatrixDescriptor& d) const {
    const auto vars = d.variables();
    for (const auto& v : vars) check_var(v, spaces(), kind(), horizon());
    return slice_conditional(joint(vars), d, spaces(), smoothing(), !is_population());
}

const JointTable& MatrixSource::joint(const std::vector<Var>& vars) const {
    std::vector<Var> key = vars;
    std::sort(key.begin(), key.end());
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return *it->second;
    }
    auto table = std::make_shared<JointTable>(build_joint(key));
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, table);
    return *it->second;
}

PopulationSource::PopulationSource(AnyModel model, BehaviorPolicy behavior)
    : model_(std::move(model)), behavior_(std::move(behavior)) {
    require_valid(validate_model(model_), "model");
    require_valid(validate_behavior(behavior_, spaces_of(model_)), "behavior policy");
    if (behavior_.kind != kind_of(model_)) throw UsageError("behavior policy kind does not match the model");
}

JointTable PopulationSource::build_joint(const std::vector<Var>& vars) const {
    const JointTable layout = empty_joint(vars, spaces());
    int T = -1;
    for (const auto& v : vars) T = std::max(T, v.t);
    if (const auto* m = std::get_if<TabularPOMDP>(&model_)) return pomdp_joint(*m, behavior_, layout, T);
    return dpomdp_joint(std::get<TabularDPOMDP>(model_), behavior_, layout, T);
}

EmpiricalSource::EmpiricalSource(std::vector<ObservableRecord> records, ModelKind kind, SpaceSpec spaces,
                                 EmpiricalOptions opts)
    : records_(std::move(records)), kind_(kind), spaces_(std::move(spaces)), opts_(opts) {
    if (records_.empty()) throw UsageError("empirical matrices need a non-empty dataset");
    horizon_ = records_.front().horizon();
    for (const auto& r : records_)
        if (r.horizon() != horizon_) throw UsageError("records do not share a horizon");
}

JointTable EmpiricalSource::build_joint(const std::vector<Var>& vars) const {
    for (const auto& v : vars)
        if (v.kind == VarKind::U) throw UsageError("empirical matrices cannot condition on hidden states");
    JointTable out = empty_joint(vars, spaces_);
    std::vector<int> shifts{0};
    if (opts_.pool_steps) {
        shifts.clear();
        int lo = -horizon_ - 1, hi = horizon_ + 1;
        for (int d = lo; d <= hi; ++d) {
            bool ok = true;
            for (const auto& v : vars) {
                const int t = v.t + d;
                ok &= t <= horizon_ && (v.kind == VarKind::Z ? t >= -1 : t >= 0);
            }
            if (ok) shifts.push_back(d);
        }
    }
    std::vector<std::size_t> strides(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) strides[i] = out.stride(i);
    for (int d : shifts) {
        for (const auto& r : records_) {
            std::size_t code = 0;
            for (std::size_t i = 0; i < vars.size(); ++i) code += record_value(r, {vars[i].kind, vars[i].t + d}) * strides[i];
            out.values[code] += 1.0;
        }
        out.total += static_cast<double>(records_.size());
    }
    return out;
}

CondProbMatrix empirical_cond_matrix(const std::vector<ObservableRecord>& data, ModelKind kind,
                                     const SpaceSpec& spaces, const MatrixDescriptor& d, double smoothing) {
    EmpiricalSource src(data, kind, spaces, EmpiricalOptions{smoothing, false});
    return src.matrix(d);
}

IndexSets IndexSets::full(const SpaceSpec& s, int horizon) {
    IndexSets out;
    out.rows.assign(horizon + 1, iota_vec(s.n_u));
    out.cols.assign(horizon + 1, iota_vec(s.n_u));
    out.worst_condition.assign(horizon + 1, kNaN);
    return out;
}

json IndexSets::to_json() const {
    json steps = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i)
        steps.push_back({{"step", i}, {"K", rows[i]}, {"J_prev", cols[i]}});
    return steps;
}

MatrixDescriptor decoupled_b_descriptor(int i, int a, int z) {
    return MatrixDescriptor{{O(i)}, {}, {Z(i - 1)}, {{Z(i), z}, {A(i), a}}};
}

namespace {

std::vector<std::vector<int>> combinations(int n, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> c(k);
    std::iota(c.begin(), c.end(), 0);
    if (k > n) return out;
    while (true) {
        out.push_back(c);
        int i = k - 1;
        while (i >= 0 && c[i] == n - k + i) --i;
        if (i < 0) break;
        ++c[i];
        for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
    }
    return out;
}

double worst_condition(const std::vector<CondProbMatrix>& ms, const std::vector<int>& k, const std::vector<int>& j) {
    double worst = 0.0;
    Eigen::MatrixXd sub(k.size(), j.size());
    for (const auto& m : ms) {
        for (std::size_t r = 0; r < k.size(); ++r)
            for (std::size_t c = 0; c < j.size(); ++c) sub(r, c) = m.values(k[r], j[c]);
        worst = std::max(worst, condition_number(sub));
        if (std::isinf(worst)) break;
    }
    return worst;
}

}  // namespace

IndexSets select_index_sets(const MatrixSource& src, int horizon, const IndexSelectionOptions& opts) {
    const auto& s = src.spaces();
    if (src.kind() != ModelKind::Decoupled) throw UsageError("index sets apply to Decoupled models");
    if (s.n_z < s.n_u || s.n_o < s.n_u) throw UsageError("index sets need n_z, n_o >= n_u");
    const auto ks = combinations(s.n_o, s.n_u);
    const auto js = combinations(s.n_z, s.n_u);
    const bool exhaustive = ks.size() * js.size() <= opts.exhaustive_limit;

    IndexSets out;
    for (int i = 0; i <= horizon; ++i) {
        std::vector<CondProbMatrix> contexts;
        for (int a = 0; a < s.n_a; ++a)
            for (int z = 0; z < s.n_z; ++z) {
                auto m = src.matrix(decoupled_b_descriptor(i, a, z));
                bool any = false;
                for (Eigen::Index c = 0; c < m.values.cols(); ++c) any |= !m.column_is_nan(static_cast<int>(c));
                if (any) contexts.push_back(std::move(m));
            }
        std::vector<int> best_k = ks.front(), best_j = js.front();
        double best = worst_condition(contexts, best_k, best_j);
        if (exhaustive) {
            for (const auto& k : ks)
                for (const auto& j : js) {
                    const double c = worst_condition(contexts, k, j);
                    if (c < best) best = c, best_k = k, best_j = j;
                }
        } else {
            // Swap descent: replace one member of K or J by an outside index.
            bool improved = true;
            while (improved) {
                improved = false;
                for (int side = 0; side < 2; ++side) {
                    auto& set = side == 0 ? best_k : best_j;
                    const int n = side == 0 ? s.n_o : s.n_z;
                    for (std::size_t p = 0; p < set.size(); ++p)
                        for (int x = 0; x < n; ++x) {
                            if (std::find(set.begin(), set.end(), x) != set.end()) continue;
                            auto trial = set;
                            trial[p] = x;
                            std::sort(trial.begin(), trial.end());
                            const double c = side == 0 ? worst_condition(contexts, trial, best_j)
                                                       : worst_condition(contexts, best_k, trial);
                            if (c < best) {
                                best = c;
                                set = trial;
                                improved = true;
                            }
                        }
                }
            }
        }
        if (!(best <= opts.condition_cap)) {
            std::ostringstream os;
            os << "P(O_" << i << "|z_" << i << ",a_" << i << ",Z_" << i - 1 << ") for every index set";
            throw SingularMatrixError(os.str(), best);
        }
        out.rows.push_back(best_k);
        out.cols.push_back(best_j);
        out.worst_condition.push_back(best);
    }
    return out;
}

const char* to_string(ContextMode m) {
    return m == ContextMode::FullHistory ? "full-history" : "last-observation";
}

ContextMode parse_context_mode(const std::string& s) {
    if (s == "full-history") return ContextMode::FullHistory;
    if (s == "last-observation") return ContextMode::LastObservation;
    throw UsageError("unknown context mode \"" + s + "\"");
}

BehaviorActionTable::BehaviorActionTable(const std::vector<ObservableRecord>& data, int n_a, ContextMode mode,
                                         int min_count)
    : n_a_(n_a), mode_(mode), min_count_(min_count) {
    for (const auto& r : data)
        for (int t = 0; t <= r.horizon(); ++t) {
            auto& row = counts_[key(r, t)];
            if (row.empty()) row.assign(n_a_, 0.0);
            row.at(r.a[t]) += 1.0;
        }
    for (const auto& [k, row] : counts_)
        if (std::accumulate(row.begin(), row.end(), 0.0) < min_count_) ++excluded_;
}

std::vector<int> BehaviorActionTable::key(const ObservableRecord& r, int t) const {
    std::vector<int> k{t};
    const bool has_o = !r.o.empty();
    const int first = mode_ == ContextMode::FullHistory ? 0 : t;
    for (int i = first; i <= t; ++i) {
        k.push_back(r.z[i]);
        if (has_o) k.push_back(r.o[i]);
        if (i < t) k.push_back(r.a[i]);
    }
    return k;
}

std::optional<double> BehaviorActionTable::prob(const ObservableRecord& r, int t, int a) const {
    const auto it = counts_.find(key(r, t));
    if (it == counts_.end()) return std::nullopt;
    const double total = std::accumulate(it->second.begin(), it->second.end(), 0.0);
    if (total < min_count_) return std::nullopt;
    return it->second.at(a) / total;
}

}  // namespace ope
