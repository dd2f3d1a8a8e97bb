#include "ope/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "ope/environments.hpp"
#include "ope/oracle.hpp"
#include "ope/simulate.hpp"

namespace ope {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kEstimatorNames{"theorem1", "theorem2", "prop1", "naive-is", "oracle-is"};
const std::vector<std::string> kEnvironmentNames{"medical",      "figure3",       "assumption1",
                                                 "random-pomdp", "random-dpomdp", "files"};

std::string resolve(const std::string& base, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::string& base_dir) {
    ExperimentConfig c;
    try {
        const json& env = j.at("environment");
        if (env.is_string()) {
            c.environment.name = env.get<std::string>();
        } else {
            c.environment.name = env.at("name").get<std::string>();
            c.environment.params = env.value("params", json::object());
            c.environment.model_path = resolve(base_dir, env.value("model", std::string{}));
            c.environment.behavior_path = resolve(base_dir, env.value("behavior", std::string{}));
            c.environment.eval_path = resolve(base_dir, env.value("eval_policy", std::string{}));
        }
        for (const auto& e : j.value("estimators", json::array())) {
            EstimatorSpec s;
            if (e.is_string()) {
                s.name = e.get<std::string>();
            } else {
                s.name = e.at("name").get<std::string>();
                s.mode = parse_context_mode(e.value("context", std::string("full-history")));
                s.min_count = e.value("min_count", 5);
                if (e.contains("clip") && !e["clip"].is_null()) s.clip = e["clip"].get<double>();
            }
            c.estimators.push_back(s);
        }
        c.alphas = j.value("alphas", std::vector<double>{0.0});
        c.gamma = j.value("gamma", c.gamma);
        c.horizon = j.value("horizon", c.horizon);
        c.n = j.value("n", c.n);
        c.seeds = j.value("seeds", c.seeds);
        c.output_dir = resolve(base_dir, j.value("output_dir", std::string(".")));
        c.smoothing = j.value("smoothing", 0.0);
        c.ridge = j.value("ridge", 0.0);
        c.pool_steps = j.value("pool_steps", false);
        c.dump_matrices = j.value("dump_matrices", false);
    } catch (const json::exception& e) {
        throw UsageError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    json est = json::array();
    for (const auto& e : estimators) {
        json x{{"name", e.name}, {"context", to_string(e.mode)}, {"min_count", e.min_count}};
        x["clip"] = e.clip ? json(*e.clip) : json(nullptr);
        est.push_back(x);
    }
    json env{{"name", environment.name}, {"params", environment.params}};
    if (!environment.model_path.empty()) env["model"] = environment.model_path;
    if (!environment.behavior_path.empty()) env["behavior"] = environment.behavior_path;
    if (!environment.eval_path.empty()) env["eval_policy"] = environment.eval_path;
    return json{{"environment", env}, {"estimators", est},         {"alphas", alphas},
                {"gamma", gamma},     {"horizon", horizon},        {"n", n},
                {"seeds", seeds},     {"output_dir", output_dir},  {"smoothing", smoothing},
                {"ridge", ridge},     {"pool_steps", pool_steps},  {"dump_matrices", dump_matrices}};
}

void ExperimentConfig::validate() const {
    if (std::find(kEnvironmentNames.begin(), kEnvironmentNames.end(), environment.name) == kEnvironmentNames.end())
        throw UsageError("experiment config: unknown environment '" + environment.name + "'");
    for (const auto& e : estimators)
        if (std::find(kEstimatorNames.begin(), kEstimatorNames.end(), e.name) == kEstimatorNames.end())
            throw UsageError("experiment config: unknown estimator '" + e.name + "'");
    if (alphas.empty()) throw UsageError("experiment config: empty alpha grid");
    for (double a : alphas)
        if (!(a >= 0.0 && a <= 1.0)) throw UsageError("experiment config: alpha values must lie in [0, 1]");
    if (seeds.empty()) throw UsageError("experiment config: no seeds");
    if (horizon < 0) throw UsageError("experiment config: negative horizon");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("experiment config: gamma must lie in (0, 1]");
    if (environment.name == "files") {
        for (const auto* p : {&environment.model_path, &environment.behavior_path, &environment.eval_path})
            if (p->empty() || !fs::exists(*p))
                throw UsageError("experiment config: missing file '" + *p + "'");
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return ExperimentConfig::from_json(read_json_file(path), fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Results

const char* ResultTable::header() {
    return "alpha,estimator,v_hat,oracle_v_pie,oracle_v_pib,norm_residual,cond_number,dropped,seed,n,error";
}

namespace {

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

void ResultTable::write_csv(std::ostream& out) const {
    out << header() << "\n";
    for (const auto& r : rows)
        out << fmt(r.alpha) << ',' << csv_field(r.estimator) << ',' << fmt(r.v_hat) << ',' << fmt(r.oracle_v_pie)
            << ',' << fmt(r.oracle_v_pib) << ',' << fmt(r.norm_residual) << ',' << fmt(r.cond_number) << ','
            << r.dropped << ',' << r.seed << ',' << r.n << ',' << csv_field(r.error) << "\n";
}

std::string ResultTable::csv() const {
    std::ostringstream s;
    write_csv(s);
    return s.str();
}

bool ResultTable::has_error(CellError kind) const {
    return std::any_of(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.error_kind == kind; });
}

// ---------------------------------------------------------------------------
// Environments and cells

Problem build_problem(const EnvironmentSpec& env, double alpha, double gamma, int horizon, std::uint64_t seed) {
    const json& p = env.params;
    if (env.name == "medical") {
        const auto cfg = MedicalConfig::from_seed(p.value("seed", seed), alpha, horizon, gamma);
        auto mp = medical_dpomdp(cfg);
        return {std::move(mp.model), std::move(mp.behavior), medical_eval_policy(cfg), horizon};
    }
    if (env.name == "figure3") {
        auto f = figure3_pomdp(alpha, gamma);
        return {std::move(f.model), std::move(f.behavior), std::move(f.evaluation), f.horizon};
    }
    if (env.name == "assumption1") {
        auto c = assumption1_env(seed);
        return {std::move(c.model), std::move(c.behavior), std::move(c.evaluation), c.horizon};
    }
    if (env.name == "random-pomdp" || env.name == "random-dpomdp") {
        RandomSizes s;
        s.n_u = p.value("n_u", s.n_u);
        s.n_z = p.value("n_z", s.n_z);
        s.n_a = p.value("n_a", s.n_a);
        s.n_o = p.value("n_o", s.n_o);
        s.horizon = horizon;
        s.gamma = gamma;
        const double cap = p.value("condition_cap", std::numeric_limits<double>::infinity());
        const int tries = p.value("max_tries", 1000);
        if (env.name == "random-pomdp") {
            auto r = random_pomdp(seed, s, cap, tries);
            return {std::move(r.model), std::move(r.behavior),
                    random_eval_policy(seed, ModelKind::Pomdp, s.n_z, s.n_a, horizon), horizon};
        }
        auto r = random_dpomdp(seed, s, cap, tries);
        return {std::move(r.model), std::move(r.behavior),
                random_eval_policy(seed, ModelKind::Decoupled, s.n_z * s.n_o, s.n_a, horizon), horizon};
    }
    if (env.name == "files") {
        AnyModel model = load_model(env.model_path);
        auto b = load_policy(env.behavior_path);
        auto e = load_policy(env.eval_path);
        if (!std::holds_alternative<BehaviorPolicy>(b)) throw UsageError(env.behavior_path + " is not a behavior policy");
        if (!std::holds_alternative<EvaluationPolicy>(e))
            throw UsageError(env.eval_path + " is not an evaluation policy");
        return {std::move(model), std::get<BehaviorPolicy>(std::move(b)), std::get<EvaluationPolicy>(std::move(e)),
                horizon};
    }
    throw UsageError("unknown environment '" + env.name + "'");
}

namespace {

struct CellContext {
    const ExperimentConfig& cfg;
    const Problem& problem;
    double alpha;
    std::uint64_t seed;
    std::size_t alpha_index;
    std::optional<Dataset> data;
    std::unique_ptr<MatrixSource> source;

    const MatrixSource& matrix_source() {
        if (source) return *source;
        if (cfg.n == 0) {
            source = std::make_unique<PopulationSource>(problem.model, problem.behavior);
        } else {
            EmpiricalOptions opts;
            opts.smoothing = cfg.smoothing;
            opts.pool_steps = cfg.pool_steps;
            source = std::make_unique<EmpiricalSource>(data->observable(), kind_of(problem.model),
                                                       spaces_of(problem.model), opts);
        }
        return *source;
    }
};

EstimateRecord run_estimator(CellContext& cx, const EstimatorSpec& e) {
    const auto& pr = cx.problem;
    const int L = pr.horizon;
    const double gamma = gamma_of(pr.model);
    const ModelKind kind = kind_of(pr.model);
    ChainOptions chain;
    chain.solve.ridge = cx.cfg.ridge;

    if (e.name == "theorem1") {
        if (kind == ModelKind::Pomdp) return theorem1_value(cx.matrix_source(), pr.evaluation, L, gamma, chain);
        if (cx.cfg.n > 0) throw UsageError("theorem1 on a Decoupled model is available in population mode only");
        const auto& dm = std::get<TabularDPOMDP>(pr.model);
        const PopulationSource src(embed_dpomdp_as_pomdp(dm), embed_behavior(pr.behavior, dm.spaces));
        return theorem1_value(src, embed_evaluation(pr.evaluation, dm.spaces), L, gamma, chain);
    }
    if (e.name == "theorem2") {
        if (kind != ModelKind::Decoupled) throw UsageError("theorem2 needs a Decoupled model");
        return theorem2_value(cx.matrix_source(), pr.evaluation, L, gamma, std::nullopt, chain);
    }
    if (e.name == "prop1") {
        if (kind != ModelKind::Pomdp) throw UsageError("prop1 needs a POMDP model");
        EstimateRecord r;
        r.method = "prop1";
        r.per_step.push_back(proposition1_value(cx.matrix_source(), pr.evaluation, L, chain.solve));
        r.v_hat = r.per_step.back().expectation();
        r.diag.norm_residual.push_back(std::abs(r.per_step.back().total() - 1.0));
        r.diag.path = "closed-form";
        return r;
    }
    if (e.name == "naive-is") {
        if (cx.cfg.n == 0) return naive_is_population(pr.model, pr.behavior, pr.evaluation, L, e.mode);
        ISOptions o;
        o.mode = e.mode;
        o.min_count = e.min_count;
        o.clip = e.clip;
        return naive_is_value(cx.data->observable(), spaces_of(pr.model), pr.evaluation, gamma, o);
    }
    if (e.name == "oracle-is") {
        if (cx.cfg.n == 0) throw UsageError("oracle IS requires sampled data");
        return oracle_is_value(*cx.data, spaces_of(pr.model), pr.evaluation, pr.behavior, gamma);
    }
    throw UsageError("unknown estimator '" + e.name + "'");
}

ResultRow error_row(double alpha, const std::string& name, std::uint64_t seed, std::size_t n, const std::string& msg,
                    CellError kind) {
    ResultRow r;
    r.alpha = alpha;
    r.estimator = name;
    r.v_hat = r.oracle_v_pie = r.oracle_v_pib = r.norm_residual = r.cond_number = kNaN;
    r.seed = seed;
    r.n = n;
    r.error = msg;
    r.error_kind = kind;
    return r;
}

std::vector<ResultRow> run_cell(const ExperimentConfig& cfg, std::size_t ai, std::uint64_t seed) {
    const double alpha = cfg.alphas[ai];
    std::vector<ResultRow> rows;
    std::vector<std::string> names;
    for (const auto& e : cfg.estimators) names.push_back(e.name);
    if (names.empty()) names.push_back("oracle");

    std::optional<Problem> problem;
    double v_pie = kNaN, v_pib = kNaN;
    try {
        problem = build_problem(cfg.environment, alpha, cfg.gamma, cfg.horizon, seed);
        v_pie = exact_value(problem->model, problem->evaluation, problem->horizon).v;
        v_pib = exact_value(problem->model, problem->behavior, problem->horizon).v;
    } catch (const std::exception& ex) {
        for (const auto& nm : names) rows.push_back(error_row(alpha, nm, seed, cfg.n, ex.what(), CellError::Other));
        return rows;
    }

    CellContext cx{cfg, *problem, alpha, seed, ai, std::nullopt, nullptr};
    if (cfg.n > 0) {
        const std::uint64_t data_seed = splitmix64(seed ^ splitmix64(ai + 1));
        cx.data = sample_dataset(problem->model, problem->behavior, problem->horizon, cfg.n, data_seed, 1);
    }
    if (cfg.estimators.empty()) {
        ResultRow r;
        r.alpha = alpha;
        r.estimator = "oracle";
        r.v_hat = v_pie;
        r.oracle_v_pie = v_pie;
        r.oracle_v_pib = v_pib;
        r.seed = seed;
        r.n = cfg.n;
        rows.push_back(r);
        return rows;
    }
    for (const auto& e : cfg.estimators) {
        try {
            const EstimateRecord est = run_estimator(cx, e);
            ResultRow r;
            r.alpha = alpha;
            r.estimator = e.name;
            r.v_hat = est.v_hat;
            r.oracle_v_pie = v_pie;
            r.oracle_v_pib = v_pib;
            r.norm_residual = est.diag.max_norm_residual();
            r.cond_number = est.diag.worst_condition;
            r.dropped = est.diag.dropped_records + est.diag.nan_skipped;
            r.seed = seed;
            r.n = cfg.n;
            rows.push_back(r);
        } catch (const SingularMatrixError& ex) {
            rows.push_back(error_row(alpha, e.name, seed, cfg.n, ex.what(), CellError::Numerical));
            rows.back().oracle_v_pie = v_pie;
            rows.back().oracle_v_pib = v_pib;
        } catch (const std::exception& ex) {
            rows.push_back(error_row(alpha, e.name, seed, cfg.n, ex.what(), CellError::Other));
            rows.back().oracle_v_pie = v_pie;
            rows.back().oracle_v_pib = v_pib;
        }
    }
    if (cfg.dump_matrices && (kind_of(problem->model) == ModelKind::Pomdp || !cfg.estimators.empty())) {
        try {
            char dir[64];
            std::snprintf(dir, sizeof dir, "alpha%zu_seed%llu", ai, static_cast<unsigned long long>(seed));
            dump_estimator_matrices(cx.matrix_source(), problem->horizon,
                                    (fs::path(cfg.output_dir) / "matrices" / dir).string());
        } catch (const std::exception&) {
            // Matrix dumps are diagnostic; estimator rows already carry the error.
        }
    }
    return rows;
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& cfg, int threads) {
    cfg.validate();
    const std::size_t n_cells = cfg.alphas.size() * cfg.seeds.size();
    std::vector<std::vector<ResultRow>> cells(n_cells);
    parallel_for(n_cells, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c)
            cells[c] = run_cell(cfg, c / cfg.seeds.size(), cfg.seeds[c % cfg.seeds.size()]);
    });
    ResultTable table;
    for (auto& c : cells)
        for (auto& r : c) table.rows.push_back(std::move(r));
    return table;
}

void write_experiment_outputs(const ExperimentConfig& cfg, const ResultTable& table) {
    fs::create_directories(cfg.output_dir);
    const auto csv_path = fs::path(cfg.output_dir) / "results.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw UsageError("cannot write " + csv_path.string());
    table.write_csv(csv);
    const auto svg_path = fs::path(cfg.output_dir) / "plot.svg";
    std::ofstream svg(svg_path);
    if (!svg) throw UsageError("cannot write " + svg_path.string());
    svg << experiment_svg(table);
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const std::vector<SvgSeries>& series, const std::string& x_label, const std::string& y_label,
                       const std::string& title) {
    constexpr double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 60;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
      << W << ' ' << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << xml_escape(title) << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(std::round(xv * 1000) / 1000)
          << "</text>\n"
          << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(std::round(yv * 1000) / 1000)
          << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(x_label) << "</text>\n"
      << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"13\" transform=\"rotate(-90 18 " << top + ph / 2 << ")\">" << xml_escape(y_label)
      << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % (sizeof colors / sizeof *colors)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            o << (first ? "" : " ") << px(s.x[i]) << ',' << py(s.y[i]);
            first = false;
        }
        o << "\"/>\n";
        const double ly = top + 14 + 18.0 * k;
        o << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string experiment_svg(const ResultTable& table) {
    // Mean over seeds per (series, alpha), ignoring failed rows.
    std::vector<std::string> order;
    std::map<std::string, std::map<double, std::pair<double, int>>> acc;
    auto add = [&](const std::string& name, double a, double v) {
        if (!acc.count(name)) order.push_back(name);
        auto& cell = acc[name][a];
        if (std::isfinite(v)) {
            cell.first += v;
            cell.second += 1;
        }
    };
    std::map<std::pair<double, std::uint64_t>, bool> oracle_seen;
    for (const auto& r : table.rows) {
        if (r.estimator != "oracle") add(r.estimator, r.alpha, r.v_hat);
        auto key = std::make_pair(r.alpha, r.seed);
        if (!oracle_seen[key]) {
            oracle_seen[key] = true;
            add("oracle v(pi_e)", r.alpha, r.oracle_v_pie);
            add("oracle v(pi_b)", r.alpha, r.oracle_v_pib);
        }
    }
    std::vector<SvgSeries> series;
    for (const auto& name : order) {
        SvgSeries s{name, {}, {}};
        for (const auto& [a, cell] : acc[name]) {
            s.x.push_back(a);
            s.y.push_back(cell.second ? cell.first / cell.second : kNaN);
        }
        series.push_back(std::move(s));
    }
    return render_svg(series, "alpha (confoundedness)", "cumulative reward", "Estimated value vs alpha");
}

// ---------------------------------------------------------------------------
// Fits and the IS counterexample

AffineFit fit_affine(const std::vector<GridPoint>& pts) {
    std::vector<double> as, gs;
    for (const auto& p : pts) {
        as.push_back(p.alpha);
        gs.push_back(p.gamma);
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return std::unique(v.begin(), v.end()) - v.begin();
    };
    if (distinct(as) < 2 || distinct(gs) < 2)
        throw UsageError("fit_affine: need at least two distinct alpha and gamma values");
    Eigen::MatrixXd x(pts.size(), 2);
    Eigen::VectorXd y(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        x(i, 0) = pts[i].alpha;
        x(i, 1) = pts[i].gamma;
        y(i) = pts[i].v;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < 2) throw UsageError("fit_affine: rank-deficient design");
    const Eigen::VectorXd c = qr.solve(y);
    AffineFit f{c(0), c(1), (x * c - y).cwiseAbs().maxCoeff()};
    return f;
}

Figure3Values figure3_values(double alpha, double gamma) {
    const auto p = figure3_pomdp(alpha, gamma);
    Figure3Values v;
    v.v_pib = exact_value(p.model, p.behavior, p.horizon).v;
    v.v_pie = exact_value(p.model, p.evaluation, p.horizon).v;
    v.naive_is =
        naive_is_population(p.model, p.behavior, p.evaluation, p.horizon, ContextMode::FullHistory).v_hat;
    return v;
}

Figure3Report figure3_report() {
    Figure3Report rep;
    rep.gammas = {0.3, 0.6, 0.9};
    std::vector<GridPoint> b, e, is;
    for (int k = 2; k <= 10; ++k) {
        const double a = k / 10.0;
        for (double g : rep.gammas) {
            const auto v = figure3_values(a, g);
            b.push_back({a, g, v.v_pib});
            e.push_back({a, g, v.v_pie});
            is.push_back({a, g, v.naive_is});
        }
    }
    rep.behavior = fit_affine(b);
    rep.evaluation = fit_affine(e);
    rep.naive_is = fit_affine(is);
    for (double g : rep.gammas) {
        auto f = [&](double a) {
            const auto v = figure3_values(a, g);
            return v.v_pib - v.naive_is;
        };
        double root = kNaN;
        double lo = 0.01, flo = f(lo);
        for (int k = 2; k <= 300 && std::isnan(root); ++k) {
            const double hi = 0.01 * k, fhi = f(hi);
            if ((flo <= 0.0) != (fhi <= 0.0)) {
                double a = lo, c = hi, fa = flo;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (a + c), fm = f(mid);
                    if ((fa <= 0.0) == (fm <= 0.0)) {
                        a = mid;
                        fa = fm;
                    } else {
                        c = mid;
                    }
                }
                root = 0.5 * (a + c);
            }
            lo = hi;
            flo = fhi;
        }
        rep.crossing.push_back(root);
    }
    return rep;
}

void dump_estimator_matrices(const MatrixSource& src, int L, const std::string& dir,
                             const std::optional<IndexSets>& sets) {
    fs::create_directories(dir);
    const auto& s = src.spaces();
    json out = json::array();
    auto add = [&](const MatrixDescriptor& d) { out.push_back(src.matrix(d).to_json()); };
    if (src.kind() == ModelKind::Pomdp) {
        add({{Z(0)}, {}, {}, {}});
        for (int t = 0; t <= L; ++t)
            for (int a = 0; a < s.n_a; ++a) {
                add({{Z(t)}, {}, {Z(t - 1)}, {{A(t), a}}});
                for (int z = 0; z < s.n_z; ++z) {
                    add({{R(t)}, {{Z(t), z}}, {Z(t - 1)}, {{A(t), a}}});
                    if (t >= 1) add({{Z(t)}, {{Z(t - 1), z}}, {Z(t - 2)}, {{A(t - 1), a}}});
                }
            }
    } else {
        add({{Z(0)}, {}, {}, {}});
        for (int t = 0; t <= L; ++t)
            for (int a = 0; a < s.n_a; ++a)
                for (int z = 0; z < s.n_z; ++z) add(decoupled_b_descriptor(t, a, z));
        IndexSelectionOptions opts;
        opts.condition_cap = std::numeric_limits<double>::infinity();
        const IndexSets chosen = sets ? *sets : select_index_sets(src, L, opts);
        write_json_file((fs::path(dir) / "index_sets.json").string(), chosen.to_json());
    }
    write_json_file((fs::path(dir) / "matrices.json").string(), out);
}

}  // namespace ope
