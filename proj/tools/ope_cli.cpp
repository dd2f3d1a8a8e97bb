// Command-line front end for the OPE library.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ope/environments.hpp"
#include "ope/estimators.hpp"
#include "ope/harness.hpp"
#include "ope/model_io.hpp"
#include "ope/oracle.hpp"
#include "ope/simulate.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kValidation = 1, kUsage = 2, kNumerical = 3 };

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    bool strict = false;
    bool verbose = false;
};

void log(const Globals& g, const std::string& msg) {
    if (g.verbose) std::cerr << msg << "\n";
}

json dist_json(const std::vector<ope::RewardDistribution>& per_step) {
    json out = json::array();
    for (const auto& d : per_step) out.push_back({{"t", d.t}, {"values", d.values}, {"prob", d.prob}});
    return out;
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

int cmd_validate(const Globals& g, const std::vector<std::string>& files) {
    bool ok = true;
    for (const auto& f : files) {
        const json j = ope::read_json_file(f);
        const std::string kind = j.value("kind", std::string{});
        if (kind == "behavior" || kind == "eval_memoryless") {
            ope::policy_from_json(j);
            std::cout << f << ": ok (policy)\n";
            continue;
        }
        const ope::AnyModel m = ope::model_from_json(j);
        const auto report = ope::validate_model(m);
        if (report.ok()) {
            std::cout << f << ": ok\n";
        } else {
            ok = false;
            std::cout << f << ": invalid\n" << report.to_string() << "\n";
        }
    }
    log(g, ok ? "all inputs valid" : "validation reported violations");
    return ok || !g.strict ? kOk : kValidation;
}

struct SimulateArgs {
    std::string model, policy, out;
    int horizon = 0;
    std::size_t n = 0;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
    const ope::AnyModel m = ope::load_model(a.model);
    const auto p = ope::load_policy(a.policy);
    if (!std::holds_alternative<ope::BehaviorPolicy>(p)) throw ope::UsageError(a.policy + " is not a behavior policy");
    const auto d = ope::sample_dataset(m, std::get<ope::BehaviorPolicy>(p), a.horizon, a.n, g.seed, g.threads);
    ope::save_dataset(a.out, d);
    log(g, "wrote " + std::to_string(d.records.size()) + " trajectories to " + a.out);
    return kOk;
}

struct EstimateArgs {
    std::string method, data, eval_policy, model, behavior, dump_dir, context = "full-history";
    bool population = false;
    int horizon = -1;
    double ridge = 0.0, smoothing = 0.0;
    int min_count = 5;
};

int cmd_estimate(const Globals& g, const EstimateArgs& a) {
    if (a.model.empty()) throw ope::UsageError("estimate: --model is required");
    const ope::AnyModel model = ope::load_model(a.model);
    const auto& spaces = ope::spaces_of(model);
    const double gamma = ope::gamma_of(model);
    const auto ep = ope::load_policy(a.eval_policy);
    if (!std::holds_alternative<ope::EvaluationPolicy>(ep))
        throw ope::UsageError(a.eval_policy + " is not an evaluation policy");
    const auto& eval = std::get<ope::EvaluationPolicy>(ep);

    std::optional<ope::BehaviorPolicy> behavior;
    if (!a.behavior.empty()) {
        auto bp = ope::load_policy(a.behavior);
        if (!std::holds_alternative<ope::BehaviorPolicy>(bp))
            throw ope::UsageError(a.behavior + " is not a behavior policy");
        behavior = std::get<ope::BehaviorPolicy>(std::move(bp));
    }
    std::optional<ope::Dataset> data;
    if (a.population) {
        if (!behavior) throw ope::UsageError("estimate --population needs --policy (the behavior policy)");
    } else {
        if (a.data.empty()) throw ope::UsageError("estimate: --data is required unless --population is given");
        data = ope::load_dataset(a.data);
    }
    const int L = a.horizon >= 0 ? a.horizon : (data ? data->horizon : behavior->horizon());

    std::unique_ptr<ope::MatrixSource> src;
    auto source = [&]() -> const ope::MatrixSource& {
        if (!src) {
            if (a.population) {
                src = std::make_unique<ope::PopulationSource>(model, *behavior);
            } else {
                ope::EmpiricalOptions o;
                o.smoothing = a.smoothing;
                src = std::make_unique<ope::EmpiricalSource>(data->observable(), data->kind, spaces, o);
            }
        }
        return *src;
    };

    ope::ChainOptions chain;
    chain.solve.ridge = a.ridge;
    ope::EstimateRecord r;
    if (a.method == "theorem1") {
        r = ope::theorem1_value(source(), eval, L, gamma, chain);
    } else if (a.method == "theorem2") {
        r = ope::theorem2_value(source(), eval, L, gamma, std::nullopt, chain);
    } else if (a.method == "prop1") {
        r.method = "prop1";
        r.per_step.push_back(ope::proposition1_value(source(), eval, L, chain.solve));
        r.v_hat = r.per_step.back().expectation();
        r.diag.path = "closed-form";
    } else if (a.method == "naive-is") {
        const auto mode = ope::parse_context_mode(a.context);
        if (a.population) {
            r = ope::naive_is_population(model, *behavior, eval, L, mode);
        } else {
            ope::ISOptions o;
            o.mode = mode;
            o.min_count = a.min_count;
            r = ope::naive_is_value(data->observable(), spaces, eval, gamma, o);
        }
    } else if (a.method == "oracle-is") {
        if (a.population) throw ope::UsageError("oracle IS requires sampled data");
        if (!behavior) throw ope::UsageError("oracle IS needs --policy (the behavior policy)");
        r = ope::oracle_is_value(*data, spaces, eval, *behavior, gamma);
    } else {
        throw ope::UsageError("unknown method '" + a.method + "'");
    }
    if (!a.dump_dir.empty()) {
        ope::dump_estimator_matrices(source(), L, a.dump_dir, r.diag.index_sets);
        log(g, "matrices written to " + a.dump_dir);
    }
    const json out{{"method", r.method},
                   {"v_hat", number(r.v_hat)},
                   {"per_step", dist_json(r.per_step)},
                   {"diagnostics", r.diag.to_json()}};
    std::cout << out.dump(2) << "\n";
    return kOk;
}

int cmd_experiment(const Globals& g, const std::string& config) {
    const auto cfg = ope::load_experiment_config(config);
    const auto table = ope::run_experiment(cfg, g.threads);
    ope::write_experiment_outputs(cfg, table);
    std::cout << "wrote " << (fs::path(cfg.output_dir) / "results.csv").string() << " (" << table.rows.size()
              << " rows) and plot.svg\n";
    for (const auto& r : table.rows)
        if (!r.error.empty()) std::cerr << "alpha=" << r.alpha << " " << r.estimator << ": " << r.error << "\n";
    if (g.strict && table.has_error(ope::CellError::Numerical)) return kNumerical;
    if (g.strict && table.has_error(ope::CellError::Other)) return kValidation;
    return kOk;
}

int cmd_figure3(const Globals& g, double alpha, double gamma, bool fits) {
    const auto v = ope::figure3_values(alpha, gamma);
    std::printf("alpha=%g gamma=%g\n  v(pi_b)   = %.6f\n  v(pi_e)   = %.6f\n  naive IS  = %.6f\n", alpha, gamma, v.v_pib,
                v.v_pie, v.naive_is);
    if (fits) {
        log(g, "fitting over alpha in {0.2..1.0} x gamma in {0.3, 0.6, 0.9}");
        const auto rep = ope::figure3_report();
        auto line = [](const char* name, const ope::AffineFit& f) {
            std::printf("  %-9s ~ %.4f alpha + %.4f gamma   (max residual %.4f)\n", name, f.c_alpha, f.c_gamma,
                        f.max_residual);
        };
        std::printf("fits:\n");
        line("v(pi_b)", rep.behavior);
        line("v(pi_e)", rep.evaluation);
        line("naive IS", rep.naive_is);
        for (std::size_t k = 0; k < rep.gammas.size(); ++k)
            std::printf("  v(pi_b) - IS changes sign at alpha = %.4f for gamma = %.1f (0.8 gamma = %.4f)\n",
                        rep.crossing[k], rep.gammas[k], 0.8 * rep.gammas[k]);
    }
    return kOk;
}

struct GenerateArgs {
    std::string env = "medical", out_dir = ".";
    double alpha = 0.5, gamma = 0.9;
    int horizon = 4;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
    ope::EnvironmentSpec spec;
    spec.name = a.env;
    const auto p = ope::build_problem(spec, a.alpha, a.gamma, a.horizon, g.seed);
    fs::create_directories(a.out_dir);
    ope::write_json_file((fs::path(a.out_dir) / "model.json").string(), ope::model_to_json(p.model));
    ope::write_json_file((fs::path(a.out_dir) / "behavior.json").string(), ope::policy_to_json(p.behavior));
    if (p.evaluation.is_memoryless())
        ope::write_json_file((fs::path(a.out_dir) / "eval_policy.json").string(), ope::policy_to_json(p.evaluation));
    log(g, "wrote model.json, behavior.json and eval_policy.json to " + a.out_dir);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Off-policy evaluation under unobserved confounding"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
    app.add_flag("--strict", g.strict, "Fail on validation or numerical problems");
    app.add_flag("--verbose", g.verbose, "Progress messages on stderr");

    std::vector<std::string> validate_files;
    auto* validate = app.add_subcommand("validate", "Validate model or policy JSON files");
    validate->add_option("files", validate_files, "Model or policy files")->required();

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Sample trajectories under a behavior policy");
    simulate->add_option("--model", sim.model)->required();
    simulate->add_option("--policy", sim.policy, "Behavior policy")->required();
    simulate->add_option("-L,--horizon", sim.horizon)->required();
    simulate->add_option("-n", sim.n)->required();
    simulate->add_option("-o,--output", sim.out)->required();

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Estimate v(pi_e) from data or population matrices");
    estimate->add_option("--method", est.method)
        ->required()
        ->check(CLI::IsMember({"theorem1", "theorem2", "prop1", "naive-is", "oracle-is"}));
    estimate->add_option("--data", est.data, "Dataset (NDJSON)");
    estimate->add_option("--eval-policy", est.eval_policy)->required();
    estimate->add_option("--model", est.model, "Model file (spaces and rewards; population matrices)");
    estimate->add_option("--policy", est.behavior, "Behavior policy (population mode, oracle IS)");
    estimate->add_flag("--population", est.population, "Use exact population matrices");
    estimate->add_option("--dump-matrices", est.dump_dir, "Directory for matrix dumps");
    estimate->add_option("-L,--horizon", est.horizon, "Horizon (defaults to the data or policy horizon)");
    estimate->add_option("--context", est.context, "naive IS context: full-history or last-observation");
    estimate->add_option("--min-count", est.min_count, "naive IS minimum context count");
    estimate->add_option("--ridge", est.ridge);
    estimate->add_option("--smoothing", est.smoothing);

    std::string config;
    auto* experiment = app.add_subcommand("experiment", "Run an alpha sweep from a JSON config");
    experiment->add_option("--config", config)->required();

    double f3_alpha = 1.0, f3_gamma = 0.9;
    bool f3_fits = false;
    auto* fig3 = app.add_subcommand("figure3", "Values of the IS counterexample");
    fig3->add_option("--alpha", f3_alpha)->capture_default_str();
    fig3->add_option("--gamma", f3_gamma)->capture_default_str();
    fig3->add_flag("--fits", f3_fits, "Also print the affine fits over the standard grid");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Write a built-in environment as JSON files");
    generate->add_option("--env", gen.env)
        ->check(CLI::IsMember({"medical", "figure3", "assumption1", "random-pomdp", "random-dpomdp"}))
        ->capture_default_str();
    generate->add_option("--alpha", gen.alpha)->capture_default_str();
    generate->add_option("--gamma", gen.gamma)->capture_default_str();
    generate->add_option("-L,--horizon", gen.horizon)->capture_default_str();
    generate->add_option("-o,--output-dir", gen.out_dir)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*validate) return cmd_validate(g, validate_files);
        if (*simulate) return cmd_simulate(g, sim);
        if (*estimate) return cmd_estimate(g, est);
        if (*experiment) return cmd_experiment(g, config);
        if (*fig3) return cmd_figure3(g, f3_alpha, f3_gamma, f3_fits);
        if (*generate) return cmd_generate(g, gen);
    } catch (const ope::SingularMatrixError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return g.strict ? kNumerical : kOk;
    } catch (const ope::InvalidModelError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kValidation;
    } catch (const ope::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kUsage;
}
