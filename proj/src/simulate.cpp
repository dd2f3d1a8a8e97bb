#include "ope/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

namespace ope {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

int Rng::categorical(const double* p, int n) {
    const double x = uniform();
    double acc = 0.0;
    int last = -1;
    for (int i = 0; i < n; ++i) {
        if (p[i] <= 0.0) continue;
        acc += p[i];
        last = i;
        if (x < acc) return i;
    }
    if (last < 0) throw Error("categorical draw from an all-zero distribution");
    return last;
}

double Rng::normal() {
    // Box-Muller; std::normal_distribution is not portable across standard libraries.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<ObservableRecord> Dataset::observable() const {
    return project_observable(*this);
}

std::uint64_t dataset_fingerprint(const AnyModel& model, const BehaviorPolicy& behavior, int horizon) {
    const std::string text = json{{"model", model_to_json(model)},
                                  {"policy", policy_to_json(behavior)},
                                  {"horizon", horizon}}
                                 .dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

ProbVector action_probs(const AnyPolicy& policy, int t, int hidden, const Trajectory& tr, int n_o) {
    if (std::holds_alternative<BehaviorPolicy>(policy)) return policy_action_dist(policy, t, HiddenContext{hidden}, n_o);
    ObservableHistory h{tr.z, tr.o, tr.a};
    return policy_action_dist(policy, t, h, n_o);
}

Trajectory sample_pomdp(const TabularPOMDP& m, const AnyPolicy& policy, int L, Rng& rng) {
    const auto& s = m.spaces;
    Trajectory tr;
    int u = rng.categorical(m.init);
    tr.z_pre = rng.categorical(&m.pre_observation[static_cast<std::size_t>(u) * s.n_z], s.n_z);
    for (int t = 0; t <= L; ++t) {
        tr.u.push_back(u);
        tr.z.push_back(rng.categorical(&m.observation[static_cast<std::size_t>(u) * s.n_z], s.n_z));
        const int a = rng.categorical(action_probs(policy, t, u, tr, 0));
        tr.a.push_back(a);
        tr.r.push_back(m.reward_index(u, a));
        if (t < L) u = rng.categorical(&m.transition[(static_cast<std::size_t>(a) * s.n_u + u) * s.n_u], s.n_u);
    }
    return tr;
}

Trajectory sample_dpomdp(const TabularDPOMDP& m, const AnyPolicy& policy, int L, Rng& rng) {
    const auto& s = m.spaces;
    const int nz = s.n_z, nu = s.n_u;
    Trajectory tr;
    const int first = rng.categorical(m.init);
    tr.z_pre = first / (nz * nu);
    int z = (first / nu) % nz;
    int u = first % nu;
    for (int t = 0; t <= L; ++t) {
        tr.u.push_back(u);
        tr.z.push_back(z);
        tr.o.push_back(rng.categorical(&m.independent_observation[static_cast<std::size_t>(u) * s.n_o], s.n_o));
        const int a = rng.categorical(action_probs(policy, t, u * nz + z, tr, s.n_o));
        tr.a.push_back(a);
        tr.r.push_back(m.reward_index(u, z, a));
        if (t < L) {
            const std::size_t base = ((static_cast<std::size_t>(a) * nz + z) * nu + u) * nz * nu;
            const int next = rng.categorical(&m.transition[base], nz * nu);
            z = next / nu;
            u = next % nu;
        }
    }
    return tr;
}

}  // namespace

Trajectory sample_trajectory(const AnyModel& model, const AnyPolicy& policy, int horizon, Rng& rng) {
    if (const auto* m = std::get_if<TabularPOMDP>(&model)) return sample_pomdp(*m, policy, horizon, rng);
    return sample_dpomdp(std::get<TabularDPOMDP>(model), policy, horizon, rng);
}

Dataset sample_dataset(const AnyModel& model, const BehaviorPolicy& behavior, int horizon, std::size_t n,
                       std::uint64_t seed, int threads) {
    if (n == 0) throw UsageError("sample_dataset: n must be positive");
    if (behavior.kind != kind_of(model)) throw UsageError("sample_dataset: policy kind does not match the model");
    if (horizon < 0 || horizon > behavior.horizon()) throw UsageError("sample_dataset: horizon exceeds the policy");
    require_valid(validate_model(model), "model");
    require_valid(validate_behavior(behavior, spaces_of(model)), "behavior policy");

    Dataset d;
    d.kind = kind_of(model);
    d.fingerprint = dataset_fingerprint(model, behavior, horizon);
    d.seed = seed;
    d.horizon = horizon;
    d.records.resize(n);
    const AnyPolicy policy = behavior;
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng = Rng::stream(seed, i);
            d.records[i] = sample_trajectory(model, policy, horizon, rng);
        }
    });
    return d;
}

std::vector<ObservableRecord> project_observable(const Dataset& d) {
    std::vector<ObservableRecord> out;
    out.reserve(d.records.size());
    for (const auto& tr : d.records) out.push_back(project(tr));
    return out;
}

void write_dataset(std::ostream& out, const Dataset& d) {
    char fp[17];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(d.fingerprint));
    out << json{{"fingerprint", fp},
                {"seed", d.seed},
                {"L", d.horizon},
                {"n", d.records.size()},
                {"kind", to_string(d.kind)}}
                .dump()
        << "\n";
    for (const auto& r : d.records)
        out << json{{"z_pre", r.z_pre}, {"u", r.u}, {"z", r.z}, {"o", r.o}, {"a", r.a}, {"r", r.r}}.dump() << "\n";
}

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw UsageError("dataset: missing header");
    Dataset d;
    try {
        const json h = json::parse(line);
        d.fingerprint = std::stoull(h.at("fingerprint").get<std::string>(), nullptr, 16);
        d.seed = h.at("seed").get<std::uint64_t>();
        d.horizon = h.at("L").get<int>();
        const std::string kind = h.at("kind").get<std::string>();
        d.kind = kind == "dpomdp" ? ModelKind::Decoupled : ModelKind::Pomdp;
        const auto n = h.at("n").get<std::size_t>();
        d.records.reserve(n);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            Trajectory tr;
            tr.z_pre = j.at("z_pre").get<int>();
            tr.u = j.value("u", std::vector<int>{});
            tr.z = j.at("z").get<std::vector<int>>();
            tr.o = j.value("o", std::vector<int>{});
            tr.a = j.at("a").get<std::vector<int>>();
            tr.r = j.at("r").get<std::vector<int>>();
            if (static_cast<int>(tr.a.size()) != d.horizon + 1 || tr.z.size() != tr.a.size() ||
                tr.r.size() != tr.a.size())
                throw UsageError("dataset: record length does not match the header horizon");
            d.records.push_back(std::move(tr));
        }
        if (d.records.size() != n) throw UsageError("dataset: record count does not match the header");
    } catch (const json::exception& e) {
        throw UsageError(std::string("dataset: ") + e.what());
    }
    return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    write_dataset(out, d);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    return read_dataset(in);
}

}  // namespace ope
