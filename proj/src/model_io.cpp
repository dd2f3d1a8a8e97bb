#include "ope/model_io.hpp"

#include <fstream>
#include <sstream>

namespace ope {

using nlohmann::json;

namespace {

template <class T>
json nest(const T* data, const std::vector<int>& shape, std::size_t dim = 0) {
    json out = json::array();
    if (dim + 1 == shape.size()) {
        for (int i = 0; i < shape[dim]; ++i) out.push_back(data[i]);
        return out;
    }
    std::size_t stride = 1;
    for (std::size_t d = dim + 1; d < shape.size(); ++d) stride *= shape[d];
    for (int i = 0; i < shape[dim]; ++i) out.push_back(nest(data + i * stride, shape, dim + 1));
    return out;
}

template <class T>
void flatten_into(const json& j, const std::vector<int>& shape, std::size_t dim, std::vector<T>& out,
                  const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != shape[dim]) {
        std::ostringstream os;
        os << what << ": expected an array of length " << shape[dim] << " at depth " << dim;
        throw InvalidModelError(os.str());
    }
    for (const auto& e : j) {
        if (dim + 1 == shape.size()) {
            if (!e.is_number()) throw InvalidModelError(what + ": expected a number");
            out.push_back(e.get<T>());
        } else {
            flatten_into(e, shape, dim + 1, out, what);
        }
    }
}

template <class T>
std::vector<T> flatten(const json& j, const std::string& key, const std::vector<int>& shape) {
    if (!j.contains(key)) throw InvalidModelError("missing field \"" + key + "\"");
    std::vector<T> out;
    flatten_into(j.at(key), shape, 0, out, key);
    return out;
}

SpaceSpec spaces_from_json(const json& j, ModelKind kind) {
    if (!j.contains("spaces")) throw InvalidModelError("missing field \"spaces\"");
    const auto& s = j.at("spaces");
    SpaceSpec out;
    out.n_u = s.at("n_u").get<int>();
    out.n_z = s.at("n_z").get<int>();
    out.n_a = s.at("n_a").get<int>();
    if (kind == ModelKind::Decoupled) out.n_o = s.at("n_o").get<int>();
    out.reward_values = s.at("reward_values").get<std::vector<double>>();
    require_valid(validate_spaces(out, kind), "spaces");
    return out;
}

json spaces_to_json(const SpaceSpec& s, ModelKind kind) {
    json j = {{"n_u", s.n_u}, {"n_z", s.n_z}, {"n_a", s.n_a}, {"reward_values", s.reward_values}};
    if (kind == ModelKind::Decoupled) j["n_o"] = s.n_o;
    return j;
}

json tables_to_json(const std::vector<std::vector<double>>& tables, int n_context, int n_a) {
    json out = json::array();
    for (const auto& t : tables) out.push_back(nest(t.data(), {n_context, n_a}));
    return out;
}

std::vector<std::vector<double>> tables_from_json(const json& j, int& n_context, int& n_a) {
    if (!j.contains("tables") || !j.at("tables").is_array() || j.at("tables").empty())
        throw InvalidModelError("policy: \"tables\" must be a non-empty array");
    const auto& t0 = j.at("tables").at(0);
    if (!t0.is_array() || t0.empty() || !t0.at(0).is_array())
        throw InvalidModelError("policy: tables must be indexed [t][context][a]");
    n_context = static_cast<int>(t0.size());
    n_a = static_cast<int>(t0.at(0).size());
    std::vector<std::vector<double>> out;
    for (const auto& t : j.at("tables")) {
        std::vector<double> flat;
        flatten_into(t, {n_context, n_a}, 0, flat, "tables");
        out.push_back(std::move(flat));
    }
    return out;
}

ModelKind parse_kind(const std::string& s) {
    if (s == "pomdp") return ModelKind::Pomdp;
    if (s == "dpomdp") return ModelKind::Decoupled;
    throw InvalidModelError("unknown model kind \"" + s + "\"");
}

}  // namespace

ModelKind kind_of(const AnyModel& m) {
    return std::holds_alternative<TabularPOMDP>(m) ? ModelKind::Pomdp : ModelKind::Decoupled;
}

const SpaceSpec& spaces_of(const AnyModel& m) {
    return std::visit([](const auto& x) -> const SpaceSpec& { return x.spaces; }, m);
}

double gamma_of(const AnyModel& m) {
    return std::visit([](const auto& x) { return x.gamma; }, m);
}

ValidationReport validate_model(const AnyModel& m) {
    if (const auto* p = std::get_if<TabularPOMDP>(&m)) return validate_pomdp(*p);
    return validate_dpomdp(std::get<TabularDPOMDP>(m));
}

json model_to_json(const AnyModel& any) {
    if (const auto* p = std::get_if<TabularPOMDP>(&any)) {
        const auto& m = *p;
        const auto& s = m.spaces;
        return json{{"kind", "pomdp"},
                    {"spaces", spaces_to_json(s, ModelKind::Pomdp)},
                    {"transition", nest(m.transition.data(), {s.n_a, s.n_u, s.n_u})},
                    {"observation", nest(m.observation.data(), {s.n_u, s.n_z})},
                    {"pre_observation", nest(m.pre_observation.data(), {s.n_u, s.n_z})},
                    {"reward", nest(m.reward.data(), {s.n_u, s.n_a})},
                    {"gamma", m.gamma},
                    {"init", m.init}};
    }
    const auto& m = std::get<TabularDPOMDP>(any);
    const auto& s = m.spaces;
    return json{{"kind", "dpomdp"},
                {"spaces", spaces_to_json(s, ModelKind::Decoupled)},
                {"transition", nest(m.transition.data(), {s.n_a, s.n_z, s.n_u, s.n_z, s.n_u})},
                {"independent_observation", nest(m.independent_observation.data(), {s.n_u, s.n_o})},
                {"reward", nest(m.reward.data(), {s.n_u, s.n_z, s.n_a})},
                {"gamma", m.gamma},
                {"init", nest(m.init.data(), {s.n_z, s.n_z, s.n_u})}};
}

AnyModel model_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw InvalidModelError("model document needs a \"kind\" field");
    const ModelKind kind = parse_kind(j.at("kind").get<std::string>());
    const SpaceSpec s = spaces_from_json(j, kind);
    if (!j.contains("gamma") || !j.at("gamma").is_number()) throw InvalidModelError("missing numeric \"gamma\"");
    if (kind == ModelKind::Pomdp) {
        TabularPOMDP m;
        m.spaces = s;
        m.transition = flatten<double>(j, "transition", {s.n_a, s.n_u, s.n_u});
        m.observation = flatten<double>(j, "observation", {s.n_u, s.n_z});
        m.pre_observation =
            j.contains("pre_observation") ? flatten<double>(j, "pre_observation", {s.n_u, s.n_z}) : m.observation;
        m.reward = flatten<int>(j, "reward", {s.n_u, s.n_a});
        m.gamma = j.at("gamma").get<double>();
        m.init = flatten<double>(j, "init", {s.n_u});
        return m;
    }
    TabularDPOMDP m;
    m.spaces = s;
    m.transition = flatten<double>(j, "transition", {s.n_a, s.n_z, s.n_u, s.n_z, s.n_u});
    m.independent_observation = flatten<double>(j, "independent_observation", {s.n_u, s.n_o});
    m.reward = flatten<int>(j, "reward", {s.n_u, s.n_z, s.n_a});
    m.gamma = j.at("gamma").get<double>();
    m.init = flatten<double>(j, "init", {s.n_z, s.n_z, s.n_u});
    return m;
}

json policy_to_json(const BehaviorPolicy& p) {
    return json{{"kind", "behavior"},
                {"model_kind", to_string(p.kind)},
                {"tables", tables_to_json(p.tables, p.n_context, p.n_a)}};
}

json policy_to_json(const EvaluationPolicy& p) {
    if (!p.is_memoryless()) throw UsageError("only memoryless evaluation policies can be serialized");
    return json{{"kind", "eval_memoryless"},
                {"model_kind", to_string(p.kind())},
                {"tables", tables_to_json(p.tables(), p.n_context(), p.n_a())}};
}

StoredPolicy policy_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw InvalidModelError("policy document needs a \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    const ModelKind mk = parse_kind(j.value("model_kind", std::string("pomdp")));
    int n_context = 0, n_a = 0;
    auto tables = tables_from_json(j, n_context, n_a);
    if (kind == "behavior") {
        BehaviorPolicy p;
        p.kind = mk;
        p.n_context = n_context;
        p.n_a = n_a;
        p.tables = std::move(tables);
        return p;
    }
    if (kind == "eval_memoryless") return EvaluationPolicy::memoryless(mk, n_context, n_a, std::move(tables));
    throw InvalidModelError("unknown policy kind \"" + kind + "\"");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidModelError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    out << j.dump(2) << "\n";
}

AnyModel load_model(const std::string& path) {
    try {
        return model_from_json(read_json_file(path));
    } catch (const json::exception& e) {
        throw InvalidModelError(path + ": " + e.what());
    }
}

StoredPolicy load_policy(const std::string& path) {
    try {
        return policy_from_json(read_json_file(path));
    } catch (const json::exception& e) {
        throw InvalidModelError(path + ": " + e.what());
    }
}

}  // namespace ope
