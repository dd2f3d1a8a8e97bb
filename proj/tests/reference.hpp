#pragma once

// Brute-force reference: enumerates every full trajectory of a small model
// with its probability. Used as an oracle independent of the library's
// recursions; only the model structs are shared.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "ope/model.hpp"

namespace ref {

struct Path {
    double p = 1.0;
    int z_pre = 0;
    std::vector<int> u, z, o, a, r;
};

/// Action distribution for step t given the path so far (u, z, o filled up to t).
using Policy = std::function<std::vector<double>(int t, const Path&)>;

inline std::vector<Path> enumerate(const ope::TabularPOMDP& m, const Policy& pi, int L) {
    const auto& s = m.spaces;
    std::vector<Path> out;
    std::function<void(Path&)> step = [&](Path& path) {
        const int t = static_cast<int>(path.a.size());
        const int u = path.u.back();
        for (int z = 0; z < s.n_z; ++z) {
            const double pz = m.obs(u, z);
            if (pz == 0.0) continue;
            path.z.push_back(z);
            const auto act = pi(t, path);
            for (int a = 0; a < s.n_a; ++a) {
                if (act[a] == 0.0) continue;
                const double keep = path.p;
                path.p *= pz * act[a];
                path.a.push_back(a);
                path.r.push_back(m.reward_index(u, a));
                if (t == L) {
                    out.push_back(path);
                } else {
                    for (int u2 = 0; u2 < s.n_u; ++u2) {
                        const double pu = m.trans(u, a, u2);
                        if (pu == 0.0) continue;
                        const double keep2 = path.p;
                        path.p *= pu;
                        path.u.push_back(u2);
                        step(path);
                        path.u.pop_back();
                        path.p = keep2;
                    }
                }
                path.r.pop_back();
                path.a.pop_back();
                path.p = keep;
            }
            path.z.pop_back();
        }
    };
    for (int u0 = 0; u0 < s.n_u; ++u0)
        for (int zp = 0; zp < s.n_z; ++zp) {
            Path path;
            path.p = m.init[u0] * m.pre_obs(u0, zp);
            if (path.p == 0.0) continue;
            path.z_pre = zp;
            path.u.push_back(u0);
            step(path);
        }
    return out;
}

inline std::vector<Path> enumerate(const ope::TabularDPOMDP& m, const Policy& pi, int L) {
    const auto& s = m.spaces;
    std::vector<Path> out;
    std::function<void(Path&)> step = [&](Path& path) {
        const int t = static_cast<int>(path.a.size());
        const int u = path.u.back(), z = path.z.back();
        for (int o = 0; o < s.n_o; ++o) {
            const double po = m.obs(u, o);
            if (po == 0.0) continue;
            path.o.push_back(o);
            const auto act = pi(t, path);
            for (int a = 0; a < s.n_a; ++a) {
                if (act[a] == 0.0) continue;
                const double keep = path.p;
                path.p *= po * act[a];
                path.a.push_back(a);
                path.r.push_back(m.reward_index(u, z, a));
                if (t == L) {
                    out.push_back(path);
                } else {
                    for (int z2 = 0; z2 < s.n_z; ++z2)
                        for (int u2 = 0; u2 < s.n_u; ++u2) {
                            const double pt = m.trans(z, u, a, z2, u2);
                            if (pt == 0.0) continue;
                            const double keep2 = path.p;
                            path.p *= pt;
                            path.u.push_back(u2);
                            path.z.push_back(z2);
                            step(path);
                            path.z.pop_back();
                            path.u.pop_back();
                            path.p = keep2;
                        }
                }
                path.r.pop_back();
                path.a.pop_back();
                path.p = keep;
            }
            path.o.pop_back();
        }
    };
    for (int zp = 0; zp < s.n_z; ++zp)
        for (int z0 = 0; z0 < s.n_z; ++z0)
            for (int u0 = 0; u0 < s.n_u; ++u0) {
                Path path;
                path.p = m.init_prob(zp, z0, u0);
                if (path.p == 0.0) continue;
                path.z_pre = zp;
                path.u.push_back(u0);
                path.z.push_back(z0);
                step(path);
            }
    return out;
}

/// Behavior policy as a reference policy (context u, or u * n_z + z).
inline Policy behavior(const ope::BehaviorPolicy& b, const ope::SpaceSpec& s) {
    return [b, s](int t, const Path& p) {
        const int u = p.u.back();
        const int ctx = b.kind == ope::ModelKind::Pomdp ? u : u * s.n_z + p.z.back();
        std::vector<double> out(b.n_a);
        for (int a = 0; a < b.n_a; ++a) out[a] = b.prob(t, ctx, a);
        return out;
    };
}

/// Memoryless evaluation policy (context z, or z * n_o + o).
inline Policy evaluation(const ope::EvaluationPolicy& e, const ope::SpaceSpec& s) {
    return [e, s](int t, const Path& p) {
        const int ctx = e.kind() == ope::ModelKind::Pomdp ? p.z.back() : p.z.back() * s.n_o + p.o.back();
        std::vector<double> out(e.n_a());
        for (int a = 0; a < e.n_a(); ++a) out[a] = e.prob(t, ctx, a);
        return out;
    };
}

/// Follows `first` before step L and `last` at step L.
inline Policy switch_at(Policy first, Policy last, int L) {
    return [=](int t, const Path& p) { return t < L ? first(t, p) : last(t, p); };
}

inline double value(const std::vector<Path>& paths, const ope::SpaceSpec& s, double gamma) {
    double v = 0.0;
    for (const auto& p : paths) {
        double g = 1.0, ret = 0.0;
        for (int r : p.r) {
            ret += g * s.reward_values[r];
            g *= gamma;
        }
        v += p.p * ret;
    }
    return v;
}

inline std::vector<double> reward_dist(const std::vector<Path>& paths, int n_r, int t) {
    std::vector<double> d(n_r, 0.0);
    for (const auto& p : paths) d[p.r[t]] += p.p;
    return d;
}

/// Probability of an event over the enumerated paths.
inline double prob(const std::vector<Path>& paths, const std::function<bool(const Path&)>& event) {
    double total = 0.0;
    for (const auto& p : paths)
        if (event(p)) total += p.p;
    return total;
}

}  // namespace ref
