#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ope/model.hpp"
#include "ope/model_io.hpp"

namespace ope {

std::uint64_t splitmix64(std::uint64_t x);

/// Random stream with portable uniform, categorical and normal draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream for item `index` of a run seeded with `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t index);

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    int categorical(const double* p, int n);
    int categorical(const std::vector<double>& p) { return categorical(p.data(), static_cast<int>(p.size())); }
    double normal();

private:
    std::mt19937_64 engine_;
};

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads` threads.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    const std::size_t k = std::max<std::size_t>(1, std::min<std::size_t>(threads < 1 ? 1 : threads, n));
    if (k == 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t lo = n * c / k, hi = n * (c + 1) / k;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

struct Dataset {
    ModelKind kind = ModelKind::Pomdp;
    std::uint64_t fingerprint = 0;
    std::uint64_t seed = 0;
    int horizon = 0;
    std::vector<Trajectory> records;

    std::vector<ObservableRecord> observable() const;
};

/// FNV-1a hash of the serialized model, behavior policy and horizon.
std::uint64_t dataset_fingerprint(const AnyModel& model, const BehaviorPolicy& behavior, int horizon);

/// One trajectory under a behavior (hidden-state) or evaluation (history) policy.
Trajectory sample_trajectory(const AnyModel& model, const AnyPolicy& policy, int horizon, Rng& rng);

Dataset sample_dataset(const AnyModel& model, const BehaviorPolicy& behavior, int horizon, std::size_t n,
                       std::uint64_t seed, int threads = 1);

std::vector<ObservableRecord> project_observable(const Dataset& d);

/// Newline-delimited JSON: a header line then one record per line.
void write_dataset(std::ostream& out, const Dataset& d);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace ope
