// Sensor-side power scheduler, the lossy low-power link, and energy
// accounting.
#pragma once

#include "stats.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pskf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed of trial `trial` under `master_seed`: mix64(mix64(master) ^ mix64(trial + 1)).
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t trial) {
    return mix64(mix64(master_seed) ^ mix64(trial + 1));
}

struct SchedulerConfig {
    std::vector<double> eta;
    double beta = 0.5;
    double delta_high = 1.0;
    double delta_low = 0.1;

    void check() const {
        for (std::size_t i = 0; i < eta.size(); ++i)
            if (!(eta[i] >= 0.0) || !std::isfinite(eta[i]))
                throw std::invalid_argument("scheduler: eta[" + std::to_string(i) + "] must be finite and >= 0");
        if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("scheduler: beta must lie in (0, 1)");
        if (!(delta_low > 0.0 && delta_low < delta_high))
            throw std::invalid_argument("scheduler: need 0 < delta_low < delta_high");
    }

    std::vector<ComponentStats> stats() const {
        std::vector<ComponentStats> out;
        out.reserve(eta.size());
        for (double e : eta) out.push_back(component_stats(e, beta));
        return out;
    }
};

struct SlotOutcome {
    bool gamma = false;
    bool beta_bit = false;
    double epsilon = 0.0;
    double energy = 0.0;
    bool delivered = false;
};

struct ScheduleDecision {
    bool gamma = false;
    double epsilon = 0.0;
};

/// High power iff the normalized innovation strictly exceeds the threshold.
inline ScheduleDecision schedule(double y_i, double z_pred, double sigma, double eta_i) {
    const double eps = (y_i - z_pred) / sigma;
    return {std::abs(eps) > eta_i, eps};
}

/// High-power packets always arrive and consume no randomness; low-power
/// packets arrive with probability beta.
inline bool transmit(bool gamma, double beta, Rng& rng) {
    if (gamma) return true;
    return std::bernoulli_distribution(beta)(rng);
}

inline SlotOutcome make_outcome(bool gamma, bool beta_bit, double epsilon, const SchedulerConfig& cfg) {
    return {gamma, gamma ? true : beta_bit, epsilon, gamma ? cfg.delta_high : cfg.delta_low, gamma || beta_bit};
}

struct EnergyLedger {
    double total = 0.0;
    long high_count = 0;
    long low_count = 0;
    /// Empirical fraction of high-power sends; NaN for an empty ledger.
    double high_rate = std::numeric_limits<double>::quiet_NaN();

    bool empty() const { return high_count + low_count == 0; }
};

inline EnergyLedger energy_ledger(std::span<const SlotOutcome> outcomes) {
    EnergyLedger led;
    for (const auto& o : outcomes) {
        led.total += o.energy;
        (o.gamma ? led.high_count : led.low_count) += 1;
    }
    if (!led.empty()) led.high_rate = static_cast<double>(led.high_count) / static_cast<double>(led.high_count + led.low_count);
    return led;
}

}  // namespace pskf
