// spectrum.hpp - frequency grid with named real-valued channels

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavityqed/errors.hpp"

namespace cavityqed {

namespace channel {
inline constexpr const char* transmission = "transmission";
inline constexpr const char* reflection = "reflection";
inline constexpr const char* phase_deg = "phase_deg";
inline constexpr const char* excited_population = "excited_population";
} // namespace channel

// Frequencies in GHz relative to the bare molecule. Channels keep insertion order.
struct SpectrumTrace {
    std::vector<double> freqs;
    std::vector<std::pair<std::string, std::vector<double>>> channels;

    bool has(const std::string& name) const {
        return std::any_of(channels.begin(), channels.end(), [&](const auto& c) { return c.first == name; });
    }

    const std::vector<double>& channel(const std::string& name) const {
        for (const auto& c : channels)
            if (c.first == name) return c.second;
        throw InvalidArgument("SpectrumTrace: no channel '" + name + "'");
    }

    void set(const std::string& name, std::vector<double> values) {
        if (values.size() != freqs.size()) throw DimensionMismatch("SpectrumTrace: channel length differs from grid");
        for (auto& c : channels)
            if (c.first == name) {
                c.second = std::move(values);
                return;
            }
        channels.emplace_back(name, std::move(values));
    }
};

inline void check_grid_increasing(std::span<const double> grid, const char* who) {
    if (grid.empty()) throw InvalidArgument(std::string(who) + ": empty frequency grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument(std::string(who) + ": grid must be strictly increasing");
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 1) throw InvalidArgument("linspace: need at least one point");
    std::vector<double> out(static_cast<std::size_t>(n));
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * double(i) / double(n - 1);
    return out;
}

inline std::vector<double> logspace(double lo, double hi, int n) {
    auto e = linspace(std::log10(lo), std::log10(hi), n);
    for (auto& v : e) v = std::pow(10.0, v);
    return e;
}

} // namespace cavityqed
