#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "convnilm/data.hpp"
#include "convnilm/rng.hpp"

namespace convnilm {

// Synthetic appliances for desk-scale datasets, one generator per device
// class:
//   OnOff       square waves with random on/off durations at a target duty
//   FiniteState Markov chain over >= 2 power levels with a slow periodic
//               bias toward higher or lower states
//   Varying     AR(1) random walk around a base level, clamped at 0 W
//   Permanent   constant draw
enum class ApplianceType { OnOff = 1, FiniteState = 2, Varying = 3, Permanent = 4 };

struct ApplianceSpec {
    std::string name = "appliance";
    ApplianceType type = ApplianceType::OnOff;
    std::vector<double> levels = {100.0}; // FiniteState: all states; others: first entry
    double duty = 0.5;          // OnOff: fraction of time on
    double mean_cycle_s = 200;  // OnOff: mean on+off cycle length
    double dwell = 0.9;         // FiniteState: probability of keeping the state
    double bias_period_s = 600; // FiniteState: period of the transition bias
    double bias_strength = 0.3; // FiniteState: relative strength of the bias
    double sigma = 5.0;         // Varying: innovation std, watts
    double rho = 0.99;          // Varying: AR(1) coefficient
    uint64_t seed = 0;          // offset mixed into the dataset seed

    void validate() const {
        if (levels.empty()) throw ConfigError("appliance spec: no power levels");
        for (double l : levels)
            if (l < 0.0 || !std::isfinite(l)) throw ConfigError("appliance spec: levels must be finite and >= 0");
        switch (type) {
            case ApplianceType::OnOff:
                if (!(duty > 0.0 && duty < 1.0)) throw ConfigError("appliance spec: duty must lie in (0,1)");
                if (mean_cycle_s <= 0.0) throw ConfigError("appliance spec: mean cycle must be positive");
                break;
            case ApplianceType::FiniteState:
                if (levels.size() < 2) throw ConfigError("appliance spec: finite-state appliances need >= 2 levels");
                if (!(dwell > 0.0 && dwell < 1.0)) throw ConfigError("appliance spec: dwell must lie in (0,1)");
                break;
            case ApplianceType::Varying:
                if (sigma < 0.0 || !(rho >= 0.0 && rho <= 1.0)) throw ConfigError("appliance spec: bad varying parameters");
                break;
            case ApplianceType::Permanent:
                break;
        }
    }
};

namespace synth_detail {

inline std::vector<double> gen_onoff(const ApplianceSpec& sp, int64_t T, double period_s, Rng& rng) {
    const double level = sp.levels[0];
    const double mean_on = sp.duty * sp.mean_cycle_s / period_s;
    const double mean_off = (1.0 - sp.duty) * sp.mean_cycle_s / period_s;
    std::vector<double> out(static_cast<size_t>(T), 0.0);
    bool on = rng.uniform() < sp.duty;
    int64_t i = 0;
    while (i < T) {
        double mean = on ? mean_on : mean_off;
        int64_t dur = std::max<int64_t>(1, static_cast<int64_t>(std::llround(rng.exponential(mean))));
        for (int64_t j = 0; j < dur && i < T; ++j, ++i) out[static_cast<size_t>(i)] = on ? level : 0.0;
        on = !on;
    }
    return out;
}

inline std::vector<double> gen_fsm(const ApplianceSpec& sp, int64_t T, double period_s, Rng& rng) {
    const size_t n = sp.levels.size();
    std::vector<double> out(static_cast<size_t>(T));
    size_t state = rng.below(n);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int64_t i = 0; i < T; ++i) {
        out[static_cast<size_t>(i)] = sp.levels[state];
        if (rng.uniform() >= sp.dwell) {
            // pick another state, weighted by a slow periodic preference for
            // higher (positive phase) or lower (negative phase) levels
            double phase = std::sin(two_pi * static_cast<double>(i) * period_s / sp.bias_period_s);
            double total = 0.0;
            std::vector<double> wts(n, 0.0);
            for (size_t j = 0; j < n; ++j) {
                if (j == state) continue;
                double pos = n > 1 ? static_cast<double>(j) / static_cast<double>(n - 1) - 0.5 : 0.0;
                wts[j] = std::max(0.05, 1.0 + sp.bias_strength * phase * 2.0 * pos);
                total += wts[j];
            }
            double u = rng.uniform() * total;
            for (size_t j = 0; j < n; ++j) {
                if (j == state) continue;
                u -= wts[j];
                if (u <= 0.0) {
                    state = j;
                    break;
                }
            }
        }
    }
    return out;
}

inline std::vector<double> gen_varying(const ApplianceSpec& sp, int64_t T, Rng& rng) {
    const double base = sp.levels[0];
    std::vector<double> out(static_cast<size_t>(T));
    double dev = 0.0;
    for (int64_t i = 0; i < T; ++i) {
        dev = sp.rho * dev + sp.sigma * rng.gaussian();
        out[static_cast<size_t>(i)] = std::max(0.0, base + dev);
    }
    return out;
}

} // namespace synth_detail

inline std::vector<double> gen_appliance(const ApplianceSpec& sp, int64_t T, double period_s, Rng& rng) {
    sp.validate();
    if (T <= 0) throw ConfigError("synthetic series length must be positive");
    switch (sp.type) {
        case ApplianceType::OnOff: return synth_detail::gen_onoff(sp, T, period_s, rng);
        case ApplianceType::FiniteState: return synth_detail::gen_fsm(sp, T, period_s, rng);
        case ApplianceType::Varying: return synth_detail::gen_varying(sp, T, rng);
        case ApplianceType::Permanent: return std::vector<double>(static_cast<size_t>(T), sp.levels[0]);
    }
    throw ConfigError("unknown appliance type");
}

struct SyntheticData {
    std::vector<double> mixture;              // watts
    std::vector<std::vector<double>> targets; // watts, one per spec
};

// Pure function of (specs, T, period, noise, seed): per-appliance streams use
// sub-seeds so appending specs never perturbs earlier appliances.
inline SyntheticData gen_synthetic(const std::vector<ApplianceSpec>& specs, int64_t T,
                                   double period_s, double noise_std, uint64_t seed) {
    if (specs.empty()) throw ConfigError("gen_synthetic needs at least one appliance spec");
    SyntheticData out;
    for (size_t i = 0; i < specs.size(); ++i) {
        Rng rng(seed * 0x9e3779b97f4a7c15ULL + specs[i].seed + i + 1);
        out.targets.push_back(gen_appliance(specs[i], T, period_s, rng));
    }
    Rng noise_rng(seed * 0x9e3779b97f4a7c15ULL);
    out.mixture = build_aggregate(out.targets, nullptr, noise_std, noise_rng);
    return out;
}

// Spec files: one [appliance] section per device.
//
//   [appliance]
//   name = fridge
//   type = fsm            # onoff | fsm | varying | permanent (or 1..4)
//   levels = 0, 80, 150
//   dwell = 0.95
inline ApplianceType appliance_type_from(const std::string& s) {
    if (s == "onoff" || s == "1") return ApplianceType::OnOff;
    if (s == "fsm" || s == "finite-state" || s == "2") return ApplianceType::FiniteState;
    if (s == "varying" || s == "3") return ApplianceType::Varying;
    if (s == "permanent" || s == "4") return ApplianceType::Permanent;
    throw ConfigError("unknown appliance type: " + s);
}

inline std::vector<ApplianceSpec> parse_spec_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open appliance spec file: " + path);
    std::vector<ApplianceSpec> specs;
    std::string line;
    int64_t line_no = 0;
    auto trim = [](const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s == "[appliance]") {
            specs.emplace_back();
            specs.back().levels.clear();
            continue;
        }
        auto eq = s.find('=');
        if (specs.empty() || eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected [appliance] or key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        ApplianceSpec& sp = specs.back();
        try {
            if (key == "name") sp.name = val;
            else if (key == "type") sp.type = appliance_type_from(val);
            else if (key == "levels") {
                sp.levels.clear();
                std::istringstream vs(val);
                std::string tok;
                while (std::getline(vs, tok, ',')) sp.levels.push_back(std::stod(trim(tok)));
            }
            else if (key == "duty") sp.duty = std::stod(val);
            else if (key == "mean_cycle_s") sp.mean_cycle_s = std::stod(val);
            else if (key == "dwell") sp.dwell = std::stod(val);
            else if (key == "bias_period_s") sp.bias_period_s = std::stod(val);
            else if (key == "bias_strength") sp.bias_strength = std::stod(val);
            else if (key == "sigma") sp.sigma = std::stod(val);
            else if (key == "rho") sp.rho = std::stod(val);
            else if (key == "seed") sp.seed = static_cast<uint64_t>(std::stoull(val));
            else throw ConfigError("unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value for " + key);
        }
    }
    if (specs.empty()) throw ConfigError(path + ": no [appliance] sections");
    for (auto& sp : specs) {
        if (sp.levels.empty()) throw ConfigError(path + ": appliance " + sp.name + " has no levels");
        sp.validate();
    }
    return specs;
}

// Three-appliance default: an on/off device, a three-state machine, and a
// permanent draw.
inline std::vector<ApplianceSpec> default_specs() {
    ApplianceSpec a;
    a.name = "onoff_100w";
    a.type = ApplianceType::OnOff;
    a.levels = {100.0};
    a.duty = 0.3;
    a.mean_cycle_s = 300.0;

    ApplianceSpec b;
    b.name = "fsm_3state";
    b.type = ApplianceType::FiniteState;
    b.levels = {0.0, 50.0, 200.0};
    b.dwell = 0.95;

    ApplianceSpec c;
    c.name = "permanent_30w";
    c.type = ApplianceType::Permanent;
    c.levels = {30.0};
    return {a, b, c};
}

} // namespace convnilm
