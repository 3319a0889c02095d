#pragma once

// One structured config for the whole pipeline. Every field has a default;
// a JSON file supplies overrides and CLI flags override the file.

#include <fstream>

#include <nlohmann/json.hpp>

#include "tinyvsr/model.hpp"
#include "tinyvsr/sampling.hpp"
#include "tinyvsr/training.hpp"

namespace tinyvsr {

inline void to_json(nlohmann::json& j, const SamplerOptions& o) {
    j = {{"steps", o.steps},
         {"sdedit_strength", o.sdedit_strength},
         {"bidirectional", o.bidirectional},
         {"tile", o.tile},
         {"tile_overlap", o.tile_overlap},
         {"adapter_on", o.adapter_on},
         {"seed", o.seed}};
}
inline void from_json(const nlohmann::json& j, SamplerOptions& o) {
    o.steps = j.value("steps", o.steps);
    o.sdedit_strength = j.value("sdedit_strength", o.sdedit_strength);
    o.bidirectional = j.value("bidirectional", o.bidirectional);
    o.tile = j.value("tile", o.tile);
    o.tile_overlap = j.value("tile_overlap", o.tile_overlap);
    o.adapter_on = j.value("adapter_on", o.adapter_on);
    o.seed = j.value("seed", o.seed);
}

template <typename T>
void to_json(nlohmann::json& j, const DegradationConfig<T>& c) {
    j = {{"blur_lo", c.blur_lo},       {"blur_hi", c.blur_hi},
         {"factor", c.factor},         {"noise_lo", c.noise_lo},
         {"noise_hi", c.noise_hi},     {"quant_levels", c.quant_levels}};
}
template <typename T>
void from_json(const nlohmann::json& j, DegradationConfig<T>& c) {
    c.blur_lo = j.value("blur_lo", c.blur_lo);
    c.blur_hi = j.value("blur_hi", c.blur_hi);
    c.factor = j.value("factor", c.factor);
    c.noise_lo = j.value("noise_lo", c.noise_lo);
    c.noise_hi = j.value("noise_hi", c.noise_hi);
    c.quant_levels = j.value("quant_levels", c.quant_levels);
}

template <typename T>
void to_json(nlohmann::json& j, const StageConfig<T>& c) {
    j = {{"stage", c.stage},           {"iterations", c.iterations},
         {"lr", c.lr},                 {"batch_size", c.batch_size},
         {"alpha", c.alpha},           {"beta", c.beta},
         {"sample_steps", c.sample_steps}, {"seed", c.seed}};
}
template <typename T>
void from_json(const nlohmann::json& j, StageConfig<T>& c) {
    c.stage = j.value("stage", c.stage);
    c.iterations = j.value("iterations", c.iterations);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.sample_steps = j.value("sample_steps", c.sample_steps);
    c.seed = j.value("seed", c.seed);
}

struct RunConfig {
    ModelConfig model;
    SamplerOptions sampler;
    DegradationConfig<float> degradation;
    std::map<int, StageConfig<float>> stages;  // per-stage overrides
    uint64_t seed = 0;

    StageConfig<float> stage(int s) const {
        auto it = stages.find(s);
        StageConfig<float> c = (it != stages.end()) ? it->second : StageConfig<float>{};
        c.stage = s;
        if (it == stages.end()) c.seed = seed;
        return c;
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"model", c.model},
         {"sampler", c.sampler},
         {"degradation", c.degradation},
         {"seed", c.seed}};
    for (const auto& [s, sc] : c.stages) j["stages"][std::to_string(s)] = sc;
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("sampler")) j.at("sampler").get_to(c.sampler);
    if (j.contains("degradation")) j.at("degradation").get_to(c.degradation);
    c.seed = j.value("seed", c.seed);
    if (j.contains("stages"))
        for (const auto& [key, val] : j.at("stages").items()) {
            StageConfig<float> sc = val.get<StageConfig<float>>();
            sc.stage = std::stoi(key);
            c.stages[sc.stage] = sc;
        }
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return j.get<RunConfig>();
}

inline void save_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    nlohmann::json j = cfg;
    os << j.dump(2) << "\n";
}

}  // namespace tinyvsr
