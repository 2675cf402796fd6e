#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "taxo/rng.hpp"
#include "taxo/tape.hpp"
#include "taxo/tensor.hpp"

namespace taxo::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named trainable tensors plus their gradients and Adam moments. All
// iteration is in sorted name order so training is reproducible.
class ParamSet {
public:
    Tensor& create(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);

    void zero_grads();
    // One Adam update over every parameter, with bias correction.
    void adam_step(const AdamConfig& cfg);
    long long step_count() const { return step_; }

    std::vector<std::string> names() const;
    long long total_size() const;

    // Single-file checkpoint: magic, JSON header (shapes, step, meta),
    // then the raw values as little-endian float64 in name order.
    void save(const std::string& path, const nlohmann::json& meta = nlohmann::json::object()) const;
    static ParamSet load(const std::string& path, nlohmann::json* meta = nullptr);

private:
    struct Entry {
        Tensor value, grad, m, v;
    };
    std::map<std::string, Entry> params_;
    long long step_ = 0;
};

// Exposes parameters as tape leaves (one leaf per parameter, created on
// first use) and copies tape gradients back into the ParamSet.
class ParamBinding {
public:
    ParamBinding(ParamSet& params, Tape& tape) : params_(params), tape_(tape) {}

    Tape::Var var(const std::string& name);
    void harvest();

private:
    ParamSet& params_;
    Tape& tape_;
    std::map<std::string, Tape::Var> vars_;
};

// Glorot/Xavier uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out, rng::Engine& eng);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    long long entries_checked = 0;
};

// Compares analytic gradients against central finite differences.
// f(params, want_grads) returns the objective; when want_grads is true it
// must also accumulate gradients into the ParamSet (which arrives zeroed).
// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
// If entries_per_param > 0, that many entries of each parameter are
// sampled with eng instead of checking every entry.
GradCheckResult grad_check(const std::function<double(ParamSet&, bool)>& f,
                           ParamSet& params, double eps = 1e-5,
                           int entries_per_param = -1, rng::Engine* eng = nullptr);

}  // namespace taxo::nn
