#include "taxo/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "taxo/common.hpp"

namespace taxo::nn {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'X', 'O', 'C', 'K', 'P', '1'};

void write_u64_le(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, const double* data, long long n) {
    for (long long i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], 8);
        write_u64_le(os, bits);
    }
}

void read_f64_le(std::istream& is, double* data, long long n) {
    for (long long i = 0; i < n; ++i) {
        std::uint64_t bits = read_u64_le(is);
        std::memcpy(&data[i], &bits, 8);
    }
}

}  // namespace

Tensor& ParamSet::create(const std::string& name, Tensor init) {
    if (name.empty()) throw ValidationError("parameter name must not be empty");
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw ValidationError("parameter already exists: " + name);
    Entry& e = it->second;
    e.value = std::move(init);
    e.grad = Tensor(e.value.shape());
    e.m = Tensor(e.value.shape());
    e.v = Tensor(e.value.shape());
    return e.value;
}

Tensor& ParamSet::value(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second.value;
}

const Tensor& ParamSet::value(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second.value;
}

Tensor& ParamSet::grad(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second.grad;
}

void ParamSet::zero_grads() {
    for (auto& [name, e] : params_) e.grad.fill(0.0);
}

void ParamSet::adam_step(const AdamConfig& cfg) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, e] : params_) {
        for (long long i = 0; i < e.value.size(); ++i) {
            double g = e.grad[i];
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = e.m[i] / bc1;
            double vhat = e.v[i] / bc2;
            e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        if (!e.value.all_finite())
            throw NumericError("non-finite parameter after update: " + name);
    }
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, e] : params_) out.push_back(name);
    return out;
}

long long ParamSet::total_size() const {
    long long n = 0;
    for (const auto& [name, e] : params_) n += e.value.size();
    return n;
}

void ParamSet::save(const std::string& path, const nlohmann::json& meta) const {
    nlohmann::json header;
    header["step"] = step_;
    header["meta"] = meta;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, e] : params_)
        plist.push_back({{"name", name}, {"shape", e.value.shape()}});
    header["params"] = plist;
    std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u64_le(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, e] : params_) write_f64_le(os, e.value.data(), e.value.size());
    if (!os) throw ValidationError("checkpoint write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path, nlohmann::json* meta) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    std::uint64_t hlen = read_u64_le(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw ValidationError("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw ValidationError("corrupt checkpoint header: " + path);

    ParamSet ps;
    ps.step_ = header.value("step", 0LL);
    if (meta) *meta = header.value("meta", nlohmann::json::object());
    for (const auto& p : header.at("params")) {
        std::string name = p.at("name").get<std::string>();
        std::vector<int> shape = p.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        read_f64_le(is, t.data(), t.size());
        if (!is) throw ValidationError("truncated checkpoint data: " + path);
        if (!t.all_finite()) throw NumericError("non-finite values in checkpoint: " + name);
        ps.create(name, std::move(t));
    }
    return ps;
}

Tape::Var ParamBinding::var(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    Tape::Var v = tape_.leaf(params_.value(name));
    vars_.emplace(name, v);
    return v;
}

void ParamBinding::harvest() {
    for (const auto& [name, v] : vars_) {
        const Tensor& g = tape_.grad(v);
        Tensor& dst = params_.grad(name);
        for (long long i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
}

Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out, rng::Engine& eng) {
    if (fan_in <= 0 || fan_out <= 0) throw ValidationError("glorot_uniform: bad fan sizes");
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(shape);
    for (long long i = 0; i < t.size(); ++i) t[i] = rng::uniform(eng, -a, a);
    return t;
}

GradCheckResult grad_check(const std::function<double(ParamSet&, bool)>& f,
                           ParamSet& params, double eps, int entries_per_param,
                           rng::Engine* eng) {
    params.zero_grads();
    f(params, true);

    // Snapshot analytic grads before the probing evaluations disturb them.
    std::map<std::string, Tensor> analytic;
    for (const std::string& name : params.names()) analytic.emplace(name, params.grad(name));

    GradCheckResult res;
    for (const std::string& name : params.names()) {
        Tensor& val = params.value(name);
        std::vector<long long> idx;
        if (entries_per_param > 0 && val.size() > entries_per_param) {
            if (!eng) throw ValidationError("grad_check: sampling requires an engine");
            for (int k : rng::sample_without_replacement(
                     static_cast<int>(val.size()), entries_per_param, *eng))
                idx.push_back(k);
        } else {
            for (long long i = 0; i < val.size(); ++i) idx.push_back(i);
        }
        for (long long i : idx) {
            double saved = val[i];
            val[i] = saved + eps;
            double fp = f(params, false);
            val[i] = saved - eps;
            double fm = f(params, false);
            val[i] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic.at(name)[i];
            double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++res.entries_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = name;
            }
        }
    }

    // Restore the analytic gradients for the caller.
    params.zero_grads();
    for (const std::string& name : params.names()) {
        Tensor& dst = params.grad(name);
        const Tensor& src = analytic.at(name);
        for (long long i = 0; i < src.size(); ++i) dst[i] = src[i];
    }
    return res;
}

}  // namespace taxo::nn
