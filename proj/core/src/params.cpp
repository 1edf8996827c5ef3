#include "skrl/params.hpp"

#include <cmath>

namespace skrl {

const char * module_label_name(ModuleLabel l) {
    switch (l) {
        case ModuleLabel::encoder:   return "encoder";
        case ModuleLabel::connector: return "connector";
        case ModuleLabel::decoder:   return "decoder";
    }
    return "?";
}

ModuleLabel module_label_from_name(const std::string & s) {
    if (s == "encoder")   return ModuleLabel::encoder;
    if (s == "connector") return ModuleLabel::connector;
    if (s == "decoder")   return ModuleLabel::decoder;
    throw config_error("unknown module label: " + s);
}

Param & ParamStore::add(const std::string & name, ModuleLabel label, Tensor value) {
    if (index_.count(name)) {
        throw config_error("duplicate parameter name: " + name);
    }
    Param p;
    p.name = name;
    p.label = label;
    p.grad = Tensor::zeros(value.shape);
    p.value = std::move(value);
    p.value.requires_grad = true;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
}

Param & ParamStore::get(const std::string & name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw config_error("no such parameter: " + name);
    }
    return params_[it->second];
}

const Param & ParamStore::get(const std::string & name) const {
    return const_cast<ParamStore *>(this)->get(name);
}

void ParamStore::zero_grad() {
    for (Param & p : params_) {
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0f);
    }
}

void ParamStore::step(const OptimizerConfig & opt) {
    if (opt.kind == OptimizerConfig::Kind::adam) {
        adam_t_ += 1;
    }
    for (Param & p : params_) {
        if (is_frozen(p.label)) {
            continue;
        }
        switch (opt.kind) {
            case OptimizerConfig::Kind::sgd_momentum: {
                if (p.momentum.data.empty()) {
                    p.momentum = Tensor::zeros(p.value.shape);
                }
                for (size_t i = 0; i < p.value.data.size(); ++i) {
                    p.momentum.data[i] = opt.momentum * p.momentum.data[i] + p.grad.data[i];
                    p.value.data[i] -= opt.lr * p.momentum.data[i];
                }
                break;
            }
            case OptimizerConfig::Kind::adam: {
                if (p.adam_m.data.empty()) {
                    p.adam_m = Tensor::zeros(p.value.shape);
                    p.adam_v = Tensor::zeros(p.value.shape);
                }
                const float bc1 = 1.0f - std::pow(opt.adam_beta1, (float) adam_t_);
                const float bc2 = 1.0f - std::pow(opt.adam_beta2, (float) adam_t_);
                for (size_t i = 0; i < p.value.data.size(); ++i) {
                    const float g = p.grad.data[i];
                    p.adam_m.data[i] = opt.adam_beta1 * p.adam_m.data[i] + (1.0f - opt.adam_beta1) * g;
                    p.adam_v.data[i] = opt.adam_beta2 * p.adam_v.data[i] + (1.0f - opt.adam_beta2) * g * g;
                    const float mhat = p.adam_m.data[i] / bc1;
                    const float vhat = p.adam_v.data[i] / bc2;
                    p.value.data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.adam_eps);
                }
                break;
            }
        }
    }
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const Param & p : params_) {
        n += p.value.size();
    }
    return n;
}

} // namespace skrl
