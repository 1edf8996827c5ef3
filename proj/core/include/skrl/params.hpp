#pragma once

#include "skrl/tensor.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace skrl {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModuleLabel : uint8_t {
    encoder = 0,
    connector = 1,
    decoder = 2,
};

const char * module_label_name(ModuleLabel l);
ModuleLabel module_label_from_name(const std::string & s);

struct Param {
    std::string name;
    ModuleLabel label;
    Tensor value;
    Tensor grad;     // accumulated between zero_grad() calls
    Tensor momentum; // sgd buffer
    Tensor adam_m;
    Tensor adam_v;
};

struct OptimizerConfig {
    enum class Kind { sgd_momentum, adam };
    Kind kind = Kind::sgd_momentum;
    float lr = 1e-2f;
    float momentum = 0.9f;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
};

// Named parameter tensors, each tagged with exactly one module label.
// Frozen labels never receive updates; their grads are discarded at step time.
class ParamStore {
  public:
    Param & add(const std::string & name, ModuleLabel label, Tensor value);

    Param & get(const std::string & name);
    const Param & get(const std::string & name) const;
    bool has(const std::string & name) const { return index_.count(name) > 0; }

    std::vector<Param> & all() { return params_; }
    const std::vector<Param> & all() const { return params_; }

    void set_frozen(const std::set<ModuleLabel> & labels) { frozen_ = labels; }
    const std::set<ModuleLabel> & frozen() const { return frozen_; }
    bool is_frozen(ModuleLabel l) const { return frozen_.count(l) > 0; }

    void zero_grad();

    // one optimizer update from accumulated grads; frozen labels untouched
    void step(const OptimizerConfig & opt);

    int64_t total_size() const;

  private:
    std::vector<Param> params_;
    std::map<std::string, size_t> index_;
    std::set<ModuleLabel> frozen_;
    int64_t adam_t_ = 0;
};

} // namespace skrl
