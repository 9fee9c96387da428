#pragma once

#include <map>
#include <string>
#include <vector>

#include "d24fad/autodiff.hpp"
#include "d24fad/tensor.hpp"

namespace d24fad {

// Named parameter tensor with its Adam moment buffers. Iteration order is
// insertion order everywhere; optimizer updates walk this order so runs are
// reproducible regardless of how callers look parameters up.
struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor adam_m;
    Tensor adam_v;
};

class ParamSet {
public:
    Tensor& add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<ParamTensor>& items() { return items_; }
    const std::vector<ParamTensor>& items() const { return items_; }
    size_t size() const { return items_.size(); }
    int64_t total_elems() const;

    uint64_t checksum() const;  // over parameter values only

private:
    std::vector<ParamTensor> items_;
    std::map<std::string, size_t> index_;
};

// One forward/backward step's view of a ParamSet: leaf Vars when training,
// constants when frozen. Grads are read back from the Vars after backward().
struct Bound {
    std::map<std::string, ad::Var> vars;
    const ad::Var& at(const std::string& name) const;
};

Bound bind(ParamSet& params, bool trainable);
Bound bind(const ParamSet& params);  // frozen view

struct AdamConfig {
    double lr = 5e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// In-place Adam update from the gradients accumulated on `bound`. `step` is
// the 1-based global step count used for bias correction.
void adam_step(ParamSet& params, const Bound& bound, const AdamConfig& cfg, int64_t step);

}  // namespace d24fad
