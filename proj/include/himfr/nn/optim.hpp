#pragma once

#include "himfr/nn/layers.hpp"

namespace himfr::nn {

enum class OptimizerKind { adam, rectified_adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

/// Adam with optional variance rectification. With `rectified`, early steps
/// where the variance estimate is untrustworthy fall back to momentum-only
/// updates and later steps scale by the rectification term.
class Adam {
public:
    Adam(ParamRefs params, float lr, bool rectified = false, float beta1 = 0.9f,
         float beta2 = 0.999f, float eps = 1e-8f);

    void step();
    void zero_grad();

    long long steps() const { return t_; }

private:
    ParamRefs params_;
    float lr_, beta1_, beta2_, eps_;
    bool rectified_;
    long long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

inline Adam make_optimizer(OptimizerKind kind, ParamRefs params, float lr) {
    return Adam(std::move(params), lr, kind == OptimizerKind::rectified_adam);
}

}  // namespace himfr::nn
