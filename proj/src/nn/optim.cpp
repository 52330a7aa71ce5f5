#include "himfr/nn/optim.hpp"

#include <cmath>

namespace himfr::nn {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "rectified-adam" || s == "radam") return OptimizerKind::rectified_adam;
    throw InputError("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "rectified-adam";
}

Adam::Adam(ParamRefs params, float lr, bool rectified, float beta1, float beta2,
           float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), rectified_(rectified) {
    for (Param* p : params)
        if (p->trainable) params_.push_back(p);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i]->value.size(), 0.0f);
        v_[i].assign(params_[i]->value.size(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double t = static_cast<double>(t_);
    const double beta1_t = std::pow(beta1_, t);
    const double beta2_t = std::pow(beta2_, t);
    const double m_corr = 1.0 / (1.0 - beta1_t);
    const double v_corr = 1.0 / (1.0 - beta2_t);

    // Length of the second-moment window; below 5 the variance estimate is
    // too noisy to divide by.
    const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t);
    double rect = 1.0;
    bool adaptive = true;
    if (rectified_) {
        if (rho_t > 4.0) {
            rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                             ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
        } else {
            adaptive = false;
        }
    }

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const float g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0f - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0f - beta2_) * g * g;
            const double mhat = m[j] * m_corr;
            if (adaptive) {
                const double vhat = std::sqrt(v[j] * v_corr);
                p.value[j] -= static_cast<float>(lr_ * rect * mhat / (vhat + eps_));
            } else {
                p.value[j] -= static_cast<float>(lr_ * mhat);
            }
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

}  // namespace himfr::nn
