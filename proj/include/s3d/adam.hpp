#pragma once

#include <unordered_map>

#include "s3d/tensor.hpp"

namespace s3d {

// Adaptive-moment optimizer over a ParamStore. Parameters with no gradient
// from the last backward pass are left untouched (their update would be the
// zero-gradient update anyway once moments are zero).
template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ParamStore<T>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (const auto& name : params.names()) {
            Tensor<T> p = params.get(name);
            if (!p.raw()->trainable) continue;
            auto& g = p.raw()->grad;
            if (g.size() != p.size()) continue; // unreachable this step
            auto& slot = state_[name];
            if (slot.m.size() != p.size()) {
                slot.m.assign(p.size(), T(0));
                slot.v.assign(p.size(), T(0));
            }
            auto& val = p.mutable_data();
            for (std::size_t i = 0; i < val.size(); ++i) {
                slot.m[i] = T(beta1_) * slot.m[i] + T(1.0 - beta1_) * g[i];
                slot.v[i] = T(beta2_) * slot.v[i] + T(1.0 - beta2_) * g[i] * g[i];
                const double mhat = double(slot.m[i]) / bc1;
                const double vhat = double(slot.v[i]) / bc2;
                val[i] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::size_t step_count() const { return t_; }

    // moments keyed by parameter name, for checkpointing
    std::vector<std::pair<std::string, Tensor<T>>> export_state(const ParamStore<T>& params) const {
        std::vector<std::pair<std::string, Tensor<T>>> records;
        records.emplace_back("opt/step",
                             Tensor<T>::from_data({1}, {static_cast<T>(t_)}));
        for (const auto& name : params.names()) {
            auto it = state_.find(name);
            if (it == state_.end()) continue;
            Tensor<T> p = params.get(name);
            records.emplace_back("opt/m/" + name, Tensor<T>::from_data(p.dims(), it->second.m));
            records.emplace_back("opt/v/" + name, Tensor<T>::from_data(p.dims(), it->second.v));
        }
        return records;
    }

    void import_state(const std::vector<std::pair<std::string, Tensor<T>>>& records) {
        for (const auto& [name, t] : records) {
            if (name == "opt/step") {
                t_ = static_cast<std::size_t>(t[0]);
            } else if (name.rfind("opt/m/", 0) == 0) {
                state_[name.substr(6)].m = t.data();
            } else if (name.rfind("opt/v/", 0) == 0) {
                state_[name.substr(6)].v = t.data();
            }
        }
    }

private:
    struct Moments {
        std::vector<T> m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

} // namespace s3d
