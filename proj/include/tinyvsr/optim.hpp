#pragma once

// Adam with decoupled weight decay. State is keyed by parameter name so an
// optimizer can be handed different trainable subsets across calls without
// mixing moments.

#include "tinyvsr/nn.hpp"

namespace tinyvsr {

template <typename T>
struct AdamW {
    T lr = T(8e-5);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0);
    int64_t t = 0;

    struct Moments {
        Tensor<T> m, v;
    };
    std::map<std::string, Moments> state;

    void step(const std::map<std::string, Var<T>>& params) {
        ++t;
        T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
        T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
        for (const auto& [name, p] : params) {
            if (p->grad.empty()) continue;
            auto it = state.find(name);
            if (it == state.end())
                it = state.emplace(name, Moments{Tensor<T>::zeros(p->value.shape()),
                                                 Tensor<T>::zeros(p->value.shape())})
                         .first;
            auto& mo = it->second;
            for (int64_t i = 0; i < p->value.size(); ++i) {
                T g = p->grad[i];
                mo.m[i] = beta1 * mo.m[i] + (T(1) - beta1) * g;
                mo.v[i] = beta2 * mo.v[i] + (T(1) - beta2) * g * g;
                T mhat = mo.m[i] / bc1;
                T vhat = mo.v[i] / bc2;
                p->value[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p->value[i]);
            }
        }
    }
};

}  // namespace tinyvsr
