#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "msnn/graph.hpp"

namespace msnn {

// Adam (default) with a plain-SGD fallback mode. Operates on logical
// parameter stores, so a tied group is updated exactly once per step;
// gradients are zeroed after the update.
template <typename T>
class Optimizer {
  public:
    enum class Kind { adam, sgd };

    explicit Optimizer(Kind kind, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<ParamPtr<T>>& params) {
        for (const auto& p : params)
            if (!p->grad_touched)
                throw data_error("optimizer: parameter '" + p->name +
                                 "' has no gradient (backward not run?)");
        ++t_;
        beta1_pow_ *= beta1_;
        beta2_pow_ *= beta2_;
        for (const auto& p : params) {
            if (kind_ == Kind::sgd) {
                for (std::size_t i = 0; i < p->value.numel(); ++i)
                    p->value.values[i] -= lr_ * p->grad.values[i];
            } else {
                State& s = state_for(*p);
                const T bc1 = T(1) - beta1_pow_;
                const T bc2 = T(1) - beta2_pow_;
                for (std::size_t i = 0; i < p->value.numel(); ++i) {
                    const T g = p->grad.values[i];
                    s.m[i] = beta1_ * s.m[i] + (T(1) - beta1_) * g;
                    s.v[i] = beta2_ * s.v[i] + (T(1) - beta2_) * g * g;
                    const T mhat = s.m[i] / bc1;
                    const T vhat = s.v[i] / bc2;
                    p->value.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
                }
            }
            p->zero_grad();
        }
    }

    T learning_rate() const { return lr_; }
    std::size_t step_count() const { return t_; }

  private:
    struct State {
        std::vector<T> m, v;
    };

    State& state_for(const ParamStore<T>& p) {
        auto it = state_.find(p.name);
        if (it == state_.end()) {
            State s;
            s.m.assign(p.value.numel(), T(0));
            s.v.assign(p.value.numel(), T(0));
            it = state_.emplace(p.name, std::move(s)).first;
        }
        return it->second;
    }

    Kind kind_;
    T lr_, beta1_, beta2_, eps_;
    T beta1_pow_ = T(1), beta2_pow_ = T(1);
    std::size_t t_ = 0;
    std::map<std::string, State> state_;
};

}  // namespace msnn
