#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sonnet/params.hpp"

namespace sonnet {

struct StepResult {
    bool applied = false;
    double grad_norm = 0.0;  // before clipping
    std::string offending;   // first parameter holding a non-finite gradient
};

namespace detail {

// Global L2 norm over the group; reports the first non-finite gradient.
template <class Scalar>
StepResult inspect_gradients(const BasicParameterSet<Scalar>& params, const std::vector<std::string>& names) {
    StepResult r;
    double sq = 0.0;
    for (const auto& name : names) {
        const auto& g = params.at(name).grad;
        if (!g.allFinite()) {
            r.offending = name;
            return r;
        }
        sq += static_cast<double>(g.squaredNorm());
    }
    r.grad_norm = std::sqrt(sq);
    r.applied = true;
    return r;
}

inline double clip_factor(double norm, double max_norm) {
    return (max_norm > 0.0 && norm > max_norm) ? max_norm / norm : 1.0;
}

}  // namespace detail

struct AdagradConfig {
    double lr = 0.05;
    double eps = 1e-10;
    double clip_norm = 5.0;
};

// Adagrad over a fixed group of parameters; accumulators mirror their shapes.
template <class Scalar>
class BasicAdagrad {
public:
    BasicAdagrad(std::vector<std::string> names, AdagradConfig cfg) : names_(std::move(names)), cfg_(cfg) {}

    StepResult step(BasicParameterSet<Scalar>& params) {
        StepResult r = detail::inspect_gradients(params, names_);
        if (!r.applied) return r;
        const Scalar k = static_cast<Scalar>(detail::clip_factor(r.grad_norm, cfg_.clip_norm));
        for (const auto& name : names_) {
            auto& p = params.at(name);
            auto& acc = accumulators_[name];
            if (acc.size() == 0) acc.setZero(p.value.rows(), p.value.cols());
            const MatrixX<Scalar> g = p.grad * k;
            acc.array() += g.array().square();
            p.value.array() -= static_cast<Scalar>(cfg_.lr) * g.array() / (acc.array().sqrt() + static_cast<Scalar>(cfg_.eps));
        }
        return r;
    }

    const std::map<std::string, MatrixX<Scalar>>& accumulators() const { return accumulators_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    AdagradConfig cfg_;
    std::map<std::string, MatrixX<Scalar>> accumulators_;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
};

// Adam with bias correction.
template <class Scalar>
class BasicAdam {
public:
    BasicAdam(std::vector<std::string> names, AdamConfig cfg) : names_(std::move(names)), cfg_(cfg) {}

    StepResult step(BasicParameterSet<Scalar>& params) {
        StepResult r = detail::inspect_gradients(params, names_);
        if (!r.applied) return r;
        const Scalar k = static_cast<Scalar>(detail::clip_factor(r.grad_norm, cfg_.clip_norm));
        ++steps_;
        const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
        const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
        const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta1, static_cast<double>(steps_)));
        const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta2, static_cast<double>(steps_)));
        for (const auto& name : names_) {
            auto& p = params.at(name);
            auto& m = first_[name];
            auto& v = second_[name];
            if (m.size() == 0) {
                m.setZero(p.value.rows(), p.value.cols());
                v.setZero(p.value.rows(), p.value.cols());
            }
            const MatrixX<Scalar> g = p.grad * k;
            m = b1 * m + (Scalar(1) - b1) * g;
            v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
            p.value.array() -= static_cast<Scalar>(cfg_.lr) * (m.array() / c1) /
                               ((v.array() / c2).sqrt() + static_cast<Scalar>(cfg_.eps));
        }
        return r;
    }

    long steps() const { return steps_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    AdamConfig cfg_;
    long steps_ = 0;
    std::map<std::string, MatrixX<Scalar>> first_;
    std::map<std::string, MatrixX<Scalar>> second_;
};

using Adagrad = BasicAdagrad<Real>;
using Adam = BasicAdam<Real>;

}  // namespace sonnet
