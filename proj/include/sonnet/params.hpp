#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sonnet/rng.hpp"

namespace sonnet {

#ifdef SONNET_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;

enum class Init { Uniform, Zeros };

// A trainable tensor: value and gradient slot of identical shape.
template <class Scalar>
struct BasicParameter {
    std::string name;
    MatrixX<Scalar> value;
    MatrixX<Scalar> grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Named parameter registry. Entries live in a std::map so addresses are
// stable and iteration order is the lexicographic name order.
template <class Scalar>
class BasicParameterSet {
public:
    using Parameter = BasicParameter<Scalar>;

    Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                   Rng& rng, Scalar scale = Scalar(0.05)) {
        if (rows <= 0 || cols <= 0)
            throw std::invalid_argument("parameter " + name + " has empty shape");
        auto [it, inserted] = params_.try_emplace(name);
        if (!inserted) throw std::invalid_argument("duplicate parameter " + name);
        Parameter& p = it->second;
        p.name = name;
        p.value.resize(rows, cols);
        if (init == Init::Uniform) {
            // Column-major fill order is part of the reproducibility contract.
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i)
                    p.value(i, j) = static_cast<Scalar>(rng.uniform(-scale, scale));
        } else {
            p.value.setZero();
        }
        p.zero_grad();
        return p;
    }

    // Inserts or replaces a parameter with an explicit value.
    Parameter& set(const std::string& name, MatrixX<Scalar> value) {
        Parameter& p = params_[name];
        p.name = name;
        p.value = std::move(value);
        p.zero_grad();
        return p;
    }

    Parameter& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
        return it->second;
    }
    const Parameter& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad() {
        for (auto& [_, p] : params_) p.zero_grad();
    }

    std::vector<std::string> names_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [name, _] : params_)
            if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(name);
        return out;
    }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    // Snapshot of all values, used for the reset-on-worse-dev rule.
    std::map<std::string, MatrixX<Scalar>> values() const {
        std::map<std::string, MatrixX<Scalar>> out;
        for (const auto& [name, p] : params_) out.emplace(name, p.value);
        return out;
    }
    void restore(const std::map<std::string, MatrixX<Scalar>>& snapshot) {
        for (const auto& [name, v] : snapshot) at(name).value = v;
    }

private:
    std::map<std::string, Parameter> params_;
};

using Parameter = BasicParameter<Real>;
using ParameterSet = BasicParameterSet<Real>;

}  // namespace sonnet
