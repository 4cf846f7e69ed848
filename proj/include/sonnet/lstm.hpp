#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sonnet/graph.hpp"

namespace sonnet {

template <class Scalar>
struct BasicLstmState {
    BasicVar<Scalar> hidden;
    BasicVar<Scalar> cell;
};

// Single-layer LSTM weights: W maps [x; h] to the stacked gate
// preactivations [input; forget; output; candidate].
template <class Scalar>
struct BasicLstmWeights {
    BasicParameter<Scalar>* W = nullptr;
    BasicParameter<Scalar>* b = nullptr;
    Eigen::Index input = 0;
    Eigen::Index hidden = 0;

    static BasicLstmWeights create(BasicParameterSet<Scalar>& params, const std::string& prefix, Eigen::Index input,
                                   Eigen::Index hidden, Rng& rng) {
        BasicLstmWeights w;
        w.W = &params.add(prefix + "/W", 4 * hidden, input + hidden, Init::Uniform, rng);
        w.b = &params.add(prefix + "/b", 4 * hidden, 1, Init::Zeros, rng);
        w.input = input;
        w.hidden = hidden;
        return w;
    }

    static BasicLstmWeights bind(BasicParameterSet<Scalar>& params, const std::string& prefix) {
        BasicLstmWeights w;
        w.W = &params.at(prefix + "/W");
        w.b = &params.at(prefix + "/b");
        w.hidden = w.b->value.rows() / 4;
        w.input = w.W->value.cols() - w.hidden;
        return w;
    }
};

using LstmState = BasicLstmState<Real>;
using LstmWeights = BasicLstmWeights<Real>;

template <class Scalar>
BasicLstmState<Scalar> lstm_zero_state(BasicGraph<Scalar>& g, Eigen::Index hidden) {
    return {g.constant(MatrixX<Scalar>::Zero(hidden, 1)), g.constant(MatrixX<Scalar>::Zero(hidden, 1))};
}

template <class Scalar>
BasicLstmState<Scalar> lstm_step(BasicGraph<Scalar>& g, const BasicLstmWeights<Scalar>& w, BasicVar<Scalar> x,
                                 const BasicLstmState<Scalar>& prev) {
    if (x.rows() != w.input || x.cols() != 1)
        throw ShapeError("lstm_step: input " + detail::shape_str(x.value()) + " vs expected [" +
                         std::to_string(w.input) + "x1]");
    if (prev.hidden.rows() != w.hidden || prev.cell.rows() != w.hidden)
        throw ShapeError("lstm_step: state " + detail::shape_str(prev.hidden.value()) + " vs expected [" +
                         std::to_string(w.hidden) + "x1]");
    auto gates = add(matmul(g.parameter(*w.W), concat(x, prev.hidden)), g.parameter(*w.b));
    auto hc = lstm_pointwise(gates, prev.cell);
    return {slice_rows(hc, 0, w.hidden), slice_rows(hc, w.hidden, w.hidden)};
}

// Runs a forward and a backward LSTM over `inputs`; element i of the result
// is [forward_i; backward_i].
template <class Scalar>
std::vector<BasicVar<Scalar>> bilstm_encode(BasicGraph<Scalar>& g, const BasicLstmWeights<Scalar>& fwd,
                                            const BasicLstmWeights<Scalar>& bwd,
                                            const std::vector<BasicVar<Scalar>>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("bilstm_encode: empty sequence");
    const std::size_t n = inputs.size();
    std::vector<BasicVar<Scalar>> forward(n), backward(n), out(n);
    auto state = lstm_zero_state(g, fwd.hidden);
    for (std::size_t i = 0; i < n; ++i) {
        state = lstm_step(g, fwd, inputs[i], state);
        forward[i] = state.hidden;
    }
    state = lstm_zero_state(g, bwd.hidden);
    for (std::size_t i = n; i-- > 0;) {
        state = lstm_step(g, bwd, inputs[i], state);
        backward[i] = state.hidden;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = concat(forward[i], backward[i]);
    return out;
}

}  // namespace sonnet
