#include <doctest.h>

#include <cmath>

#include "sonnet/checkpoint.hpp"
#include "sonnet/grad_check.hpp"
#include "sonnet/lstm.hpp"
#include "sonnet/optim.hpp"

using namespace sonnet;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = rng.uniform(-scale, scale);
    return m;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gate equations written out element by element, independent of lstm_step.
void reference_lstm(const Matrix& W, const Matrix& b, const Matrix& x, const Matrix& h, const Matrix& c,
                    Matrix& h_out, Matrix& c_out) {
    const Eigen::Index H = h.rows(), I = x.rows();
    h_out.resize(H, 1);
    c_out.resize(H, 1);
    auto pre = [&](Eigen::Index row) {
        double s = b(row, 0);
        for (Eigen::Index k = 0; k < I; ++k) s += W(row, k) * x(k, 0);
        for (Eigen::Index k = 0; k < H; ++k) s += W(row, I + k) * h(k, 0);
        return s;
    };
    for (Eigen::Index j = 0; j < H; ++j) {
        const double in = sig(pre(j));
        const double forget = sig(pre(H + j));
        const double out = sig(pre(2 * H + j));
        const double cand = std::tanh(pre(3 * H + j));
        c_out(j, 0) = forget * c(j, 0) + in * cand;
        h_out(j, 0) = out * std::tanh(c_out(j, 0));
    }
}

}  // namespace

TEST_CASE("softmax of equal entries is uniform") {
    Graph g;
    auto y = softmax(g.constant(Matrix::Zero(2, 1)));
    CHECK(y.value()(0, 0) == doctest::Approx(0.5));
    CHECK(y.value()(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("softmax sums to one and stays positive") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        Graph g;
        auto y = softmax(g.constant(random_matrix(7, 1, rng, 30.0)));
        CHECK(std::abs(y.value().sum() - 1.0) < 1e-9);
        CHECK((y.value().array() > 0).all());
    }
}

TEST_CASE("sigmoid and matmul basics") {
    Graph g;
    CHECK(sigmoid(g.constant(Matrix::Zero(1, 1))).scalar() == doctest::Approx(0.5));
    auto m = matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(3, 1)));
    CHECK(m.rows() == 2);
    CHECK(m.value()(0, 0) == 3.0);
    CHECK(m.value()(1, 0) == 3.0);
}

TEST_CASE("shape mismatch names both shapes") {
    Graph g;
    try {
        matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 1)));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x1]") != std::string::npos);
    }
}

TEST_CASE("backward of sum of squares") {
    Graph g;
    Matrix x(2, 1);
    x << 1, 2;
    auto v = g.variable(x);
    auto loss = sum(cmul(v, v));
    g.backward(loss);
    CHECK(g.grad(v)(0, 0) == doctest::Approx(2.0));
    CHECK(g.grad(v)(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("backward of sigmoid at zero") {
    ParameterSet params;
    Rng rng(1);
    auto& w = params.add("w", 1, 1, Init::Zeros, rng);
    auto& unused = params.add("unused", 2, 2, Init::Uniform, rng);
    Graph g;
    g.backward(sigmoid(g.parameter(w)));
    CHECK(w.grad(0, 0) == doctest::Approx(0.25));
    CHECK(unused.grad.isZero());
}

TEST_CASE("backward rejects non-scalar losses and a second call") {
    Graph g;
    auto v = g.variable(Matrix::Ones(2, 1));
    CHECK_THROWS_AS(g.backward(v), ShapeError);
    auto s = sum(v);
    g.backward(s);
    CHECK_THROWS_AS(g.backward(s), std::logic_error);
}

TEST_CASE("gradients accumulate across uses of one parameter") {
    ParameterSet params;
    Rng rng(1);
    auto& w = params.add("w", 1, 1, Init::Zeros, rng);
    w.value(0, 0) = 3.0;
    Graph g;
    auto p = g.parameter(w);
    g.backward(add(scale(p, 2.0), cmul(p, p)));
    CHECK(w.grad(0, 0) == doctest::Approx(2.0 + 6.0));
}

TEST_CASE("grad_check is tight on a linear model") {
    ParameterSet params;
    Rng rng(5);
    params.add("W", 3, 4, Init::Uniform, rng, 1.0);
    params.add("b", 3, 1, Init::Uniform, rng, 1.0);
    const Matrix x = random_matrix(4, 1, rng);
    auto build = [&](Graph& g) {
        auto y = add(matmul(g.parameter(params.at("W")), g.constant(x)), g.parameter(params.at("b")));
        return sum(cmul(y, y));
    };
    const auto r = grad_check<Real>(build, params, 1e-5, 100);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check reports a non-finite loss") {
    ParameterSet params;
    Rng rng(5);
    params.add("w", 1, 1, Init::Zeros, rng);
    auto build = [&](Graph& g) { return log(g.parameter(params.at("w"))); };
    CHECK_THROWS(grad_check<Real>(build, params));
}

TEST_CASE("every op passes a finite-difference check") {
    ParameterSet params;
    Rng rng(11);
    params.add("a", 4, 1, Init::Uniform, rng, 1.0);
    params.add("b", 4, 1, Init::Uniform, rng, 1.0);
    params.add("M", 3, 4, Init::Uniform, rng, 1.0);
    params.add("T", 5, 4, Init::Uniform, rng, 1.0);
    auto build = [&](Graph& g) {
        auto a = g.parameter(params.at("a"));
        auto b = g.parameter(params.at("b"));
        auto M = g.parameter(params.at("M"));
        auto T = g.parameter(params.at("T"));
        std::vector<bool> mask{true, false, true, true};
        std::vector<Var> terms{
            sum(tanh(matmul(M, a))),
            sum(sigmoid(sub(a, b))),
            sum(relu(add(a, shift(b, 0.3)))),
            sum(exp(scale(a, 0.5))),
            sum(log(shift(sigmoid(b), 0.1))),
            sum(log_sigmoid(a)),
            dot(softmax(a), b),
            dot(masked_softmax(b, mask), a),
            cross_entropy(hconcat(std::vector<Var>{a, b}), {1, 3}),
            sum(minimum(a, b)),
            sum(maximum(a, b)),
            sum(min_const(a, 0.2)),
            mean(concat(a, b)),
            sum(slice_rows(concat(a, b), 2, 3)),
            pick(M, 1, 2),
            sum(lookup(T, 3)),
            cosine(a, b),
            sum(cmul(one_minus(a), b)),
            sum(matmul(transpose(M), column(hconcat(std::vector<Var>{matmul(M, a), matmul(M, b)}), 1))),
            add_n(std::vector<Var>{sum(a), sum(b), sum(a)}),
        };
        return add_n(terms);
    };
    const auto r = grad_check<Real>(build, params, 1e-6, 100);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("lstm_step with zero weights gives a zero hidden state") {
    ParameterSet params;
    Rng rng(1);
    auto w = LstmWeights::create(params, "l", 3, 4, rng);
    w.W->value.setZero();
    Graph g;
    Matrix x = Matrix::Ones(3, 1);
    auto s = lstm_step(g, w, g.constant(x), lstm_zero_state(g, 4));
    CHECK(s.hidden.value().isZero());
}

TEST_CASE("lstm_step matches the straight-line gate equations") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        ParameterSet params;
        auto w = LstmWeights::create(params, "l", 5, 3, rng);
        w.W->value = random_matrix(12, 8, rng);
        w.b->value = random_matrix(12, 1, rng);
        const Matrix x = random_matrix(5, 1, rng), h = random_matrix(3, 1, rng), c = random_matrix(3, 1, rng);
        Graph g;
        auto s = lstm_step(g, w, g.constant(x), LstmState{g.constant(h), g.constant(c)});
        Matrix h_ref, c_ref;
        reference_lstm(w.W->value, w.b->value, x, h, c, h_ref, c_ref);
        CHECK((s.hidden.value() - h_ref).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((s.cell.value() - c_ref).cwiseAbs().maxCoeff() < 1e-12);
        auto again = lstm_step(g, w, g.constant(x), LstmState{g.constant(h), g.constant(c)});
        CHECK(again.hidden.value() == s.hidden.value());
    }
}

TEST_CASE("lstm_step rejects a wrong input size") {
    ParameterSet params;
    Rng rng(1);
    auto w = LstmWeights::create(params, "l", 3, 4, rng);
    Graph g;
    CHECK_THROWS_AS(lstm_step(g, w, g.constant(Matrix::Ones(2, 1)), lstm_zero_state(g, 4)), ShapeError);
}

TEST_CASE("bilstm_encode equals two unidirectional runs") {
    Rng rng(8);
    ParameterSet params;
    auto f = LstmWeights::create(params, "f", 4, 3, rng);
    auto b = LstmWeights::create(params, "b", 4, 3, rng);
    f.W->value = random_matrix(12, 7, rng);
    b.W->value = random_matrix(12, 7, rng);
    std::vector<Matrix> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_matrix(4, 1, rng));

    Graph g;
    std::vector<Var> in;
    for (const auto& x : xs) in.push_back(g.constant(x));
    const auto out = bilstm_encode(g, f, b, in);
    REQUIRE(out.size() == 5);

    std::vector<Matrix> fwd(5), bwd(5);
    Matrix h = Matrix::Zero(3, 1), c = Matrix::Zero(3, 1), h2, c2;
    for (int i = 0; i < 5; ++i) {
        reference_lstm(f.W->value, f.b->value, xs[static_cast<std::size_t>(i)], h, c, h2, c2);
        fwd[static_cast<std::size_t>(i)] = h = h2;
        c = c2;
    }
    h.setZero();
    c.setZero();
    for (int i = 4; i >= 0; --i) {
        reference_lstm(b.W->value, b.b->value, xs[static_cast<std::size_t>(i)], h, c, h2, c2);
        bwd[static_cast<std::size_t>(i)] = h = h2;
        c = c2;
    }
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK((out[i].value().topRows(3) - fwd[i]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((out[i].value().bottomRows(3) - bwd[i]).cwiseAbs().maxCoeff() < 1e-12);
    }

    // reversing the input reverses the output list with halves swapped, when both directions share weights
    Graph g2;
    std::vector<Var> rev;
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) rev.push_back(g2.constant(*it));
    const auto same = bilstm_encode(g2, f, f, rev);
    Graph g3;
    std::vector<Var> fwd_in;
    for (const auto& x : xs) fwd_in.push_back(g3.constant(x));
    const auto orig = bilstm_encode(g3, f, f, fwd_in);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK((same[4 - i].value().topRows(3) - orig[i].value().bottomRows(3)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((same[4 - i].value().bottomRows(3) - orig[i].value().topRows(3)).cwiseAbs().maxCoeff() < 1e-12);
    }

    Graph g4;
    CHECK_THROWS_AS(bilstm_encode(g4, f, b, {}), std::invalid_argument);
}

TEST_CASE("two-step LSTM loss passes grad_check") {
    Rng rng(4);
    ParameterSet params;
    auto w = LstmWeights::create(params, "l", 3, 4, rng);
    w.W->value = random_matrix(16, 7, rng, 0.5);
    w.b->value = random_matrix(16, 1, rng, 0.5);
    const Matrix x1 = random_matrix(3, 1, rng), x2 = random_matrix(3, 1, rng);
    auto build = [&](Graph& g) {
        auto s = lstm_step(g, w, g.constant(x1), lstm_zero_state(g, 4));
        s = lstm_step(g, w, g.constant(x2), s);
        return sum(cmul(s.hidden, s.cell));
    };
    CHECK(grad_check<Real>(build, params, 1e-5, 64).max_rel_error < 1e-4);
}

TEST_CASE("dropout") {
    Rng rng(9);
    Graph g;
    const Matrix x = Matrix::Constant(100, 100, 1.0);
    auto v = g.constant(x);
    CHECK(dropout(v, 0.0, true, rng).value() == x);
    CHECK(dropout(v, 0.5, false, rng).value() == x);
    CHECK(dropout(v, 0.5, true, rng).value().mean() == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS_AS(dropout(v, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("cosine") {
    Graph g;
    Matrix u(3, 1), o(3, 1);
    u << 1, 2, 3;
    o << 3, 0, -1;
    CHECK(cosine(g.constant(u), g.constant(u)).scalar() == doctest::Approx(1.0));
    CHECK(cosine(g.constant(u), g.constant(o)).scalar() == doctest::Approx(0.0));
    CHECK(cosine(g.constant(u), g.constant(Matrix(2 * u))).scalar() == doctest::Approx(1.0));
    CHECK_THROWS_AS(cosine(g.constant(u), g.constant(Matrix::Zero(3, 1))), std::invalid_argument);
}

TEST_CASE("optimizers") {
    Rng rng(1);
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParameterSet params;
        auto& p = params.add("p", 2, 2, Init::Uniform, rng);
        const Matrix before = p.value;
        Adagrad ada({"p"}, {1.0, 1e-10, 0.0});
        Adam adam({"p"}, {});
        ada.step(params);
        adam.step(params);
        CHECK(p.value == before);
    }
    SUBCASE("Adagrad with unit gradient twice") {
        ParameterSet params;
        auto& p = params.add("p", 1, 1, Init::Zeros, rng);
        Adagrad ada({"p"}, {1.0, 0.0, 0.0});
        p.grad(0, 0) = 1;
        ada.step(params);
        CHECK(p.value(0, 0) == doctest::Approx(-1.0));
        ada.step(params);
        CHECK(p.value(0, 0) == doctest::Approx(-1.0 - 1.0 / std::sqrt(2.0)));
    }
    SUBCASE("Adam first step moves by lr") {
        ParameterSet params;
        auto& p = params.add("p", 1, 1, Init::Zeros, rng);
        AdamConfig cfg;
        cfg.eps = 0;
        Adam adam({"p"}, cfg);
        p.grad(0, 0) = 1;
        adam.step(params);
        CHECK(p.value(0, 0) == doctest::Approx(-cfg.lr));
        CHECK(adam.steps() == 1);
    }
    SUBCASE("non-finite gradient rejects the step") {
        ParameterSet params;
        auto& p = params.add("p", 1, 2, Init::Zeros, rng);
        p.grad(0, 1) = std::nan("");
        Adam adam({"p"}, {});
        const auto r = adam.step(params);
        CHECK_FALSE(r.applied);
        CHECK(r.offending == "p");
        CHECK(p.value.isZero());
        CHECK(adam.steps() == 0);
    }
    SUBCASE("steps are deterministic") {
        ParameterSet a, b;
        Rng r1(5), r2(5);
        a.add("p", 3, 3, Init::Uniform, r1);
        b.add("p", 3, 3, Init::Uniform, r2);
        a.at("p").grad.setConstant(0.3);
        b.at("p").grad.setConstant(0.3);
        Adam x({"p"}, {}), y({"p"}, {});
        x.step(a);
        y.step(b);
        CHECK(a.at("p").value == b.at("p").value);
    }
    SUBCASE("global norm clipping") {
        ParameterSet params;
        auto& p = params.add("p", 1, 2, Init::Zeros, rng);
        p.grad << 30, 40;
        Adagrad ada({"p"}, {1.0, 0.0, 5.0});
        const auto r = ada.step(params);
        CHECK(r.grad_norm == doctest::Approx(50.0));
        CHECK(ada.accumulators().at("p")(0, 0) == doctest::Approx(9.0));
    }
}

TEST_CASE("initialization follows the stated scheme") {
    ParameterSet params;
    Rng rng(2);
    auto& W = params.add("W", 30, 30, Init::Uniform, rng);
    auto& b = params.add("b", 30, 1, Init::Zeros, rng);
    CHECK(W.value.cwiseAbs().maxCoeff() <= 0.05);
    CHECK(W.value.cwiseAbs().maxCoeff() > 0.04);
    CHECK(b.value.isZero());
}

TEST_CASE("checkpoint round trip and errors") {
    ParameterSet params;
    Rng rng(3);
    params.add("lm/W", 3, 2, Init::Uniform, rng);
    params.add("pm/b", 4, 1, Init::Uniform, rng);
    Checkpoint c = Checkpoint::from_parameters(params);
    c.header["seed"] = "42";
    c.vocab = {"<pad>", "a", "b"};
    const std::string bytes = serialize_checkpoint(c);
    const Checkpoint d = deserialize_checkpoint(bytes);
    CHECK(d.header == c.header);
    CHECK(d.vocab == c.vocab);
    CHECK(serialize_checkpoint(d) == bytes);

    ParameterSet other;
    d.populate(other);
    CHECK(other.at("lm/W").value == params.at("lm/W").value);

    std::string bad_version = bytes;
    bad_version[8] = static_cast<char>(kCheckpointVersion + 1);
    CHECK_THROWS_AS(deserialize_checkpoint(bad_version), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint("NOTACKPT"), CheckpointError);

    const std::string text = dump_checkpoint_text(d);
    CHECK(text.find("lm/W") != std::string::npos);
    CHECK(text.find("seed=42") != std::string::npos);
}
