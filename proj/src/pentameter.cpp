#include "sonnet/pentameter.hpp"

#include <cstdio>
#include <sstream>

namespace sonnet {

bool is_vowel_char(char c) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

Var repeat_loss(const std::vector<Var>& f) {
    if (f.empty()) throw std::invalid_argument("repeat_loss: no steps");
    std::vector<Var> terms;
    Var cum = f.front();
    for (std::size_t t = 1; t < f.size(); ++t) {
        terms.push_back(sum(minimum(f[t], cum)));
        cum = add(cum, f[t]);
    }
    if (terms.empty()) return f.front().graph->constant(Matrix::Zero(1, 1));
    return add_n(terms);
}

Var coverage_loss(const std::vector<Var>& f, const std::vector<bool>& vowel, double C) {
    if (f.empty()) throw std::invalid_argument("coverage_loss: no steps");
    Graph& g = *f.front().graph;
    const Eigen::Index M = f.front().cols();
    if (static_cast<Eigen::Index>(vowel.size()) != M) throw ShapeError("coverage_loss: vowel mask length mismatch");
    Matrix sel = Matrix::Zero(M, 1);
    for (Eigen::Index j = 0; j < M; ++j) sel(j, 0) = vowel[static_cast<std::size_t>(j)] ? Real(1) : Real(0);
    Var gap = relu(shift(scale(add_n(f), Real(-1)), static_cast<Real>(C)));
    return matmul(gap, g.constant(sel));
}

PentameterModel::PentameterModel(ParameterSet& params, const PmConfig& cfg, Rng& rng) : cfg_(cfg) {
    const CharEncoder chars = CharEncoder::bind(params);
    const Eigen::Index U = chars.output_dim();
    const int A = cfg.attn_dim;
    LstmWeights::create(params, "pm/decoder", U, cfg.dec_hidden, rng);
    params.add("pm/W_c", A, cfg.dec_hidden, Init::Uniform, rng);
    params.add("pm/U_c", A, 1, Init::Uniform, rng);
    params.add("pm/b_c", A, 1, Init::Zeros, rng);
    params.add("pm/v_c", 1, A, Init::Uniform, rng);
    params.add("pm/W_d", A, U, Init::Uniform, rng);
    params.add("pm/U_d", A, cfg.dec_hidden, Init::Uniform, rng);
    params.add("pm/b_d", A, 1, Init::Zeros, rng);
    params.add("pm/v_d", 1, A, Init::Uniform, rng);
    params.add("pm/W_e", 1, U, Init::Uniform, rng);
    params.add("pm/b_e", 1, 1, Init::Zeros, rng);
    params.add("pm/u0", U, 1, Init::Uniform, rng);
    bind(params);
}

PentameterModel::PentameterModel(ParameterSet& params, const PmConfig& cfg) : cfg_(cfg) { bind(params); }

void PentameterModel::bind(ParameterSet& params) {
    if (!(cfg_.T > 0.0) || cfg_.alpha < 0.0 || cfg_.beta < 0.0 || !(cfg_.C > 0.0 && cfg_.C <= 10.0))
        throw std::invalid_argument("pentameter: need T > 0, alpha, beta >= 0 and 0 < C <= 10");
    chars_ = CharEncoder::bind(params);
    decoder_ = LstmWeights::bind(params, "pm/decoder");
    W_c_ = &params.at("pm/W_c");
    U_c_ = &params.at("pm/U_c");
    b_c_ = &params.at("pm/b_c");
    v_c_ = &params.at("pm/v_c");
    W_d_ = &params.at("pm/W_d");
    U_d_ = &params.at("pm/U_d");
    b_d_ = &params.at("pm/b_d");
    v_d_ = &params.at("pm/v_d");
    W_e_ = &params.at("pm/W_e");
    b_e_ = &params.at("pm/b_e");
    u0_ = &params.at("pm/u0");
    if (decoder_.input != chars_.output_dim()) throw ShapeError("pentameter: decoder input does not match char encoder");
    names_ = params.names_with_prefix("pm/");
    for (const auto& n : params.names_with_prefix("shared/")) names_.push_back(n);
}

PmLoss PentameterModel::loss(Graph& g, const std::string& chars) const {
    const Eigen::Index M = static_cast<Eigen::Index>(chars.size());
    std::vector<bool> letter(chars.size()), vowel(chars.size());
    bool any_vowel = false;
    for (std::size_t j = 0; j < chars.size(); ++j) {
        letter[j] = chars[j] != ' ';
        vowel[j] = is_vowel_char(chars[j]);
        any_vowel = any_vowel || vowel[j];
    }
    if (!any_vowel) throw DataError("pentameter: line has no vowel: '" + chars + "'");

    Var Uc = hconcat(chars_.encode_sequence(g, chars));  // 2H x M
    Matrix positions(1, M);
    for (Eigen::Index j = 0; j < M; ++j) positions(0, j) = static_cast<Real>(j + 1);
    Var J = g.constant(positions);
    const Real inv_two_t2 = static_cast<Real>(1.0 / (2.0 * cfg_.T * cfg_.T));

    Var keys_bias = g.parameter(*b_d_);
    Var Wd = g.parameter(*W_d_);
    Var vd = g.parameter(*v_d_);
    auto state = lstm_zero_state(g, decoder_.hidden);
    Var input = g.parameter(*u0_);
    Var nu = g.constant(Matrix::Zero(1, 1));

    PmLoss out;
    out.trace.chars = chars;
    out.trace.f.resize(PmConfig::kSteps, M);
    std::vector<Var> f_steps, ent_terms;
    for (int t = 0; t < PmConfig::kSteps; ++t) {
        state = lstm_step(g, decoder_, input, state);
        Var gt = state.hidden;
        Var score = matmul(g.parameter(*v_c_),
                           tanh(add(add(matmul(g.parameter(*W_c_), gt), matmul(g.parameter(*U_c_), nu)),
                                    g.parameter(*b_c_))));
        nu = min_const(add(sigmoid(score), nu), Real(1));
        Var mu = scale(nu, static_cast<Real>(M));
        Var diff = sub(J, mu);
        Var logp = scale(cmul(diff, diff), -inv_two_t2);  // 1 x M
        Var Uprime = cmul(Uc, exp(logp));
        Var d = matmul(vd, tanh(add(matmul(Wd, Uprime), add(matmul(g.parameter(*U_d_), gt), keys_bias))));
        Var f = masked_softmax(add(d, logp), letter);
        Var ustar = matmul(Uc, transpose(f));
        Var z = add(matmul(g.parameter(*W_e_), ustar), g.parameter(*b_e_));
        // -log P(S-) on even steps, -log P(S+) = -log sigma(-z) on odd ones.
        ent_terms.push_back(scale(log_sigmoid(canonical_stress(t) == '0' ? z : scale(z, Real(-1))), Real(-1)));
        f_steps.push_back(f);
        out.trace.f.row(t) = f.value();
        out.trace.nu.push_back(static_cast<double>(nu.scalar()));
        out.trace.p_unstressed.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(z.scalar()))));
        input = ustar;
    }
    out.ent = add_n(ent_terms);
    out.rep = repeat_loss(f_steps);
    out.cov = coverage_loss(f_steps, vowel, cfg_.C);
    out.total = add_n(std::vector<Var>{out.ent, scale(out.rep, static_cast<Real>(cfg_.alpha)),
                                       scale(out.cov, static_cast<Real>(cfg_.beta))});
    return out;
}

double PentameterModel::conformity(const Tokens& line) const {
    Graph g(false);
    return static_cast<double>(loss(g, line).total.scalar());
}

AttentionTrace PentameterModel::trace(const Tokens& line) const {
    Graph g(false);
    return loss(g, line).trace;
}

StressExtraction extract_stress(const AttentionTrace& trace, double threshold) {
    StressExtraction out;
    std::vector<int> word_of(trace.chars.size(), -1);
    int w = -1;
    bool in_word = false;
    for (std::size_t j = 0; j < trace.chars.size(); ++j) {
        if (trace.chars[j] == ' ') {
            in_word = false;
            continue;
        }
        if (!in_word) {
            out.words.push_back({"", ""});
            ++w;
            in_word = true;
        }
        out.words[static_cast<std::size_t>(w)].word += trace.chars[j];
        word_of[j] = w;
    }
    for (Eigen::Index t = 0; t < trace.f.rows(); ++t) {
        std::vector<bool> hit(out.words.size(), false);
        for (Eigen::Index j = 0; j < trace.f.cols(); ++j) {
            const int k = word_of[static_cast<std::size_t>(j)];
            if (k >= 0 && static_cast<double>(trace.f(t, j)) >= threshold) hit[static_cast<std::size_t>(k)] = true;
        }
        int n = 0;
        for (std::size_t k = 0; k < hit.size(); ++k) {
            if (!hit[k]) continue;
            out.words[k].pattern += canonical_stress(static_cast<int>(t));
            ++n;
        }
        if (n > 1) ++out.shared_steps;
    }
    return out;
}

std::string trace_to_csv(const AttentionTrace& trace) {
    std::ostringstream os;
    os << "step,nu,p_unstressed";
    for (char c : trace.chars) os << ',' << (c == ' ' ? std::string("_") : std::string(1, c));
    os << '\n';
    char buf[32];
    for (Eigen::Index t = 0; t < trace.f.rows(); ++t) {
        os << (t + 1);
        std::snprintf(buf, sizeof(buf), ",%.6f", trace.nu[static_cast<std::size_t>(t)]);
        os << buf;
        std::snprintf(buf, sizeof(buf), ",%.6f", trace.p_unstressed[static_cast<std::size_t>(t)]);
        os << buf;
        for (Eigen::Index j = 0; j < trace.f.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), ",%.6f", static_cast<double>(trace.f(t, j)));
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace sonnet
