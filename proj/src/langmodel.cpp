#include "sonnet/langmodel.hpp"

#include <algorithm>
#include <cmath>

namespace sonnet {

CharEncoder CharEncoder::create(ParameterSet& params, int char_dim, int hidden, Rng& rng) {
    CharEncoder c;
    c.embedding = &params.add("shared/W_chr", CharVocab::size(), char_dim, Init::Uniform, rng);
    c.forward = LstmWeights::create(params, "shared/char_fwd", char_dim, hidden, rng);
    c.backward = LstmWeights::create(params, "shared/char_bwd", char_dim, hidden, rng);
    return c;
}

CharEncoder CharEncoder::bind(ParameterSet& params) {
    CharEncoder c;
    c.embedding = &params.at("shared/W_chr");
    c.forward = LstmWeights::bind(params, "shared/char_fwd");
    c.backward = LstmWeights::bind(params, "shared/char_bwd");
    return c;
}

std::vector<Var> CharEncoder::embed(Graph& g, std::string_view text) const {
    if (text.empty()) throw std::invalid_argument("char encoder: empty text");
    auto table = g.parameter(*embedding);
    std::vector<Var> out;
    out.reserve(text.size());
    for (int id : CharVocab::encode(text)) out.push_back(lookup(table, id));
    return out;
}

std::vector<Var> CharEncoder::encode_sequence(Graph& g, std::string_view text) const {
    return bilstm_encode(g, forward, backward, embed(g, text));
}

Tokens reverse_tokens(Tokens tokens) {
    std::reverse(tokens.begin(), tokens.end());
    return tokens;
}

// ---------------------------------------------------------------------------

LanguageModel::LanguageModel(ParameterSet& params, const LmConfig& cfg, int vocab_size, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
    if (vocab_size <= Vocab::kReserved) throw std::invalid_argument("language model: vocabulary too small");
    const int char_out = 2 * cfg.char_hidden;
    const int dec_in = cfg.word_dim + (cfg.use_char ? char_out : 0);
    params.add("lm/W_wrd", vocab_size, cfg.word_dim, Init::Uniform, rng);
    params.add("lm/W_prj", cfg.word_dim, cfg.dec_hidden, Init::Uniform, rng);
    params.add("lm/b_out", vocab_size, 1, Init::Zeros, rng);
    LstmWeights::create(params, "lm/decoder", dec_in, cfg.dec_hidden, rng);
    if (cfg.use_context) {
        const int enc_out = 2 * cfg.enc_hidden;
        LstmWeights::create(params, "lm/enc_fwd", cfg.word_dim, cfg.enc_hidden, rng);
        LstmWeights::create(params, "lm/enc_bwd", cfg.word_dim, cfg.enc_hidden, rng);
        params.add("lm/W_a", enc_out, enc_out, Init::Uniform, rng);
        params.add("lm/U_a", enc_out, enc_out, Init::Uniform, rng);
        params.add("lm/b_a", enc_out, 1, Init::Zeros, rng);
        params.add("lm/W_b", cfg.attn_dim, enc_out, Init::Uniform, rng);
        params.add("lm/U_b", cfg.attn_dim, cfg.dec_hidden, Init::Uniform, rng);
        params.add("lm/b_b", cfg.attn_dim, 1, Init::Zeros, rng);
        params.add("lm/v_b", 1, cfg.attn_dim, Init::Uniform, rng);
        params.add("lm/W_gate", 2 * cfg.dec_hidden, enc_out, Init::Uniform, rng);
        params.add("lm/U_gate", 2 * cfg.dec_hidden, cfg.dec_hidden, Init::Uniform, rng);
        params.add("lm/b_gate", 2 * cfg.dec_hidden, 1, Init::Zeros, rng);
        params.add("lm/W_cand", cfg.dec_hidden, enc_out, Init::Uniform, rng);
        params.add("lm/U_cand", cfg.dec_hidden, cfg.dec_hidden, Init::Uniform, rng);
        params.add("lm/b_cand", cfg.dec_hidden, 1, Init::Zeros, rng);
        params.add("lm/dummy_context", enc_out, 1, Init::Uniform, rng);
    }
    bind(params);
}

LanguageModel::LanguageModel(ParameterSet& params, const LmConfig& cfg) : cfg_(cfg) {
    vocab_size_ = static_cast<int>(params.at("lm/W_wrd").value.rows());
    bind(params);
}

void LanguageModel::bind(ParameterSet& params) {
    chars_ = CharEncoder::bind(params);
    W_wrd_ = &params.at("lm/W_wrd");
    W_prj_ = &params.at("lm/W_prj");
    b_out_ = &params.at("lm/b_out");
    decoder_ = LstmWeights::bind(params, "lm/decoder");
    const Eigen::Index expected_in = cfg_.word_dim + (cfg_.use_char ? chars_.output_dim() : 0);
    if (W_wrd_->value.cols() != cfg_.word_dim || decoder_.input != expected_in || decoder_.hidden != cfg_.dec_hidden)
        throw ShapeError("language model: parameters do not match configuration");
    if (cfg_.use_context) {
        enc_fwd_ = LstmWeights::bind(params, "lm/enc_fwd");
        enc_bwd_ = LstmWeights::bind(params, "lm/enc_bwd");
        W_a_ = &params.at("lm/W_a");
        U_a_ = &params.at("lm/U_a");
        b_a_ = &params.at("lm/b_a");
        W_b_ = &params.at("lm/W_b");
        U_b_ = &params.at("lm/U_b");
        b_b_ = &params.at("lm/b_b");
        v_b_ = &params.at("lm/v_b");
        W_gate_ = &params.at("lm/W_gate");
        U_gate_ = &params.at("lm/U_gate");
        b_gate_ = &params.at("lm/b_gate");
        W_cand_ = &params.at("lm/W_cand");
        U_cand_ = &params.at("lm/U_cand");
        b_cand_ = &params.at("lm/b_cand");
        dummy_ = &params.at("lm/dummy_context");
    }
    names_ = params.names_with_prefix("lm/");
    if (cfg_.use_char)
        for (const auto& n : params.names_with_prefix("shared/")) names_.push_back(n);
}

Var LanguageModel::output_matrix(Pass& pass) const {
    if (!pass.output_matrix) {
        Graph& g = pass.graph;
        pass.output_matrix = tanh(matmul(g.parameter(*W_wrd_), g.parameter(*W_prj_)));
    }
    return *pass.output_matrix;
}

Var LanguageModel::encode_word_chars(Pass& pass, const std::string& word) const {
    if (word.empty()) throw std::invalid_argument("encode_word_chars: empty word");
    auto it = pass.word_chars.find(word);
    if (it != pass.word_chars.end()) return it->second;
    Graph& g = pass.graph;
    const auto inputs = chars_.embed(g, word);
    auto fs = lstm_zero_state(g, chars_.forward.hidden);
    for (const auto& x : inputs) fs = lstm_step(g, chars_.forward, x, fs);
    auto bs = lstm_zero_state(g, chars_.backward.hidden);
    for (auto x = inputs.rbegin(); x != inputs.rend(); ++x) bs = lstm_step(g, chars_.backward, *x, bs);
    Var enc = concat(fs.hidden, bs.hidden);
    pass.word_chars.emplace(word, enc);
    return enc;
}

ContextEncoding LanguageModel::encode_context(Pass& pass, const std::vector<std::string>& words, const Vocab& vocab,
                                              std::size_t detach_prefix) const {
    if (!cfg_.use_context) throw std::logic_error("encode_context: context encoder disabled");
    Graph& g = pass.graph;
    ContextEncoding ctx;
    if (words.empty()) {
        ctx.states.push_back(g.parameter(*dummy_));
        ctx.matrix = ctx.states.front();
        ctx.keys = matmul(g.parameter(*W_b_), ctx.matrix);
        return ctx;
    }
    auto table = g.parameter(*W_wrd_);
    std::vector<Var> inputs;
    for (const auto& w : words) {
        const int id = vocab.id(w);
        if (id < 0 || id >= vocab_size_) throw std::out_of_range("encode_context: id out of vocabulary range");
        inputs.push_back(dropout(lookup(table, id), cfg_.dropout, pass.train, *pass.rng));
    }
    const std::size_t n = inputs.size();
    detach_prefix = std::min(detach_prefix, n);
    std::vector<Var> fwd(n), bwd(n);
    auto fs = lstm_zero_state(g, enc_fwd_.hidden);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == detach_prefix && i > 0) fs = {detach(fs.hidden), detach(fs.cell)};
        fs = lstm_step(g, enc_fwd_, inputs[i], fs);
        fwd[i] = fs.hidden;
    }
    auto bs = lstm_zero_state(g, enc_bwd_.hidden);
    for (std::size_t i = n; i-- > 0;) {
        bs = lstm_step(g, enc_bwd_, inputs[i], bs);
        bwd[i] = bs.hidden;
    }
    for (std::size_t i = 0; i < n; ++i) {
        Var h = concat(fwd[i], bwd[i]);
        if (i < detach_prefix) h = detach(h);
        ctx.raw.push_back(dropout(h, cfg_.dropout, pass.train, *pass.rng));
    }
    Var back_first = detach_prefix > 0 ? detach(bwd[0]) : bwd[0];
    ctx.summary = concat(fwd[n - 1], back_first);
    Var H = hconcat(ctx.raw);
    Var gate_bias = add(matmul(g.parameter(*U_a_), *ctx.summary), g.parameter(*b_a_));
    Var gates = sigmoid(add(matmul(g.parameter(*W_a_), H), gate_bias));
    ctx.matrix = cmul(H, gates);
    for (std::size_t i = 0; i < n; ++i) {
        ctx.gates.push_back(column(gates, static_cast<Eigen::Index>(i)));
        ctx.states.push_back(column(ctx.matrix, static_cast<Eigen::Index>(i)));
    }
    ctx.keys = matmul(g.parameter(*W_b_), ctx.matrix);
    return ctx;
}

DecoderState LanguageModel::initial_state(Pass& pass) const {
    return DecoderState{lstm_zero_state(pass.graph, decoder_.hidden), 0};
}

DecodeOutput LanguageModel::decode_step(Pass& pass, const std::string& word, const Vocab& vocab,
                                        const DecoderState& state, const ContextEncoding& context,
                                        bool with_logits) const {
    Graph& g = pass.graph;
    const int id = vocab.id(word);
    Var x = dropout(lookup(g.parameter(*W_wrd_), id), cfg_.dropout, pass.train, *pass.rng);
    if (cfg_.use_char) x = concat(x, encode_word_chars(pass, word));
    DecodeOutput out;
    out.state.lstm = lstm_step(g, decoder_, x, state.lstm);
    out.state.position = state.position + 1;
    Var s = dropout(out.state.lstm.hidden, cfg_.dropout, pass.train, *pass.rng);
    if (cfg_.use_context) {
        Var query = add(matmul(g.parameter(*U_b_), s), g.parameter(*b_b_));
        Var scores = matmul(g.parameter(*v_b_), tanh(add(context.keys, query)));
        Var attn = softmax(scores);
        Var attended = matmul(context.matrix, transpose(attn));
        // GRU-style merge of the decoder state with the attended context.
        Var zr = sigmoid(add(add(matmul(g.parameter(*W_gate_), attended), matmul(g.parameter(*U_gate_), s)),
                             g.parameter(*b_gate_)));
        const Eigen::Index D = cfg_.dec_hidden;
        Var z = slice_rows(zr, 0, D);
        Var r = slice_rows(zr, D, D);
        Var cand = tanh(add(add(matmul(g.parameter(*W_cand_), attended), matmul(g.parameter(*U_cand_), cmul(r, s))),
                            g.parameter(*b_cand_)));
        out.features = add(cmul(one_minus(z), s), cmul(z, cand));
        out.attention = attn;
    } else {
        out.features = s;
    }
    if (with_logits) out.logits = add(matmul(output_matrix(pass), out.features), g.parameter(*b_out_));
    return out;
}

std::vector<std::string> LanguageModel::line_sequence(const Tokens& line) const {
    std::vector<std::string> seq;
    seq.reserve(line.size() + 2);
    seq.push_back("<s>");
    seq.insert(seq.end(), line.begin(), line.end());
    seq.push_back("</s>");
    if (cfg_.reversed) std::reverse(seq.begin(), seq.end());
    return seq;
}

std::pair<std::vector<std::string>, std::size_t> LanguageModel::context_for(const std::vector<Tokens>& lines,
                                                                           std::size_t index) const {
    std::vector<std::string> words;
    std::size_t prefix = 0;
    const std::size_t first = index > static_cast<std::size_t>(cfg_.context_lines) ? index - static_cast<std::size_t>(cfg_.context_lines) : 0;
    for (std::size_t k = first; k < index; ++k) {
        if (k + 1 == index) prefix = words.size();
        const Tokens line = cfg_.reversed ? reverse_tokens(lines[k]) : lines[k];
        words.insert(words.end(), line.begin(), line.end());
    }
    return {words, prefix};
}

LanguageModel::LineNll LanguageModel::line_nll(Pass& pass, const Tokens& line, const ContextEncoding& context,
                                               const Vocab& vocab) const {
    const auto seq = line_sequence(line);
    DecoderState state = initial_state(pass);
    std::vector<Var> features;
    std::vector<int> targets;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        auto step = decode_step(pass, seq[t], vocab, state, context, false);
        features.push_back(step.features);
        targets.push_back(vocab.id(seq[t + 1]));
        state = step.state;
    }
    Graph& g = pass.graph;
    Var logits = add(matmul(output_matrix(pass), hconcat(features)), g.parameter(*b_out_));
    return {cross_entropy(logits, targets), targets.size()};
}

Var LanguageModel::line_loss(Pass& pass, const Tokens& line, const ContextEncoding& context, const Vocab& vocab) const {
    if (line.empty()) throw std::invalid_argument("line_loss: empty line");
    auto nll = line_nll(pass, line, context, vocab);
    return scale(nll.total, Real(1) / static_cast<Real>(nll.tokens));
}

LanguageModel::LineNll LanguageModel::sonnet_nll(Pass& pass, const std::vector<Tokens>& lines, const Vocab& vocab) const {
    std::vector<Var> parts;
    std::size_t tokens = 0;
    ContextEncoding empty;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        ContextEncoding ctx;
        if (cfg_.use_context) {
            auto [words, prefix] = context_for(lines, i);
            ctx = encode_context(pass, words, vocab, prefix);
        }
        auto nll = line_nll(pass, lines[i], cfg_.use_context ? ctx : empty, vocab);
        parts.push_back(nll.total);
        tokens += nll.tokens;
    }
    return {add_n(parts), tokens};
}

double LanguageModel::perplexity(const std::vector<Sonnet>& sonnets, const Vocab& vocab) const {
    double total = 0.0;
    std::size_t tokens = 0;
    Rng unused(0);
    for (const auto& s : sonnets) {
        Graph g(false);
        Pass pass(g, false, unused);
        auto nll = sonnet_nll(pass, s.lines, vocab);
        total += static_cast<double>(nll.total.scalar());
        tokens += nll.tokens;
    }
    if (tokens == 0) throw std::invalid_argument("perplexity: no tokens");
    return std::exp(total / static_cast<double>(tokens));
}

}  // namespace sonnet
