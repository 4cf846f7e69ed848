#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/graph.hpp"
#include "sonnet/lstm.hpp"

namespace sonnet {

struct LmConfig {
    int word_dim = 100;
    int char_dim = 50;
    int char_hidden = 50;   // per direction, shared with the pentameter model
    int enc_hidden = 200;   // per direction
    int dec_hidden = 400;
    int attn_dim = 200;
    double dropout = 0.3;
    bool use_char = true;     // LM* and above
    bool use_context = true;  // LM** and above
    bool reversed = true;     // word order reversed within every line
    int context_lines = 3;
};

// Shared character layer: W_chr and the character biLSTM.
struct CharEncoder {
    Parameter* embedding = nullptr;  // |chars| x char_dim
    LstmWeights forward;
    LstmWeights backward;

    static CharEncoder create(ParameterSet& params, int char_dim, int hidden, Rng& rng);
    static CharEncoder bind(ParameterSet& params);

    std::vector<Var> embed(Graph& g, std::string_view text) const;
    // Per-character [forward_j; backward_j] states over `text`.
    std::vector<Var> encode_sequence(Graph& g, std::string_view text) const;
    Eigen::Index output_dim() const { return forward.hidden + backward.hidden; }
};

// One differentiation pass: graph, mode, randomness and per-pass caches.
struct Pass {
    Graph& graph;
    bool train = false;
    Rng* rng = nullptr;
    std::unordered_map<std::string, Var> word_chars;
    std::optional<Var> output_matrix;

    Pass(Graph& g, bool train_mode, Rng& r) : graph(g), train(train_mode), rng(&r) {}
};

struct ContextEncoding {
    std::vector<Var> states;  // selectively filtered h'_i; a single dummy vector when the context is empty
    std::optional<Var> summary;  // [forward_C; backward_1], absent for an empty context
    Var matrix;               // states stacked as columns
    Var keys;                 // W_b applied to `matrix`, shared across decoder steps
    std::vector<Var> gates;   // sigma(W_a h_i + U_a hbar + b_a), empty for the dummy context
    std::vector<Var> raw;     // h_i before filtering
};

struct DecoderState {
    LstmState lstm;
    int position = 0;
};

struct DecodeOutput {
    Var logits;     // |V| x 1, when requested
    Var features;   // s'_t
    std::optional<Var> attention;  // 1 x C
    DecoderState state;
};

class LanguageModel {
public:
    // Registers lm/* parameters; the char encoder must already exist in `params`.
    LanguageModel(ParameterSet& params, const LmConfig& cfg, int vocab_size, Rng& rng);
    // Binds to existing parameters.
    LanguageModel(ParameterSet& params, const LmConfig& cfg);

    const LmConfig& config() const { return cfg_; }
    int vocab_size() const { return vocab_size_; }

    // `words` are context tokens in model order. Encoder states of the first
    // `detach_prefix` words carry values but no gradient.
    ContextEncoding encode_context(Pass& pass, const std::vector<std::string>& words, const Vocab& vocab,
                                   std::size_t detach_prefix = 0) const;
    Var encode_word_chars(Pass& pass, const std::string& word) const;
    DecoderState initial_state(Pass& pass) const;
    // Without logits only the features and state are computed.
    DecodeOutput decode_step(Pass& pass, const std::string& word, const Vocab& vocab, const DecoderState& state,
                             const ContextEncoding& context, bool with_logits = true) const;
    // tanh(W_wrd W_prj), computed once per pass.
    Var output_matrix(Pass& pass) const;

    // Token sequence the model is trained on for one line:
    // [<s>, w_1..w_n, </s>], reversed as a whole in reversed mode.
    std::vector<std::string> line_sequence(const Tokens& line) const;
    // Context tokens for line `index` of `lines`, in model order, and the
    // number of leading tokens older than the previous line.
    std::pair<std::vector<std::string>, std::size_t> context_for(const std::vector<Tokens>& lines,
                                                                std::size_t index) const;

    struct LineNll {
        Var total;  // summed negative log likelihood
        std::size_t tokens = 0;
    };
    LineNll line_nll(Pass& pass, const Tokens& line, const ContextEncoding& context, const Vocab& vocab) const;
    // Mean per-token cross-entropy of one line.
    Var line_loss(Pass& pass, const Tokens& line, const ContextEncoding& context, const Vocab& vocab) const;
    // Mean per-token cross-entropy over all lines of a sonnet (or any line list).
    LineNll sonnet_nll(Pass& pass, const std::vector<Tokens>& lines, const Vocab& vocab) const;

    // exp(total NLL / predicted tokens) with dropout off.
    double perplexity(const std::vector<Sonnet>& sonnets, const Vocab& vocab) const;

    const std::vector<std::string>& parameter_names() const { return names_; }

private:
    void bind(ParameterSet& params);

    LmConfig cfg_;
    int vocab_size_ = 0;
    CharEncoder chars_;
    Parameter* W_wrd_ = nullptr;
    Parameter* W_prj_ = nullptr;
    Parameter* b_out_ = nullptr;
    LstmWeights decoder_;
    LstmWeights enc_fwd_;
    LstmWeights enc_bwd_;
    Parameter* W_a_ = nullptr;
    Parameter* U_a_ = nullptr;
    Parameter* b_a_ = nullptr;
    Parameter* W_b_ = nullptr;
    Parameter* U_b_ = nullptr;
    Parameter* b_b_ = nullptr;
    Parameter* v_b_ = nullptr;
    Parameter* W_gate_ = nullptr;  // [W_z; W_r]
    Parameter* U_gate_ = nullptr;  // [U_z; U_r]
    Parameter* b_gate_ = nullptr;
    Parameter* W_cand_ = nullptr;
    Parameter* U_cand_ = nullptr;
    Parameter* b_cand_ = nullptr;
    Parameter* dummy_ = nullptr;
    std::vector<std::string> names_;
};

// Reverses token order; its own inverse.
Tokens reverse_tokens(Tokens tokens);

}  // namespace sonnet
