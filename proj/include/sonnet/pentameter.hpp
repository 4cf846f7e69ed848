#pragma once

#include <string>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/langmodel.hpp"

namespace sonnet {

struct PmConfig {
    int dec_hidden = 100;
    int attn_dim = 50;       // hidden width of the position and attention scorers
    double T = 2.0;          // Gaussian std in characters
    double alpha = 1.0;      // repeat loss weight
    double beta = 1.0;       // coverage loss weight
    double C = 0.6;          // coverage threshold
    static constexpr int kSteps = 10;
};

// Stress patterns are strings over '0' (unstressed) and '1' (stressed).
using StressPattern = std::string;

// Canonical target for step t (0-based): even steps unstressed, odd stressed.
inline char canonical_stress(int t) { return t % 2 == 0 ? '0' : '1'; }

bool is_vowel_char(char c);

struct AttentionTrace {
    std::string chars;                // the letters-and-spaces line
    Matrix f;                         // kSteps x M attention weights
    std::vector<double> nu;           // normalized positions after each step
    std::vector<double> p_unstressed; // P(S-) per step
};

struct PmLoss {
    Var ent;
    Var rep;
    Var cov;
    Var total;
    AttentionTrace trace;
};

// Positional update in normalized space: returns nu_t = min(mu' + nu_prev, 1).
inline double position_update(double mu_prime, double nu_prev) { return std::min(mu_prime + nu_prev, 1.0); }

// L_rep = sum_t sum_j min(f^t_j, sum_{t'<t} f^t'_j) over 1 x M rows.
Var repeat_loss(const std::vector<Var>& f);
// L_cov = sum over vowel positions of relu(C - sum_t f^t_j).
Var coverage_loss(const std::vector<Var>& f, const std::vector<bool>& vowel, double C);

class PentameterModel {
public:
    // Registers pm/* parameters; the shared char encoder must already exist.
    PentameterModel(ParameterSet& params, const PmConfig& cfg, Rng& rng);
    PentameterModel(ParameterSet& params, const PmConfig& cfg);

    const PmConfig& config() const { return cfg_; }

    // `chars` is the output of strip_for_meter.
    PmLoss loss(Graph& g, const std::string& chars) const;
    PmLoss loss(Graph& g, const Tokens& line) const { return loss(g, strip_for_meter(line)); }

    // Evaluation-mode L_pm; lower means more iambic.
    double conformity(const Tokens& line) const;
    AttentionTrace trace(const Tokens& line) const;

    const std::vector<std::string>& parameter_names() const { return names_; }

private:
    void bind(ParameterSet& params);

    PmConfig cfg_;
    CharEncoder chars_;
    LstmWeights decoder_;
    Parameter* W_c_ = nullptr;
    Parameter* U_c_ = nullptr;
    Parameter* b_c_ = nullptr;
    Parameter* v_c_ = nullptr;
    Parameter* W_d_ = nullptr;
    Parameter* U_d_ = nullptr;
    Parameter* b_d_ = nullptr;
    Parameter* v_d_ = nullptr;
    Parameter* W_e_ = nullptr;
    Parameter* b_e_ = nullptr;
    Parameter* u0_ = nullptr;
    std::vector<std::string> names_;
};

struct WordStress {
    std::string word;
    StressPattern pattern;
};

struct StressExtraction {
    std::vector<WordStress> words;
    int shared_steps = 0;  // steps that gave stress to more than one word
};

// Assigns step t's canonical stress to every word holding a character with
// attention >= threshold at that step.
StressExtraction extract_stress(const AttentionTrace& trace, double threshold = 0.20);

// Rows = steps, columns = characters; header row lists the characters.
std::string trace_to_csv(const AttentionTrace& trace);

}  // namespace sonnet
