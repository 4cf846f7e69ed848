#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/langmodel.hpp"

namespace sonnet {

struct RmConfig {
    int hidden = 100;
    double delta = 0.5;
    int k_neg = 2;
};

// max(0, delta - top1(q) + top2(q)) over the entries of a vector of cosines.
Var margin_top2_loss(Var q, double delta);

class RhymeModel {
public:
    // Registers rm/*; shared/W_chr must already exist.
    RhymeModel(ParameterSet& params, const RmConfig& cfg, Rng& rng);
    RhymeModel(ParameterSet& params, const RmConfig& cfg);

    const RmConfig& config() const { return cfg_; }

    // Last forward state over the word's letters. `cache` avoids re-encoding
    // a word within one graph.
    Var encode(Graph& g, const std::string& word, std::unordered_map<std::string, Var>* cache = nullptr) const;
    Var loss(Graph& g, const RhymeExample& example, std::unordered_map<std::string, Var>* cache = nullptr) const;
    double score(const std::string& w1, const std::string& w2) const;
    // Encoded vector of a word, for repeated scoring against many partners.
    Vector embedding(const std::string& word) const;

    const std::vector<std::string>& parameter_names() const { return names_; }

private:
    void bind(ParameterSet& params);

    RmConfig cfg_;
    Parameter* W_chr_ = nullptr;
    LstmWeights lstm_;
    std::vector<std::string> names_;
};

// Cosine of two vectors, used with RhymeModel::embedding.
double cosine_similarity(const Vector& a, const Vector& b);

}  // namespace sonnet
