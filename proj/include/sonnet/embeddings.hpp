#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/graph.hpp"

namespace sonnet {

struct EmbeddingMatrix {
    std::vector<std::string> words;
    Matrix vectors;  // |words| x d

    int dim() const { return static_cast<int>(vectors.cols()); }
    int find(const std::string& word) const;  // -1 when absent
    std::uint64_t vocab_hash() const { return word_list_hash(words); }

private:
    mutable std::unordered_map<std::string, int> index_;
};

struct SkipGramConfig {
    int dim = 100;
    int window = 5;
    int k_negative = 5;
    int epochs = 5;
    double lr = 0.025;  // decays linearly to lr * 1e-4
    int min_count = 1;
};

struct SkipGramResult {
    EmbeddingMatrix embeddings;
    std::vector<double> epoch_loss;  // mean negative-sampling loss per (center, context) pair
};

// Skip-gram with negative sampling over sentences; negatives follow the
// unigram distribution raised to 0.75. Single-threaded and deterministic.
SkipGramResult train_skipgram(const std::vector<Tokens>& sentences, const SkipGramConfig& cfg, Rng& rng);

// Text format: "|V| d vocab-hash=<hex>" then one word and d values per line.
// The hash field is optional on load.
void save_embeddings(const EmbeddingMatrix& emb, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path, std::optional<std::uint64_t> expected_hash = std::nullopt);

// Copies rows of `emb` into `table` for every vocabulary word it covers.
// Returns the number of rows copied; other rows keep their values.
int initialize_from_embeddings(Matrix& table, const Vocab& vocab, const EmbeddingMatrix& emb);

}  // namespace sonnet
