#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/langmodel.hpp"
#include "sonnet/pentameter.hpp"
#include "sonnet/rhyme.hpp"

namespace sonnet {

using Stopwords = std::unordered_set<std::string>;

Stopwords load_stopwords(const std::string& path);

struct GenConfig {
    double temperature = 0.7;
    int candidates = 10;
    double select_temperature = 0.1;
    double rhyme_accept = 0.9;     // partners must score at least this
    double nonrhyme_accept = 0.7;  // non-partners must score at most this
    int resample_cap = 1000;
    int restart_budget = 50;
    std::string scheme = "random";  // AABB, ABAB, ABBA or random
    int min_words = 6;
    int max_words = 15;
    int max_tokens = 30;  // words plus punctuation

    void validate() const;
};

inline const std::vector<std::string>& rhyme_schemes() {
    static const std::vector<std::string> s{"AABB", "ABAB", "ABBA"};
    return s;
}

// Words of the poem generated so far.
struct GenHistory {
    std::vector<std::string> words;
    std::unordered_map<std::string, int> counts;
    const Stopwords* stopwords = nullptr;

    void add(const std::string& w);
    bool is_stopword(const std::string& w) const { return stopwords && stopwords->count(w) != 0; }
};

enum class Rejection { None, Unk, RepeatedContent, TooFrequent, RecentRepeat, BannedSymbol };

const char* rejection_name(Rejection r);

// Resampling rules. `line_so_far` holds the current line in decoding order;
// its last three entries are the preceding-word window. Punctuation is exempt
// from the repetition rules on content words and frequent words.
Rejection check_word(const std::string& w, const GenHistory& history, const std::vector<std::string>& line_so_far);

// softmax(-loss / temperature).
std::vector<double> selection_probabilities(const std::vector<double>& losses, double temperature);
std::size_t select_line(const std::vector<double>& losses, double temperature, Rng& rng);

enum class RhymeDecision { Accept, Resample };

// `scores[j]` is the rhyme score of the proposed end word against prior line j.
RhymeDecision enforce_rhyme(const std::string& scheme, std::size_t line_index, const std::vector<double>& scores,
                            const GenConfig& cfg);

struct PairScore {
    int i = 0;
    int j = 0;
    bool partners = false;
    double score = 0.0;
};

struct QuatrainResult {
    bool ok = false;
    std::string scheme;
    std::vector<Tokens> lines;  // original word order
    std::vector<double> line_pm;
    std::vector<std::vector<double>> candidate_pm;
    std::vector<PairScore> pairs;
    int restarts = 0;
    long draws = 0;
    std::uint64_t seed = 0;
    std::string failure;
};

class Generator {
public:
    Generator(const LanguageModel& lm, const PentameterModel& pm, const RhymeModel& rm, const Vocab& vocab,
              Stopwords stopwords, GenConfig cfg);

    const GenConfig& config() const { return cfg_; }

    // Candidate lines (original order) for line `index` of a quatrain whose
    // earlier lines are `prior`. nullopt means the resample cap was hit.
    std::optional<std::vector<Tokens>> generate_candidates(const std::vector<Tokens>& prior, const std::string& scheme,
                                                          const GenHistory& history, int n, Rng& rng,
                                                          long* draws = nullptr) const;
    QuatrainResult generate_quatrain(Rng& rng) const;

    double rhyme_score(const std::string& a, const std::string& b) const;
    double line_score(const Tokens& line) const;

    // Post-hoc check of every constraint on an emitted quatrain; returns
    // human-readable violations.
    std::vector<std::string> verify(const QuatrainResult& q) const;

private:
    std::optional<Tokens> decode_line(Pass& pass, const ContextEncoding& ctx, const DecoderState& start,
                                      const std::vector<Tokens>& prior, const std::string& scheme,
                                      GenHistory history, Rng& rng, long* draws) const;
    const Vector& rhyme_vector(const std::string& w) const;

    const LanguageModel& lm_;
    const PentameterModel& pm_;
    const RhymeModel& rm_;
    const Vocab& vocab_;
    Stopwords stopwords_;
    GenConfig cfg_;
    mutable std::unordered_map<std::string, Vector> rhyme_cache_;
};

}  // namespace sonnet
