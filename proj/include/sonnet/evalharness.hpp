#pragma once

#include <istream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sonnet/corpus.hpp"
#include "sonnet/pentameter.hpp"
#include "sonnet/rhyme.hpp"

namespace sonnet {

// CMU-format pronunciation lexicon. Variant entries "word(2)" merge under
// the base word; lookups are case-insensitive.
class PronDictionary {
public:
    using Phones = std::vector<std::string>;

    static PronDictionary load(const std::string& path);
    static PronDictionary parse(std::istream& in);

    const std::vector<Phones>* lookup(std::string_view word) const;
    bool contains(std::string_view word) const { return lookup(word) != nullptr; }
    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, std::vector<Phones>> entries_;
};

// Vowel stress digits of each pronunciation, 0 -> '0', 1 and 2 -> '1'.
std::set<StressPattern> dict_stress_patterns(const PronDictionary& dict, std::string_view word);
// No two neighbouring syllables share a stress value.
bool is_alternating(const StressPattern& p);

// nullopt when either word is missing from the dictionary.
std::optional<bool> dict_rhyme(const PronDictionary& dict, std::string_view w1, std::string_view w2);

// Last run of vowel letters and everything after it; 'y' counts as a vowel
// only in final position. nullopt for words with no vowel.
std::optional<std::string> baseline_rhyme_key(std::string_view word);
std::optional<bool> rhyme_baseline(std::string_view w1, std::string_view w2);

struct StressResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t considered = 0;
    std::size_t discarded_uncovered = 0;
    std::size_t discarded_nonalternating = 0;  // every pattern non-alternating
    std::size_t any_nonalternating = 0;        // would be discarded under the stricter reading
    std::size_t total = 0;
    std::size_t shared_steps = 0;
    std::size_t steps = 0;
};

// Adds one line's extracted patterns to `r` and refreshes its accuracy.
void tally_stress(StressResult& r, const Tokens& line, const StressExtraction& ex, const PronDictionary& dict);
StressResult stress_accuracy(const PentameterModel& model, const std::vector<Tokens>& lines,
                             const PronDictionary& dict, double threshold = 0.20);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// F1 of the positive class; 0 when undefined.
Prf make_prf(std::size_t tp, std::size_t fp, std::size_t fn);

struct ScoredPair {
    std::string w1;
    std::string w2;
    bool gold = false;
    bool baseline = false;
    double cosine = 0.0;
};

// All 6 unordered end-word pairs of every quatrain.
std::vector<std::pair<std::string, std::string>> quatrain_end_pairs(const std::vector<Sonnet>& sonnets);

struct RhymeEval {
    Prf model;
    Prf baseline;
    std::vector<ScoredPair> pairs;  // pairs covered by the dictionary and the baseline
    std::size_t total_pairs = 0;
    std::size_t uncovered = 0;
};

RhymeEval rhyme_eval(const RhymeModel& model, const std::vector<std::pair<std::string, std::string>>& pairs,
                     const PronDictionary& dict, double threshold = 0.8);
Prf prf_at(const std::vector<ScoredPair>& pairs, double threshold);

struct ErrorTable {
    std::vector<ScoredPair> rhyming;      // gold rhymes, lowest cosine first
    std::vector<ScoredPair> non_rhyming;  // gold non-rhymes, highest cosine first
};

ErrorTable error_table(const std::vector<ScoredPair>& pairs, std::size_t k = 10);
std::string format_error_table(const ErrorTable& table);

}  // namespace sonnet
