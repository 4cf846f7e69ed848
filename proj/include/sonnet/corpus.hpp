#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sonnet/rng.hpp"

namespace sonnet {

using Tokens = std::vector<std::string>;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Poem {
    std::optional<std::string> title;
    std::vector<std::string> lines;
    std::vector<std::size_t> stanza_starts;  // index of the first line of each stanza
};

struct Sonnet {
    std::string id;
    std::vector<Tokens> lines;  // exactly 14

    static constexpr std::size_t kLines = 14;
    static constexpr std::size_t kQuatrains = 3;

    // Lines 4k .. 4k+3 for k in {0, 1, 2}.
    std::vector<Tokens> quatrain(std::size_t k) const;
};

// Word vocabulary with four reserved entries.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kLineStart = 2;
    static constexpr int kLineEnd = 3;
    static constexpr int kReserved = 4;

    Vocab();
    // Reserved tokens followed by `words` in order.
    explicit Vocab(const std::vector<std::string>& words);

    int id(std::string_view word) const;  // kUnk when absent
    const std::string& word(int id) const;
    bool contains(std::string_view word) const;
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }
    // Words in id order without the reserved prefix.
    std::vector<std::string> regular_words() const;
    std::int64_t frequency(int id) const;
    void set_frequency(int id, std::int64_t f);
    // FNV-1a over the word list; stored alongside saved embeddings.
    std::uint64_t hash() const;

private:
    std::vector<std::string> words_;
    std::vector<std::int64_t> freq_;
    std::unordered_map<std::string, int> index_;
};

// FNV-1a over a word list, each word followed by a 0xFF separator.
std::uint64_t word_list_hash(const std::vector<std::string>& words);

// Characters: PAD, UNK, space and the 26 lowercase letters.
class CharVocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSpace = 2;
    static constexpr int kFirstLetter = 3;

    static int id(char c);
    static int size() { return kFirstLetter + 26; }
    static std::vector<int> encode(std::string_view text);
};

struct Split {
    std::vector<Sonnet> train;
    std::vector<Sonnet> dev;
    std::vector<Sonnet> test;
    std::uint64_t seed = 0;
};

struct RhymeExample {
    std::string target;
    std::vector<std::string> references;  // 3 quatrain words first, then negatives
};

struct SonnetFilter {
    double min_mean_words = 8.0;
    double max_mean_words = 11.5;
    double min_mean_chars = 40.0;
    double max_mean_chars = 51.0;
    std::size_t min_words = 6;
    std::size_t max_words = 15;
    std::size_t min_chars = 32;
    std::size_t max_chars = 60;
    double min_letter_ratio = 0.59;
};

// Folds UTF-8 to lowercase-able ASCII: accents stripped, typographic quotes
// and dashes mapped to their ASCII forms. Any other code point becomes the
// placeholder byte 0x1A, which stays inside words and encodes as UNK.
std::string fold_to_ascii(std::string_view utf8);

Tokens tokenize_line(std::string_view raw);
std::string detokenize(const Tokens& tokens);

bool has_letter(std::string_view token);
bool is_punctuation(std::string_view token);
std::size_t word_count(const Tokens& tokens);

// Letters of each word joined by single spaces; apostrophes and other
// punctuation are deleted. Throws DataError when nothing remains.
std::string strip_for_meter(const Tokens& tokens);
// Lowercase letters of a single token, used by the rhyme model.
std::string letters_only(std::string_view token);

// Reads poems. When the input contains "# title" lines each title starts a
// poem and blank lines mark stanzas; otherwise blank lines separate poems.
std::vector<Poem> read_poems(std::istream& in);
std::vector<Poem> read_poems_file(const std::string& path);

bool is_sonnet(const Poem& poem, const SonnetFilter& filter = {});
std::vector<Sonnet> filter_sonnets(const std::vector<Poem>& poems, const SonnetFilter& filter = {});

Vocab build_vocab(const std::vector<Sonnet>& train, int min_freq = 2);

Split partition(std::vector<Sonnet> sonnets, std::array<double, 3> ratios, std::uint64_t seed);

std::array<std::string, 4> quatrain_end_words(const std::vector<Tokens>& quatrain);

std::vector<RhymeExample> make_rhyme_examples(const std::array<std::string, 4>& end_words, int k_neg,
                                              const Vocab& vocab, Rng& rng);

// Sonnet file I/O: "# id" header line followed by 14 detokenized lines.
void write_sonnets(std::ostream& out, const std::vector<Sonnet>& sonnets);
std::vector<Sonnet> read_sonnets(std::istream& in);

}  // namespace sonnet
