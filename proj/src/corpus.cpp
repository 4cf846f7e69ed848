#include "sonnet/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace sonnet {

namespace {

constexpr char kPlaceholder = '\x1A';

// Base letters for U+00C0..U+00FF.
const char* const kLatin1[64] = {
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", " ", "o", "u", "u", "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", " ", "o", "u", "u", "u", "u", "y", "th", "y"};

// Base letters for U+0100..U+017F (Latin Extended-A).
constexpr std::string_view kLatinExtA =
    "AaAaAaCcCcCcCcDdDdEeEeEeEeEeGgGgGgGgHhHhIiIiIiIiIiIiJjKkkLlLlLlLlLlNnNnNnnNnOoOoOoOoRrRrRrSsSsSsSsTtTtTtUuUuUuUuUuUu"
    "WwYyYZzZzZzs";
static_assert(kLatinExtA.size() == 128);

std::string fold_codepoint(char32_t cp) {
    if (cp < 0x80) return std::string(1, static_cast<char>(cp));
    if (cp >= 0xC0 && cp <= 0xFF) return kLatin1[cp - 0xC0];
    if (cp >= 0x100 && cp <= 0x17F) return std::string(1, kLatinExtA[cp - 0x100]);
    switch (cp) {
        case 0x2018: case 0x2019: case 0x201B: case 0x02BC: case 0x2032: return "'";
        case 0x201C: case 0x201D: case 0x201E: case 0x00AB: case 0x00BB: return "\"";
        case 0x2010: case 0x2011: case 0x2012: case 0x2013: case 0x2014: case 0x2015: return "-";
        case 0x2026: return "...";
        case 0x00A0: return " ";
        default: break;
    }
    if ((cp >= 0xA1 && cp <= 0xBF) || (cp >= 0x2000 && cp <= 0x206F)) return " ";
    return std::string(1, kPlaceholder);
}

bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == kPlaceholder;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct LineStats {
    std::size_t words = 0;
    std::size_t chars = 0;
    std::size_t letters = 0;
};

// Measured on the detokenized form so that filtering written-out sonnets again
// gives the same answer.
LineStats line_stats(const std::string& raw) {
    const std::string line = detokenize(tokenize_line(raw));
    LineStats s;
    s.chars = line.size();
    for (char c : line)
        if (std::isalpha(static_cast<unsigned char>(c))) ++s.letters;
    s.words = word_count(tokenize_line(line));
    return s;
}

}  // namespace

std::vector<Tokens> Sonnet::quatrain(std::size_t k) const {
    if (k >= kQuatrains || lines.size() < 4 * (k + 1)) throw std::out_of_range("quatrain index");
    return {lines.begin() + static_cast<std::ptrdiff_t>(4 * k), lines.begin() + static_cast<std::ptrdiff_t>(4 * k + 4)};
}

// ---------------------------------------------------------------------------
// Vocabularies

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& words) {
    words_ = {"<pad>", "<unk>", "<s>", "</s>"};
    for (const auto& w : words) {
        if (index_.count(w) || w == "<pad>" || w == "<unk>" || w == "<s>" || w == "</s>")
            throw std::invalid_argument("vocab: duplicate or reserved word '" + w + "'");
        index_.emplace(w, static_cast<int>(words_.size()));
        words_.push_back(w);
    }
    for (int i = 0; i < kReserved; ++i) index_.emplace(words_[static_cast<std::size_t>(i)], i);
    freq_.assign(words_.size(), 0);
}

int Vocab::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab id " + std::to_string(id));
    return words_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

std::vector<std::string> Vocab::regular_words() const {
    return {words_.begin() + kReserved, words_.end()};
}

std::int64_t Vocab::frequency(int id) const { return freq_.at(static_cast<std::size_t>(id)); }
void Vocab::set_frequency(int id, std::int64_t f) { freq_.at(static_cast<std::size_t>(id)) = f; }

std::uint64_t Vocab::hash() const { return word_list_hash(words_); }

std::uint64_t word_list_hash(const std::vector<std::string>& words) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& w : words) {
        for (unsigned char c : w) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xFF;
        h *= 1099511628211ULL;
    }
    return h;
}

int CharVocab::id(char c) {
    if (c >= 'a' && c <= 'z') return kFirstLetter + (c - 'a');
    if (c >= 'A' && c <= 'Z') return kFirstLetter + (c - 'A');
    if (c == ' ') return kSpace;
    return kUnk;
}

std::vector<int> CharVocab::encode(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(id(c));
    return ids;
}

// ---------------------------------------------------------------------------
// Text normalization and tokenization

std::string fold_to_ascii(std::string_view utf8) {
    std::string out;
    out.reserve(utf8.size());
    for (std::size_t i = 0; i < utf8.size();) {
        const auto b0 = static_cast<unsigned char>(utf8[i]);
        char32_t cp = 0;
        std::size_t len = 1;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 >> 5) == 0x6) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 >> 4) == 0xE) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 >> 3) == 0x1E) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            out += kPlaceholder;
            ++i;
            continue;
        }
        if (i + len > utf8.size()) {
            out += kPlaceholder;
            break;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(utf8[i + k]);
            if ((b >> 6) != 0x2) ok = false;
            cp = (cp << 6) | (b & 0x3F);
        }
        out += ok ? fold_codepoint(cp) : std::string(1, kPlaceholder);
        i += ok ? len : 1;
    }
    return out;
}

Tokens tokenize_line(std::string_view raw) {
    const std::string text = fold_to_ascii(raw);
    Tokens tokens;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) tokens.push_back(std::move(word));
        word.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_word_char(c)) {
            word += c;
        } else if (c == '\'' && !word.empty() && i + 1 < text.size() && is_word_char(text[i + 1])) {
            word += c;  // internal apostrophe: summer's
        } else {
            flush();
            tokens.emplace_back(1, c);
        }
    }
    flush();
    return tokens;
}

std::string detokenize(const Tokens& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

bool has_letter(std::string_view token) {
    return std::any_of(token.begin(), token.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

bool is_punctuation(std::string_view token) {
    return !token.empty() && std::none_of(token.begin(), token.end(), is_word_char);
}

std::size_t word_count(const Tokens& tokens) {
    return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), [](const std::string& t) { return !is_punctuation(t); }));
}

std::string letters_only(std::string_view token) {
    std::string out;
    for (char c : token)
        if (std::isalpha(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_for_meter(const Tokens& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        const std::string w = letters_only(t);
        if (w.empty()) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    if (out.empty()) throw DataError("strip_for_meter: line has no letters");
    return out;
}

// ---------------------------------------------------------------------------
// Poems and sonnets

std::vector<Poem> read_poems(std::istream& in) {
    std::vector<std::string> lines;
    bool titled = false;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') titled = true;
        lines.push_back(std::move(line));
    }
    std::vector<Poem> poems;
    Poem current;
    bool stanza_open = false;
    auto finish = [&] {
        if (!current.lines.empty()) poems.push_back(std::move(current));
        current = Poem{};
        stanza_open = false;
    };
    for (const auto& raw : lines) {
        const std::string line = trim(raw);
        if (titled && !line.empty() && line[0] == '#') {
            finish();
            current.title = trim(std::string_view(line).substr(1));
            continue;
        }
        if (line.empty()) {
            if (titled) {
                stanza_open = false;
            } else {
                finish();
            }
            continue;
        }
        if (!stanza_open) {
            current.stanza_starts.push_back(current.lines.size());
            stanza_open = true;
        }
        current.lines.push_back(line);
    }
    finish();
    return poems;
}

std::vector<Poem> read_poems_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    return read_poems(in);
}

bool is_sonnet(const Poem& poem, const SonnetFilter& f) {
    if (poem.lines.size() != Sonnet::kLines) return false;
    double words = 0, chars = 0;
    for (const auto& raw : poem.lines) {
        const LineStats s = line_stats(raw);
        if (s.words < f.min_words || s.words > f.max_words) return false;
        if (s.chars < f.min_chars || s.chars > f.max_chars) return false;
        if (s.chars == 0 || static_cast<double>(s.letters) / static_cast<double>(s.chars) < f.min_letter_ratio)
            return false;
        words += static_cast<double>(s.words);
        chars += static_cast<double>(s.chars);
    }
    const double n = static_cast<double>(poem.lines.size());
    const double mw = words / n, mc = chars / n;
    return mw >= f.min_mean_words && mw <= f.max_mean_words && mc >= f.min_mean_chars && mc <= f.max_mean_chars;
}

std::vector<Sonnet> filter_sonnets(const std::vector<Poem>& poems, const SonnetFilter& filter) {
    std::vector<Sonnet> out;
    for (std::size_t i = 0; i < poems.size(); ++i) {
        const Poem& p = poems[i];
        if (!is_sonnet(p, filter)) continue;
        Sonnet s;
        s.id = p.title && !p.title->empty() ? *p.title : "poem-" + std::to_string(i);
        for (const auto& line : p.lines) s.lines.push_back(tokenize_line(line));
        out.push_back(std::move(s));
    }
    return out;
}

Vocab build_vocab(const std::vector<Sonnet>& train, int min_freq) {
    if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
    std::map<std::string, std::int64_t> counts;
    std::int64_t total = 0;
    for (const auto& s : train)
        for (const auto& line : s.lines)
            for (const auto& t : line) {
                ++counts[t];
                ++total;
            }
    if (total == 0) throw DataError("build_vocab: empty corpus");
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [w, c] : counts)
        if (c >= min_freq && w != "<pad>" && w != "<unk>" && w != "<s>" && w != "</s>") kept.emplace_back(w, c);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (const auto& [w, _] : kept) words.push_back(w);
    Vocab v(words);
    std::int64_t unk = total;
    for (const auto& [w, c] : kept) {
        v.set_frequency(v.id(w), c);
        unk -= c;
    }
    v.set_frequency(Vocab::kUnk, unk);
    return v;
}

Split partition(std::vector<Sonnet> sonnets, std::array<double, 3> ratios, std::uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw std::invalid_argument("partition: ratios must be non-negative and sum to 1");
    std::size_t parts = 0;
    for (double r : ratios)
        if (r > 0) ++parts;
    if (sonnets.size() < parts) throw DataError("partition: fewer sonnets than partitions");
    Rng rng(seed);
    rng.shuffle(sonnets);
    const auto n = sonnets.size();
    auto portion = [&](double r) -> std::size_t {
        if (r <= 0) return 0;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)));
    };
    const std::size_t n_dev = portion(ratios[1]);
    const std::size_t n_test = portion(ratios[2]);
    Split split;
    split.seed = seed;
    const std::size_t n_train = n - n_dev - n_test;
    auto it = std::make_move_iterator(sonnets.begin());
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    split.dev.assign(it + static_cast<std::ptrdiff_t>(n_train), it + static_cast<std::ptrdiff_t>(n_train + n_dev));
    split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_dev), std::make_move_iterator(sonnets.end()));
    return split;
}

std::array<std::string, 4> quatrain_end_words(const std::vector<Tokens>& quatrain) {
    if (quatrain.size() != 4) throw std::invalid_argument("quatrain_end_words: expected 4 lines");
    std::array<std::string, 4> out;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& line = quatrain[i];
        auto it = std::find_if(line.rbegin(), line.rend(), [](const std::string& t) { return !is_punctuation(t); });
        if (it == line.rend()) throw DataError("quatrain_end_words: line " + std::to_string(i + 1) + " has no word");
        out[i] = *it;
    }
    return out;
}

std::vector<RhymeExample> make_rhyme_examples(const std::array<std::string, 4>& end_words, int k_neg,
                                              const Vocab& vocab, Rng& rng) {
    if (k_neg < 0) throw std::invalid_argument("make_rhyme_examples: k_neg must be >= 0");
    std::vector<int> pool;
    const std::unordered_set<std::string> excluded(end_words.begin(), end_words.end());
    if (k_neg > 0) {
        for (int id = Vocab::kReserved; id < vocab.size(); ++id) {
            const auto& w = vocab.word(id);
            if (has_letter(w) && !excluded.count(w)) pool.push_back(id);
        }
        if (pool.empty()) throw DataError("make_rhyme_examples: no candidate negatives in vocabulary");
    }
    std::vector<RhymeExample> out;
    for (std::size_t t = 0; t < 4; ++t) {
        RhymeExample ex;
        ex.target = end_words[t];
        for (std::size_t r = 0; r < 4; ++r)
            if (r != t) ex.references.push_back(end_words[r]);
        for (int k = 0; k < k_neg; ++k)
            ex.references.push_back(vocab.word(pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))]));
        out.push_back(std::move(ex));
    }
    return out;
}

void write_sonnets(std::ostream& out, const std::vector<Sonnet>& sonnets) {
    for (const auto& s : sonnets) {
        out << "# " << s.id << '\n';
        for (const auto& line : s.lines) out << detokenize(line) << '\n';
    }
}

std::vector<Sonnet> read_sonnets(std::istream& in) {
    std::vector<Sonnet> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            out.emplace_back();
            out.back().id = trim(std::string_view(line).substr(1));
            continue;
        }
        if (out.empty()) throw DataError("read_sonnets: line before first '# id' header");
        out.back().lines.push_back(tokenize_line(line));
    }
    for (const auto& s : out)
        if (s.lines.size() != Sonnet::kLines)
            throw DataError("read_sonnets: sonnet '" + s.id + "' has " + std::to_string(s.lines.size()) + " lines");
    return out;
}

}  // namespace sonnet
