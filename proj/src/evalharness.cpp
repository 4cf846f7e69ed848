#include "sonnet/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sonnet {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_vowel_phone(const std::string& ph) { return !ph.empty() && std::isdigit(static_cast<unsigned char>(ph.back())); }

std::string rhyme_suffix(const PronDictionary::Phones& phones) {
    std::ptrdiff_t start = -1, last_vowel = -1;
    for (std::size_t i = 0; i < phones.size(); ++i) {
        if (!is_vowel_phone(phones[i])) continue;
        last_vowel = static_cast<std::ptrdiff_t>(i);
        if (phones[i].back() != '0') start = static_cast<std::ptrdiff_t>(i);
    }
    if (start < 0) start = last_vowel;
    if (start < 0) return "";
    std::string out;
    for (std::size_t i = static_cast<std::size_t>(start); i < phones.size(); ++i) {
        std::string p = phones[i];
        if (is_vowel_phone(p)) p.pop_back();
        out += p + ' ';
    }
    return out;
}

}  // namespace

PronDictionary PronDictionary::parse(std::istream& in) {
    PronDictionary d;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line.rfind(";;;", 0) == 0) continue;
        if (auto hash = line.find(" #"); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        if (auto paren = word.find('('); paren != std::string::npos && word.back() == ')') word.erase(paren);
        Phones phones;
        for (std::string ph; ls >> ph;) phones.push_back(ph);
        if (phones.empty()) continue;
        d.entries_[lower(word)].push_back(std::move(phones));
    }
    return d;
}

PronDictionary PronDictionary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read dictionary " + path);
    return parse(in);
}

const std::vector<PronDictionary::Phones>* PronDictionary::lookup(std::string_view word) const {
    auto it = entries_.find(lower(word));
    return it == entries_.end() ? nullptr : &it->second;
}

std::set<StressPattern> dict_stress_patterns(const PronDictionary& dict, std::string_view word) {
    std::set<StressPattern> out;
    const auto* prons = dict.lookup(word);
    if (!prons) return out;
    for (const auto& phones : *prons) {
        StressPattern p;
        for (const auto& ph : phones)
            if (is_vowel_phone(ph)) p += ph.back() == '0' ? '0' : '1';
        if (!p.empty()) out.insert(p);
    }
    return out;
}

bool is_alternating(const StressPattern& p) {
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] == p[i - 1]) return false;
    return !p.empty();
}

std::optional<bool> dict_rhyme(const PronDictionary& dict, std::string_view w1, std::string_view w2) {
    const auto* a = dict.lookup(w1);
    const auto* b = dict.lookup(w2);
    if (!a || !b) return std::nullopt;
    for (const auto& pa : *a) {
        const auto sa = rhyme_suffix(pa);
        if (sa.empty()) continue;
        for (const auto& pb : *b)
            if (sa == rhyme_suffix(pb)) return true;
    }
    return false;
}

std::optional<std::string> baseline_rhyme_key(std::string_view word) {
    const std::string w = letters_only(word);
    auto vowel = [&](std::size_t i) {
        const char c = w[i];
        if (c == 'y') return i + 1 == w.size();
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
    };
    std::ptrdiff_t last = -1;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (vowel(i)) last = static_cast<std::ptrdiff_t>(i);
    if (last < 0) return std::nullopt;
    std::size_t start = static_cast<std::size_t>(last);
    while (start > 0 && vowel(start - 1)) --start;
    return w.substr(start);
}

std::optional<bool> rhyme_baseline(std::string_view w1, std::string_view w2) {
    const auto a = baseline_rhyme_key(w1);
    const auto b = baseline_rhyme_key(w2);
    if (!a || !b) return std::nullopt;
    return *a == *b;
}

void tally_stress(StressResult& r, const Tokens& line, const StressExtraction& ex, const PronDictionary& dict) {
    std::vector<std::string> originals;
    for (const auto& tok : line)
        if (has_letter(tok)) originals.push_back(tok);
    r.shared_steps += static_cast<std::size_t>(ex.shared_steps);
    for (std::size_t k = 0; k < ex.words.size(); ++k) {
        ++r.total;
        const std::string& original = k < originals.size() ? originals[k] : ex.words[k].word;
        auto patterns = dict_stress_patterns(dict, original);
        if (patterns.empty()) patterns = dict_stress_patterns(dict, ex.words[k].word);
        if (patterns.empty()) {
            ++r.discarded_uncovered;
            continue;
        }
        const auto alternating = std::count_if(patterns.begin(), patterns.end(), is_alternating);
        if (static_cast<std::size_t>(alternating) < patterns.size()) ++r.any_nonalternating;
        if (alternating == 0) {
            ++r.discarded_nonalternating;
            continue;
        }
        ++r.considered;
        if (patterns.count(ex.words[k].pattern)) ++r.correct;
    }
    r.accuracy = r.considered ? static_cast<double>(r.correct) / static_cast<double>(r.considered) : 0.0;
}

StressResult stress_accuracy(const PentameterModel& model, const std::vector<Tokens>& lines,
                             const PronDictionary& dict, double threshold) {
    StressResult r;
    for (const auto& line : lines) {
        if (std::none_of(line.begin(), line.end(), [](const std::string& t) { return has_letter(t); })) continue;
        const auto trace = model.trace(line);
        r.steps += static_cast<std::size_t>(trace.f.rows());
        tally_stress(r, line, extract_stress(trace, threshold), dict);
    }
    return r;
}

Prf make_prf(std::size_t tp, std::size_t fp, std::size_t fn) {
    Prf p;
    p.tp = tp;
    p.fp = fp;
    p.fn = fn;
    p.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    p.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    p.f1 = p.precision + p.recall > 0 ? 2 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
    return p;
}

std::vector<std::pair<std::string, std::string>> quatrain_end_pairs(const std::vector<Sonnet>& sonnets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : sonnets) {
        for (std::size_t q = 0; q < Sonnet::kQuatrains; ++q) {
            const auto ends = quatrain_end_words(s.quatrain(q));
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = i + 1; j < 4; ++j) out.emplace_back(ends[i], ends[j]);
        }
    }
    return out;
}

Prf prf_at(const std::vector<ScoredPair>& pairs, double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& p : pairs) {
        const bool pred = p.cosine >= threshold;
        if (pred && p.gold) ++tp;
        else if (pred) ++fp;
        else if (p.gold) ++fn;
    }
    return make_prf(tp, fp, fn);
}

RhymeEval rhyme_eval(const RhymeModel& model, const std::vector<std::pair<std::string, std::string>>& pairs,
                     const PronDictionary& dict, double threshold) {
    RhymeEval r;
    r.total_pairs = pairs.size();
    std::unordered_map<std::string, Vector> cache;
    auto embed = [&](const std::string& w) -> const Vector& {
        auto it = cache.find(w);
        if (it == cache.end()) it = cache.emplace(w, model.embedding(w)).first;
        return it->second;
    };
    std::size_t btp = 0, bfp = 0, bfn = 0;
    for (const auto& [a, b] : pairs) {
        const auto gold = dict_rhyme(dict, a, b);
        const auto base = rhyme_baseline(a, b);
        if (!gold || !base || letters_only(a).empty() || letters_only(b).empty()) {
            ++r.uncovered;
            continue;
        }
        ScoredPair sp{a, b, *gold, *base, cosine_similarity(embed(a), embed(b))};
        if (sp.baseline && sp.gold) ++btp;
        else if (sp.baseline) ++bfp;
        else if (sp.gold) ++bfn;
        r.pairs.push_back(std::move(sp));
    }
    r.model = prf_at(r.pairs, threshold);
    r.baseline = make_prf(btp, bfp, bfn);
    return r;
}

ErrorTable error_table(const std::vector<ScoredPair>& pairs, std::size_t k) {
    ErrorTable t;
    for (const auto& p : pairs) (p.gold ? t.rhyming : t.non_rhyming).push_back(p);
    std::stable_sort(t.rhyming.begin(), t.rhyming.end(), [](const auto& a, const auto& b) { return a.cosine < b.cosine; });
    std::stable_sort(t.non_rhyming.begin(), t.non_rhyming.end(),
                     [](const auto& a, const auto& b) { return a.cosine > b.cosine; });
    if (t.rhyming.size() > k) t.rhyming.resize(k);
    if (t.non_rhyming.size() > k) t.non_rhyming.resize(k);
    return t;
}

std::string format_error_table(const ErrorTable& table) {
    std::ostringstream os;
    char buf[96];
    auto side = [&](const char* title, const std::vector<ScoredPair>& rows) {
        os << title << "\n";
        std::snprintf(buf, sizeof(buf), "  %-32s %s\n", "Word Pair", "Cos");
        os << buf;
        for (const auto& p : rows) {
            std::snprintf(buf, sizeof(buf), "  %-32s %.3f\n", ("(" + p.w1 + ", " + p.w2 + ")").c_str(), p.cosine);
            os << buf;
        }
    };
    side("Dictionary rhyming pairs, lowest cosine", table.rhyming);
    side("Dictionary non-rhyming pairs, highest cosine", table.non_rhyming);
    return os.str();
}

}  // namespace sonnet
