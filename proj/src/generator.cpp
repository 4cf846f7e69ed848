#include "sonnet/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace sonnet {

namespace {

constexpr double kUnscorableLine = 1e6;

bool is_reserved(const std::string& w) { return w == "<pad>" || w == "<unk>" || w == "<s>" || w == "</s>"; }

std::string last_word(const Tokens& line) {
    for (auto it = line.rbegin(); it != line.rend(); ++it)
        if (has_letter(*it)) return *it;
    throw DataError("line has no word: '" + detokenize(line) + "'");
}

}  // namespace

Stopwords load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read stopword list " + path);
    Stopwords s;
    for (std::string w; in >> w;) s.insert(w);
    return s;
}

void GenConfig::validate() const {
    if (!(temperature > 0.0) || !(select_temperature > 0.0)) throw std::invalid_argument("temperatures must be positive");
    if (candidates < 1) throw std::invalid_argument("candidate count must be at least 1");
    if (!(nonrhyme_accept < rhyme_accept)) throw std::invalid_argument("need non-rhyme threshold < rhyme threshold");
    if (resample_cap < 1 || restart_budget < 0) throw std::invalid_argument("resample cap >= 1 and restart budget >= 0");
    if (min_words < 1 || max_words < min_words || max_tokens < max_words)
        throw std::invalid_argument("invalid line length bounds");
    if (scheme != "random" && std::find(rhyme_schemes().begin(), rhyme_schemes().end(), scheme) == rhyme_schemes().end())
        throw std::invalid_argument("unknown rhyme scheme '" + scheme + "'");
}

void GenHistory::add(const std::string& w) {
    words.push_back(w);
    ++counts[w];
}

const char* rejection_name(Rejection r) {
    switch (r) {
        case Rejection::None: return "none";
        case Rejection::Unk: return "unk";
        case Rejection::RepeatedContent: return "repeated-content-word";
        case Rejection::TooFrequent: return "too-frequent";
        case Rejection::RecentRepeat: return "recent-repeat";
        case Rejection::BannedSymbol: return "banned-symbol";
    }
    return "?";
}

Rejection check_word(const std::string& w, const GenHistory& history, const std::vector<std::string>& line_so_far) {
    if (is_reserved(w)) return Rejection::Unk;
    if (w == "(" || w == ")" || w == "'" || w == "\"") return Rejection::BannedSymbol;
    const bool punct = is_punctuation(w);
    if (!punct && !has_letter(w)) return Rejection::BannedSymbol;
    const std::size_t n = line_so_far.size();
    for (std::size_t k = n > 3 ? n - 3 : 0; k < n; ++k)
        if (line_so_far[k] == w) return Rejection::RecentRepeat;
    if (!punct) {
        auto it = history.counts.find(w);
        const int seen = it == history.counts.end() ? 0 : it->second;
        if (seen >= 2) return Rejection::TooFrequent;
        if (seen >= 1 && !history.is_stopword(w)) return Rejection::RepeatedContent;
    }
    return Rejection::None;
}

std::vector<double> selection_probabilities(const std::vector<double>& losses, double temperature) {
    if (losses.empty()) throw std::invalid_argument("select_line: no candidates");
    if (!(temperature > 0.0)) throw std::invalid_argument("select_line: temperature must be positive");
    double best = std::numeric_limits<double>::infinity();
    for (double l : losses) {
        if (!std::isfinite(l)) throw std::invalid_argument("select_line: non-finite loss");
        best = std::min(best, l);
    }
    std::vector<double> p;
    double z = 0;
    for (double l : losses) {
        p.push_back(std::exp(-(l - best) / temperature));
        z += p.back();
    }
    for (auto& x : p) x /= z;
    return p;
}

std::size_t select_line(const std::vector<double>& losses, double temperature, Rng& rng) {
    const auto p = selection_probabilities(losses, temperature);
    const double u = rng.uniform();
    double acc = 0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] <= 0) continue;
        last_positive = k;
        acc += p[k];
        if (u < acc) return k;
    }
    return last_positive;
}

RhymeDecision enforce_rhyme(const std::string& scheme, std::size_t line_index, const std::vector<double>& scores,
                            const GenConfig& cfg) {
    if (scheme.size() != 4 || line_index >= 4 || scores.size() != line_index)
        throw std::invalid_argument("enforce_rhyme: need one score per earlier line of a 4-line scheme");
    for (std::size_t j = 0; j < line_index; ++j) {
        const bool partner = scheme[j] == scheme[line_index];
        if (partner ? scores[j] < cfg.rhyme_accept : scores[j] > cfg.nonrhyme_accept) return RhymeDecision::Resample;
    }
    return RhymeDecision::Accept;
}

Generator::Generator(const LanguageModel& lm, const PentameterModel& pm, const RhymeModel& rm, const Vocab& vocab,
                     Stopwords stopwords, GenConfig cfg)
    : lm_(lm), pm_(pm), rm_(rm), vocab_(vocab), stopwords_(std::move(stopwords)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!lm.config().reversed) throw std::invalid_argument("generator needs a language model trained in reversed order");
}

const Vector& Generator::rhyme_vector(const std::string& w) const {
    auto it = rhyme_cache_.find(w);
    if (it == rhyme_cache_.end()) it = rhyme_cache_.emplace(w, rm_.embedding(w)).first;
    return it->second;
}

double Generator::rhyme_score(const std::string& a, const std::string& b) const {
    return cosine_similarity(rhyme_vector(a), rhyme_vector(b));
}

double Generator::line_score(const Tokens& line) const {
    try {
        return pm_.conformity(line);
    } catch (const DataError&) {
        return kUnscorableLine;
    }
}

std::optional<Tokens> Generator::decode_line(Pass& pass, const ContextEncoding& ctx, const DecoderState& start,
                                             const std::vector<Tokens>& prior, const std::string& scheme,
                                             GenHistory history, Rng& rng, long* draws) const {
    std::vector<std::string> prior_ends;
    for (const auto& l : prior) prior_ends.push_back(last_word(l));
    const std::string end_token = lm_.line_sequence({}).back();  // drawn when the reversed line is complete
    std::string input = lm_.line_sequence({}).front();
    DecoderState state = start;
    std::vector<std::string> out;
    int words = 0;
    bool have_end_word = false;
    std::vector<double> cdf(static_cast<std::size_t>(vocab_.size()));
    while (words < cfg_.max_words && static_cast<int>(out.size()) < cfg_.max_tokens) {
        const auto step = lm_.decode_step(pass, input, vocab_, state, ctx);
        const auto& logits = step.logits.value();
        const double mx = static_cast<double>(logits.maxCoeff());
        double acc = 0;
        for (Eigen::Index k = 0; k < logits.rows(); ++k) {
            acc += std::exp((static_cast<double>(logits(k, 0)) - mx) / cfg_.temperature);
            cdf[static_cast<std::size_t>(k)] = acc;
        }
        std::string chosen;
        bool done = false;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= cfg_.resample_cap) return std::nullopt;
            if (draws) ++*draws;
            const double u = rng.uniform() * acc;
            const auto idx = static_cast<int>(std::min<std::ptrdiff_t>(
                std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), vocab_.size() - 1));
            const std::string& w = vocab_.word(idx);
            if (w == end_token) {
                if (words >= cfg_.min_words) {
                    done = true;
                    break;
                }
                continue;
            }
            if (check_word(w, history, out) != Rejection::None) continue;
            if (!have_end_word && has_letter(w) && !prior_ends.empty()) {
                std::vector<double> scores;
                for (const auto& e : prior_ends) scores.push_back(rhyme_score(w, e));
                if (enforce_rhyme(scheme, prior_ends.size(), scores, cfg_) == RhymeDecision::Resample) continue;
            }
            chosen = w;
            break;
        }
        if (done) break;
        out.push_back(chosen);
        history.add(chosen);
        if (!is_punctuation(chosen)) ++words;
        have_end_word = have_end_word || has_letter(chosen);
        state = step.state;
        input = chosen;
    }
    if (words < cfg_.min_words) return std::nullopt;
    return reverse_tokens(std::move(out));
}

std::optional<std::vector<Tokens>> Generator::generate_candidates(const std::vector<Tokens>& prior,
                                                                 const std::string& scheme, const GenHistory& history,
                                                                 int n, Rng& rng, long* draws) const {
    if (n < 1) throw std::invalid_argument("generate_candidates: n must be at least 1");
    Graph g(false);
    Pass pass(g, false, rng);
    ContextEncoding ctx;
    if (lm_.config().use_context) {
        auto [words, prefix] = lm_.context_for(prior, prior.size());
        ctx = lm_.encode_context(pass, words, vocab_, prefix);
    }
    const DecoderState start = lm_.initial_state(pass);
    std::vector<Tokens> lines;
    for (int k = 0; k < n; ++k) {
        Rng stream = rng.split();
        auto line = decode_line(pass, ctx, start, prior, scheme, history, stream, draws);
        if (!line) return std::nullopt;
        lines.push_back(std::move(*line));
    }
    return lines;
}

QuatrainResult Generator::generate_quatrain(Rng& rng) const {
    QuatrainResult r;
    for (int attempt = 0; attempt <= cfg_.restart_budget; ++attempt) {
        r.scheme = cfg_.scheme == "random" ? rhyme_schemes()[rng.uniform_int(rhyme_schemes().size())] : cfg_.scheme;
        r.lines.clear();
        r.line_pm.clear();
        r.candidate_pm.clear();
        GenHistory history;
        history.stopwords = &stopwords_;
        bool failed = false;
        for (int i = 0; i < 4 && !failed; ++i) {
            auto cands = generate_candidates(r.lines, r.scheme, history, cfg_.candidates, rng, &r.draws);
            if (!cands) {
                failed = true;
                break;
            }
            std::vector<double> scores;
            for (const auto& c : *cands) scores.push_back(line_score(c));
            const std::size_t k = select_line(scores, cfg_.select_temperature, rng);
            for (const auto& w : (*cands)[k]) history.add(w);
            r.lines.push_back((*cands)[k]);
            r.line_pm.push_back(scores[k]);
            r.candidate_pm.push_back(std::move(scores));
        }
        if (failed) continue;
        r.restarts = attempt;
        r.ok = true;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                r.pairs.push_back({i, j, r.scheme[static_cast<std::size_t>(i)] == r.scheme[static_cast<std::size_t>(j)],
                                   rhyme_score(last_word(r.lines[static_cast<std::size_t>(i)]),
                                               last_word(r.lines[static_cast<std::size_t>(j)]))});
        return r;
    }
    r.restarts = cfg_.restart_budget;
    r.failure = "restart budget of " + std::to_string(cfg_.restart_budget) + " exhausted after " +
                std::to_string(r.draws) + " draws";
    r.lines.clear();
    return r;
}

std::vector<std::string> Generator::verify(const QuatrainResult& q) const {
    std::vector<std::string> v;
    if (!q.ok) return {"generation failed: " + q.failure};
    if (q.lines.size() != 4) v.push_back("expected 4 lines");
    std::unordered_map<std::string, int> counts;
    for (std::size_t i = 0; i < q.lines.size(); ++i) {
        const auto& line = q.lines[i];
        const auto wc = static_cast<int>(word_count(line));
        if (wc < cfg_.min_words || wc > cfg_.max_words)
            v.push_back("line " + std::to_string(i + 1) + " has " + std::to_string(wc) + " words");
        for (std::size_t k = 0; k < line.size(); ++k) {
            const auto& w = line[k];
            if (is_reserved(w)) v.push_back("reserved token '" + w + "' in line " + std::to_string(i + 1));
            if (w == "(" || w == ")" || w == "'" || w == "\"" || (!is_punctuation(w) && !has_letter(w)))
                v.push_back("banned symbol '" + w + "' in line " + std::to_string(i + 1));
            for (std::size_t d = 1; d <= 3 && d <= k; ++d)
                if (line[k - d] == w) v.push_back("'" + w + "' repeats within 3 tokens in line " + std::to_string(i + 1));
            if (!is_punctuation(w)) ++counts[w];
        }
    }
    for (const auto& [w, c] : counts) {
        if (c > 2) v.push_back("'" + w + "' generated " + std::to_string(c) + " times");
        else if (c > 1 && !stopwords_.count(w)) v.push_back("content word '" + w + "' repeated");
    }
    if (q.scheme.size() == 4 && q.lines.size() == 4) {
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) {
                const double s = rhyme_score(last_word(q.lines[static_cast<std::size_t>(i)]),
                                             last_word(q.lines[static_cast<std::size_t>(j)]));
                const bool partners = q.scheme[static_cast<std::size_t>(i)] == q.scheme[static_cast<std::size_t>(j)];
                if (partners ? s < cfg_.rhyme_accept : s > cfg_.nonrhyme_accept)
                    v.push_back("lines " + std::to_string(i + 1) + "/" + std::to_string(j + 1) + " score " +
                                std::to_string(s) + (partners ? " below rhyme threshold" : " above non-rhyme threshold"));
            }
        }
    }
    return v;
}

}  // namespace sonnet
