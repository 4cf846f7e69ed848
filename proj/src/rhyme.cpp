#include "sonnet/rhyme.hpp"

namespace sonnet {

Var margin_top2_loss(Var q, double delta) {
    if (q.size() < 2) throw std::invalid_argument("margin_top2_loss: need at least two scores");
    const auto& v = q.value();
    Eigen::Index first = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k)
        if (v(k) > v(first)) first = k;
    Eigen::Index second = first == 0 ? 1 : 0;
    for (Eigen::Index k = 0; k < v.size(); ++k)
        if (k != first && v(k) > v(second)) second = k;
    const Eigen::Index rows = q.rows();
    Var gap = sub(pick(q, second % rows, second / rows), pick(q, first % rows, first / rows));
    return relu(shift(gap, static_cast<Real>(delta)));
}

RhymeModel::RhymeModel(ParameterSet& params, const RmConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto& chr = params.at("shared/W_chr");
    LstmWeights::create(params, "rm/lstm", chr.value.cols(), cfg.hidden, rng);
    bind(params);
}

RhymeModel::RhymeModel(ParameterSet& params, const RmConfig& cfg) : cfg_(cfg) { bind(params); }

void RhymeModel::bind(ParameterSet& params) {
    if (!(cfg_.delta > 0.0)) throw std::invalid_argument("rhyme: margin must be positive");
    if (cfg_.k_neg < 0) throw std::invalid_argument("rhyme: k_neg must be non-negative");
    W_chr_ = &params.at("shared/W_chr");
    lstm_ = LstmWeights::bind(params, "rm/lstm");
    names_ = params.names_with_prefix("rm/");
    names_.push_back("shared/W_chr");
}

Var RhymeModel::encode(Graph& g, const std::string& word, std::unordered_map<std::string, Var>* cache) const {
    const std::string letters = letters_only(word);
    if (letters.empty()) throw std::invalid_argument("rhyme: word '" + word + "' has no letters");
    if (cache) {
        auto it = cache->find(letters);
        if (it != cache->end()) return it->second;
    }
    Var table = g.parameter(*W_chr_);
    auto state = lstm_zero_state(g, lstm_.hidden);
    for (int id : CharVocab::encode(letters)) state = lstm_step(g, lstm_, lookup(table, id), state);
    if (cache) cache->emplace(letters, state.hidden);
    return state.hidden;
}

Var RhymeModel::loss(Graph& g, const RhymeExample& example, std::unordered_map<std::string, Var>* cache) const {
    if (example.references.size() < 2) throw std::invalid_argument("rhyme: example needs at least two references");
    Var target = encode(g, example.target, cache);
    std::vector<Var> cos;
    for (const auto& r : example.references) cos.push_back(cosine(target, encode(g, r, cache)));
    return margin_top2_loss(concat(cos), cfg_.delta);
}

Vector RhymeModel::embedding(const std::string& word) const {
    Graph g(false);
    return encode(g, word).value();
}

double cosine_similarity(const Vector& a, const Vector& b) {
    const double na = static_cast<double>(a.norm());
    const double nb = static_cast<double>(b.norm());
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
    return static_cast<double>(a.dot(b)) / (na * nb);
}

double RhymeModel::score(const std::string& w1, const std::string& w2) const {
    return cosine_similarity(embedding(w1), embedding(w2));
}

}  // namespace sonnet
