#include "sonnet/embeddings.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace sonnet {

int EmbeddingMatrix::find(const std::string& word) const {
    if (index_.size() != words.size()) {
        index_.clear();
        for (std::size_t i = 0; i < words.size(); ++i) index_.emplace(words[i], static_cast<int>(i));
    }
    auto it = index_.find(word);
    return it == index_.end() ? -1 : it->second;
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SkipGramResult train_skipgram(const std::vector<Tokens>& sentences, const SkipGramConfig& cfg, Rng& rng) {
    if (cfg.dim <= 0) throw std::invalid_argument("skip-gram: dimension must be positive");
    if (cfg.window < 1 || cfg.k_negative < 0 || cfg.epochs < 0 || cfg.min_count < 1)
        throw std::invalid_argument("skip-gram: invalid window, negatives, epochs or min_count");

    std::map<std::string, std::int64_t> counts;
    for (const auto& s : sentences)
        for (const auto& w : s) ++counts[w];
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [w, c] : counts)
        if (c >= cfg.min_count) kept.emplace_back(w, c);
    if (kept.empty()) throw std::invalid_argument("skip-gram: empty corpus");
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    SkipGramResult result;
    auto& emb = result.embeddings;
    std::unordered_map<std::string, int> id;
    for (const auto& [w, c] : kept) {
        id.emplace(w, static_cast<int>(emb.words.size()));
        emb.words.push_back(w);
    }
    const int V = static_cast<int>(kept.size());
    const int d = cfg.dim;

    std::vector<double> cdf(static_cast<std::size_t>(V));
    double acc = 0;
    for (int i = 0; i < V; ++i) {
        acc += std::pow(static_cast<double>(kept[static_cast<std::size_t>(i)].second), 0.75);
        cdf[static_cast<std::size_t>(i)] = acc;
    }
    auto draw_negative = [&]() {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), V - 1));
    };

    Eigen::MatrixXd in(d, V), out = Eigen::MatrixXd::Zero(d, V);
    for (int j = 0; j < V; ++j)
        for (int i = 0; i < d; ++i) in(i, j) = rng.uniform(-0.5 / d, 0.5 / d);

    std::vector<std::vector<int>> corpus;
    std::int64_t total_tokens = 0;
    for (const auto& s : sentences) {
        std::vector<int> ids;
        for (const auto& w : s) {
            auto it = id.find(w);
            if (it != id.end()) ids.push_back(it->second);
        }
        total_tokens += static_cast<std::int64_t>(ids.size());
        corpus.push_back(std::move(ids));
    }
    const double total_steps = std::max<double>(1.0, static_cast<double>(total_tokens) * cfg.epochs);
    double processed = 0;

    Eigen::VectorXd grad_in(d);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0;
        std::int64_t pairs = 0;
        for (const auto& ids : corpus) {
            const int n = static_cast<int>(ids.size());
            for (int c = 0; c < n; ++c) {
                const double lr = cfg.lr * std::max(1e-4, 1.0 - processed / total_steps);
                processed += 1;
                const int center = ids[static_cast<std::size_t>(c)];
                for (int o = std::max(0, c - cfg.window); o <= std::min(n - 1, c + cfg.window); ++o) {
                    if (o == c) continue;
                    grad_in.setZero();
                    auto v = in.col(center);
                    for (int k = 0; k <= cfg.k_negative; ++k) {
                        const int target = k == 0 ? ids[static_cast<std::size_t>(o)] : draw_negative();
                        const double label = k == 0 ? 1.0 : 0.0;
                        auto u = out.col(target);
                        const double s = v.dot(u);
                        loss -= label > 0 ? log_sigmoid(s) : log_sigmoid(-s);
                        const double gscale = (sigmoid(s) - label) * lr;
                        grad_in += gscale * u;
                        u -= gscale * v;
                    }
                    in.col(center) -= grad_in;
                    ++pairs;
                }
            }
        }
        result.epoch_loss.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
    }
    emb.vectors = in.transpose().cast<Real>();
    return result;
}

void save_embeddings(const EmbeddingMatrix& emb, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, emb.vocab_hash());
    out << emb.words.size() << ' ' << emb.vectors.cols() << " vocab-hash=" << buf << '\n';
    for (std::size_t i = 0; i < emb.words.size(); ++i) {
        out << emb.words[i];
        for (Eigen::Index j = 0; j < emb.vectors.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), " %.17g", static_cast<double>(emb.vectors(static_cast<Eigen::Index>(i), j)));
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

namespace {

std::vector<double> parse_row(const std::string& line, std::string& word) {
    std::istringstream ls(line);
    ls >> word;
    std::vector<double> values;
    for (double x; ls >> x;) values.push_back(x);
    return values;
}

}  // namespace

// With a "|V| d" header or without one (one word and its values per line).
EmbeddingMatrix load_embeddings(const std::string& path, std::optional<std::uint64_t> expected_hash) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    if (lines.empty()) throw DataError(path + ": empty embeddings file");

    std::istringstream hs(lines.front());
    long long n = -1, d = -1;
    std::string rest;
    const bool has_header = static_cast<bool>(hs >> n >> d) && (!(hs >> rest) || rest.rfind("vocab-hash=", 0) == 0);
    std::optional<std::uint64_t> stored;
    std::size_t first = 0;
    if (has_header) {
        if (n < 0 || d <= 0) throw DataError(path + ": malformed header '" + lines.front() + "'");
        if (!rest.empty()) stored = std::stoull(rest.substr(11), nullptr, 16);
        if (lines.size() - 1 != static_cast<std::size_t>(n))
            throw DataError(path + ": expected " + std::to_string(n) + " rows");
        first = 1;
    } else {
        std::string w;
        d = static_cast<long long>(parse_row(lines.front(), w).size());
        if (d <= 0) throw DataError(path + ": first row has no values");
        n = static_cast<long long>(lines.size());
    }

    EmbeddingMatrix emb;
    emb.vectors.resize(n, d);
    for (long long i = 0; i < n; ++i) {
        std::string word;
        const auto values = parse_row(lines[first + static_cast<std::size_t>(i)], word);
        if (values.size() != static_cast<std::size_t>(d))
            throw DataError(path + ": row " + std::to_string(i + 1) + " has " + std::to_string(values.size()) +
                            " values, expected " + std::to_string(d));
        for (long long j = 0; j < d; ++j) emb.vectors(i, j) = static_cast<Real>(values[static_cast<std::size_t>(j)]);
        emb.words.push_back(word);
    }
    const auto h = emb.vocab_hash();
    if (stored && *stored != h) throw DataError(path + ": stored vocabulary hash does not match its words");
    if (expected_hash && *expected_hash != h) throw DataError(path + ": embeddings were trained for a different vocabulary");
    return emb;
}

int initialize_from_embeddings(Matrix& table, const Vocab& vocab, const EmbeddingMatrix& emb) {
    if (table.rows() != vocab.size()) throw ShapeError("embedding table rows do not match vocabulary size");
    if (table.cols() != emb.vectors.cols())
        throw ShapeError("embedding dimension " + std::to_string(emb.vectors.cols()) + " vs model " +
                         std::to_string(table.cols()));
    int copied = 0;
    for (int i = 0; i < vocab.size(); ++i) {
        const int r = emb.find(vocab.word(i));
        if (r < 0) continue;
        table.row(i) = emb.vectors.row(r);
        ++copied;
    }
    return copied;
}

}  // namespace sonnet
