#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "sonnet/embeddings.hpp"
#include "sonnet/rhyme.hpp"

using namespace sonnet;

namespace {

std::vector<Tokens> alternating_corpus(std::size_t tokens) {
    std::vector<Tokens> sents;
    Tokens cur;
    for (std::size_t i = 0; i < tokens; ++i) {
        cur.push_back(i % 2 ? "b" : "a");
        if (cur.size() == 20) sents.push_back(std::exchange(cur, {}));
    }
    if (!cur.empty()) sents.push_back(cur);
    return sents;
}

Vector row(const EmbeddingMatrix& e, const std::string& w) { return e.vectors.row(e.find(w)).transpose(); }

}  // namespace

TEST_CASE("skip-gram on an alternating corpus") {
    SkipGramConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 5;
    Rng rng(1);
    const auto r = train_skipgram(alternating_corpus(10000), cfg, rng);
    REQUIRE(r.embeddings.words.size() == 2);
    CHECK(cosine_similarity(row(r.embeddings, "a"), row(r.embeddings, "a")) == doctest::Approx(1.0));
    CHECK(r.embeddings.vectors.allFinite());
    REQUIRE(r.epoch_loss.size() == 5);
    CHECK(r.epoch_loss[1] <= r.epoch_loss[0]);
    CHECK(r.epoch_loss[2] <= r.epoch_loss[1]);
}

TEST_CASE("words sharing contexts end up closer than unrelated ones") {
    std::vector<Tokens> sents;
    for (int i = 0; i < 50; ++i) {
        sents.push_back({"x", "y", "x", "y"});
        sents.push_back({"z", "w", "z", "w"});
    }
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.window = 2;
    cfg.k_negative = 2;
    cfg.epochs = 200;
    Rng rng(4);
    const auto e = train_skipgram(sents, cfg, rng).embeddings;
    const double near = cosine_similarity(row(e, "x"), row(e, "y"));
    const double far = cosine_similarity(row(e, "x"), row(e, "z"));
    CHECK(near > far);
}

TEST_CASE("seeded training is reproducible") {
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 2;
    Rng r1(3), r2(3);
    const auto a = train_skipgram(alternating_corpus(2000), cfg, r1);
    const auto b = train_skipgram(alternating_corpus(2000), cfg, r2);
    CHECK(a.embeddings.vectors == b.embeddings.vectors);
    CHECK(a.embeddings.words == b.embeddings.words);
}

TEST_CASE("skip-gram rejects bad input") {
    Rng rng(1);
    SkipGramConfig cfg;
    CHECK_THROWS_AS(train_skipgram({}, cfg, rng), std::invalid_argument);
    cfg.dim = 0;
    CHECK_THROWS_AS(train_skipgram(alternating_corpus(10), cfg, rng), std::invalid_argument);
}

TEST_CASE("embedding file round trip") {
    EmbeddingMatrix e;
    e.words = {"day", "may", "night"};
    Rng rng(2);
    e.vectors.resize(3, 4);
    for (Eigen::Index i = 0; i < e.vectors.size(); ++i) e.vectors(i) = rng.uniform(-1, 1) / 3.0;
    const std::string path = "test_embeddings_rt.txt";
    save_embeddings(e, path);
    const auto back = load_embeddings(path, e.vocab_hash());
    CHECK(back.words == e.words);
    CHECK(back.vectors == e.vectors);

    CHECK_THROWS_AS(load_embeddings(path, word_list_hash({"day", "may"})), DataError);
    std::remove(path.c_str());
}

TEST_CASE("header-less text vectors load") {
    const std::string path = "test_embeddings_legacy.txt";
    std::ofstream(path) << "day 0.5 -1\nmay 0.25 2\n";
    const auto e = load_embeddings(path);
    CHECK(e.words == std::vector<std::string>{"day", "may"});
    CHECK(e.dim() == 2);
    CHECK(e.vectors(1, 1) == 2.0);

    std::ofstream(path) << "day 0.5 -1\nmay 0.25\n";
    CHECK_THROWS_AS(load_embeddings(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("initialize_from_embeddings copies covered rows only") {
    const Vocab vocab(std::vector<std::string>{"day", "rose"});
    EmbeddingMatrix e;
    e.words = {"day", "night"};
    e.vectors = Matrix::Constant(2, 3, 7.0);
    Matrix table = Matrix::Zero(vocab.size(), 3);
    CHECK(initialize_from_embeddings(table, vocab, e) == 1);
    CHECK(table.row(vocab.id("day")).isConstant(7.0));
    CHECK(table.row(vocab.id("rose")).isZero());

    Matrix wrong = Matrix::Zero(vocab.size(), 5);
    CHECK_THROWS_AS(initialize_from_embeddings(wrong, vocab, e), ShapeError);
}
