#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sonnet/grad_check.hpp"
#include "sonnet/model.hpp"

using namespace sonnet;

namespace {

struct TinyLm {
    ParameterSet params;
    Vocab vocab;
    std::unique_ptr<LanguageModel> lm;

    explicit TinyLm(LmConfig cfg = small_config(), std::uint64_t seed = 1,
                    std::vector<std::string> words = {"shall", "i", "compare", "thee", "to", "a", "summer's", "day", "?"})
        : vocab(words) {
        Rng rng(seed);
        CharEncoder::create(params, cfg.char_dim, cfg.char_hidden, rng);
        lm = std::make_unique<LanguageModel>(params, cfg, vocab.size(), rng);
    }

    static LmConfig small_config() {
        LmConfig c;
        c.word_dim = 5;
        c.char_dim = 3;
        c.char_hidden = 3;
        c.enc_hidden = 4;
        c.dec_hidden = 6;
        c.attn_dim = 4;
        c.dropout = 0.0;
        return c;
    }
};

const Tokens kLine{"shall", "i", "compare", "thee", "to", "a", "summer's", "day", "?"};

void randomize(ParameterSet& params, std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (auto& [name, p] : params)
        for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value(k) = rng.uniform(-scale, scale);
}

}  // namespace

TEST_CASE("empty context is the single dummy vector") {
    TinyLm t;
    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const auto ctx = t.lm->encode_context(pass, {}, t.vocab);
    REQUIRE(ctx.states.size() == 1);
    CHECK(ctx.states[0].value() == t.params.at("lm/dummy_context").value);
    CHECK_FALSE(ctx.summary.has_value());

    // attention over a one-element context is 1
    const auto out = t.lm->decode_step(pass, "<s>", t.vocab, t.lm->initial_state(pass), ctx);
    REQUIRE(out.attention.has_value());
    CHECK(out.attention->value()(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("selective gates only shrink encoder states") {
    TinyLm t;
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        randomize(t.params, 100 + static_cast<std::uint64_t>(trial), 1.0);
        Graph g;
        Pass pass(g, false, rng);
        const auto ctx = t.lm->encode_context(pass, {"thee", "to", "a", "day", "?", "i"}, t.vocab);
        REQUIRE(ctx.states.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            const Matrix h = ctx.raw[i].value(), hp = ctx.states[i].value();
            CHECK((hp.cwiseAbs().array() <= h.cwiseAbs().array()).all());
            CHECK((ctx.gates[i].value().array() > 0).all());
            CHECK((ctx.gates[i].value().array() < 1).all());
        }
    }
}

TEST_CASE("with gates forced open the states are the raw encodings") {
    TinyLm t;
    t.params.at("lm/b_a").value.setConstant(1e3);
    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const auto ctx = t.lm->encode_context(pass, {"thee", "to", "a"}, t.vocab);
    for (std::size_t i = 0; i < 3; ++i) CHECK((ctx.states[i].value() - ctx.raw[i].value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("character encodings") {
    TinyLm t;
    randomize(t.params, 3, 0.5);
    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const Matrix day = t.lm->encode_word_chars(pass, "day").value();
    Graph g2;
    Pass pass2(g2, false, rng);
    CHECK(t.lm->encode_word_chars(pass2, "day").value() == day);
    CHECK(t.lm->encode_word_chars(pass2, "dya").value() != day);
    const Matrix a = t.lm->encode_word_chars(pass2, "a").value();
    CHECK(a.rows() == 6);
    CHECK(a.allFinite());
    CHECK_THROWS_AS(t.lm->encode_word_chars(pass2, ""), std::invalid_argument);
}

TEST_CASE("next-word distribution sums to one") {
    TinyLm t;
    randomize(t.params, 9, 0.5);
    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const auto ctx = t.lm->encode_context(pass, {"thee", "to"}, t.vocab);
    auto state = t.lm->initial_state(pass);
    for (const auto& w : t.lm->line_sequence(kLine)) {
        const auto out = t.lm->decode_step(pass, w, t.vocab, state, ctx);
        CHECK(std::abs(softmax(out.logits).value().sum() - 1.0) < 1e-9);
        state = out.state;
    }
}

TEST_CASE("uniform output gives perplexity |V| and loss ln |V|") {
    std::vector<std::string> words;
    for (int i = 0; i < 96; ++i) words.push_back("w" + std::to_string(i));
    TinyLm t(TinyLm::small_config(), 1, words);
    REQUIRE(t.vocab.size() == 100);
    t.params.at("lm/W_prj").value.setZero();
    t.params.at("lm/b_out").value.setZero();

    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const auto ctx = t.lm->encode_context(pass, {}, t.vocab);
    const Tokens line{"w1", "w2", "w3"};
    CHECK(t.lm->line_loss(pass, line, ctx, t.vocab).scalar() == doctest::Approx(std::log(100.0)).epsilon(1e-12));

    Sonnet s;
    s.id = "u";
    s.lines.assign(14, line);
    CHECK(t.lm->perplexity({s}, t.vocab) == doctest::Approx(100.0));
}

TEST_CASE("weight tying: the output matrix follows the word embeddings") {
    TinyLm t;
    randomize(t.params, 2, 0.5);
    Rng rng(1);
    Graph g1;
    Pass p1(g1, false, rng);
    const Matrix before = t.lm->output_matrix(p1).value();
    t.params.at("lm/W_wrd").value(4, 0) += 0.3;
    Graph g2;
    Pass p2(g2, false, rng);
    const Matrix after = t.lm->output_matrix(p2).value();
    CHECK(after.row(4) != before.row(4));
    CHECK(after.row(5) == before.row(5));
    CHECK(after.rows() == t.vocab.size());
}

TEST_CASE("variant lattice") {
    const auto loss_with = [](LmConfig cfg, const std::string& bump) {
        TinyLm t(cfg);
        randomize(t.params, 4, 0.5);
        if (!bump.empty()) t.params.at(bump).value.array() += 0.25;
        Graph g;
        Rng rng(1);
        Pass pass(g, false, rng);
        std::vector<Tokens> lines{kLine, Tokens{"thee", "to", "a", "day"}};
        return t.lm->sonnet_nll(pass, lines, t.vocab).total.scalar();
    };
    LmConfig full = TinyLm::small_config();
    LmConfig no_ctx = full;
    no_ctx.use_context = false;
    LmConfig plain = no_ctx;
    plain.use_char = false;

    CHECK(loss_with(full, "shared/W_chr") != loss_with(full, ""));
    CHECK(loss_with(full, "lm/W_a") != loss_with(full, ""));
    CHECK(loss_with(no_ctx, "shared/W_chr") != loss_with(no_ctx, ""));
    CHECK(loss_with(plain, "shared/W_chr") == loss_with(plain, ""));

    TinyLm t(no_ctx);
    CHECK_THROWS_AS(t.params.at("lm/W_a"), std::out_of_range);
    Graph g;
    Rng rng(1);
    Pass pass(g, false, rng);
    const auto out = t.lm->decode_step(pass, "i", t.vocab, t.lm->initial_state(pass), ContextEncoding{});
    CHECK_FALSE(out.attention.has_value());

    TinyLm p(plain);
    const auto& names = p.lm->parameter_names();
    CHECK(std::find(names.begin(), names.end(), "shared/W_chr") == names.end());
}

TEST_CASE("reversed mode reverses each line as a whole") {
    TinyLm t;
    CHECK(t.lm->line_sequence({"a", "day"}) == std::vector<std::string>{"</s>", "day", "a", "<s>"});
    LmConfig fwd = TinyLm::small_config();
    fwd.reversed = false;
    TinyLm f(fwd);
    CHECK(f.lm->line_sequence({"a", "day"}) == std::vector<std::string>{"<s>", "a", "day", "</s>"});

    CHECK(reverse_tokens(reverse_tokens(kLine)) == kLine);

    const std::vector<Tokens> lines{{"a", "b"}, {"c"}, {"d", "e"}, {"f"}, {"g"}};
    const auto [ctx, prefix] = t.lm->context_for(lines, 4);
    CHECK(ctx == std::vector<std::string>{"c", "e", "d", "f"});
    CHECK(prefix == 3);
    CHECK(t.lm->context_for(lines, 0).first.empty());
}

TEST_CASE("truncation: detached context words pass no gradient to the encoder") {
    TinyLm t;
    randomize(t.params, 6, 0.5);
    const auto grads = [&](std::size_t detach) {
        t.params.zero_grad();
        Graph g;
        Rng rng(1);
        Pass pass(g, false, rng);
        const auto ctx = t.lm->encode_context(pass, {"thee", "to", "a"}, t.vocab, detach);
        g.backward(sum(ctx.raw[0]));
        return std::pair{t.params.at("lm/enc_fwd/W").grad.norm(), t.params.at("lm/W_wrd").grad.norm()};
    };
    CHECK(grads(0).first > 0);
    CHECK(grads(1).first == 0.0);
    CHECK(grads(1).second == 0.0);
}

TEST_CASE("language model loss passes grad_check") {
    for (bool ctx : {false, true}) {
        LmConfig cfg = TinyLm::small_config();
        cfg.use_context = ctx;
        TinyLm t(cfg, 11);
        randomize(t.params, 12, 0.3);
        Rng rng(1);
        auto build = [&](Graph& g) {
            Pass pass(g, false, rng);
            // two lines: with a third, truncation drops the path through line one
            std::vector<Tokens> lines{Tokens{"a", "day", "?"}, Tokens{"thee", "to", "i"}};
            auto nll = t.lm->sonnet_nll(pass, lines, t.vocab);
            return scale(nll.total, Real(1) / static_cast<Real>(nll.tokens));
        };
        const auto r = grad_check<Real>(build, t.params, 1e-5, 300);
        INFO("worst " << r.worst_parameter);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("overfitting one line drives the loss near zero") {
    LmConfig cfg = TinyLm::small_config();
    cfg.word_dim = 16;
    cfg.dec_hidden = 32;
    TinyLm t(cfg);
    Adagrad opt(t.lm->parameter_names(), {0.5, 1e-10, 5.0});
    Rng rng(1);
    double loss = 0;
    for (int step = 0; step < 500; ++step) {
        t.params.zero_grad();
        Graph g;
        Pass pass(g, true, rng);
        const auto ctx = t.lm->encode_context(pass, {}, t.vocab);
        Var l = t.lm->line_loss(pass, kLine, ctx, t.vocab);
        loss = l.scalar();
        g.backward(l);
        opt.step(t.params);
    }
    CHECK(loss < 0.1);
}

TEST_CASE("overfitting one sonnet drives perplexity below 2") {
    RunConfig cfg;
    cfg.lm = TinyLm::small_config();
    cfg.lm.word_dim = 16;
    cfg.lm.dec_hidden = 32;
    cfg.train.train_pm = cfg.train.train_rm = false;
    cfg.train.lm_lr = 0.3;
    Sonnet s;
    s.id = "one";
    const char* raw[] = {"shall i compare thee", "to a summer's day", "thou art more lovely", "and more temperate",
                         "rough winds do shake", "the darling buds of may", "and summer's lease hath",
                         "all too short a date", "sometime too hot", "the eye of heaven shines", "and often is his gold",
                         "complexion dimm'd", "and every fair", "from fair sometime declines"};
    for (const char* r : raw) s.lines.push_back(tokenize_line(r));
    Split split;
    split.train = split.dev = {s};
    JointModel m(cfg, build_vocab(split.train, 1));
    Rng rng(2);
    Trainer tr(m, split, rng);
    tr.train(60);
    CHECK(m.lm().perplexity({s}, m.vocab()) < 2.0);
}

TEST_CASE("fixed seed and config give bitwise-identical dev perplexity") {
    const auto run = [] {
        RunConfig cfg;
        cfg.lm = TinyLm::small_config();
        cfg.lm.dropout = 0.3;
        cfg.pm.dec_hidden = 4;
        cfg.pm.attn_dim = 4;
        cfg.rm.hidden = 4;
        const auto poems = read_poems_file(SONNET_DATA_DIR "/shakespeare_sonnets.txt");
        auto sonnets = filter_sonnets(poems, SonnetFilter{0, 1e9, 0, 1e9, 0, 100, 0, 1000, 0});
        sonnets.resize(12);
        Split split = partition(sonnets, {0.8, 0.1, 0.1}, 1);
        JointModel m(cfg, build_vocab(split.train, 2));
        Rng rng(cfg.seed);
        Trainer t(m, split, rng);
        t.train(1);
        return std::pair{m.lm().perplexity(split.dev, m.vocab()), serialize_checkpoint(m.checkpoint())};
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
