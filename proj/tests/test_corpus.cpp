#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sonnet/prepare.hpp"

using namespace sonnet;

namespace {

const char* kSonnet18 =
    "# Sonnet 18\n"
    "Shall I compare thee to a summer's day?\n"
    "Thou art more lovely and more temperate:\n"
    "Rough winds do shake the darling buds of May,\n"
    "And summer's lease hath all too short a date:\n"
    "Sometime too hot the eye of heaven shines,\n"
    "And often is his gold complexion dimm'd;\n"
    "And every fair from fair sometime declines,\n"
    "By chance or nature's changing course untrimm'd;\n"
    "But thy eternal summer shall not fade\n"
    "Nor lose possession of that fair thou owest;\n"
    "Nor shall Death brag thou wander'st in his shade,\n"
    "When in eternal lines to time thou growest:\n"
    "So long as men can breathe or eyes can see,\n"
    "So long lives this and this gives life to thee.\n";

std::vector<Poem> parse(const std::string& text) {
    std::istringstream in(text);
    return read_poems(in);
}

Sonnet make_sonnet(const std::string& id, const std::vector<std::string>& raw) {
    Sonnet s;
    s.id = id;
    for (const auto& r : raw) s.lines.push_back(tokenize_line(r));
    return s;
}

Sonnet numbered_sonnet(int n) {
    std::vector<std::string> raw;
    for (int i = 0; i < 14; ++i) raw.push_back("word" + std::to_string(n) + " line " + std::to_string(i));
    return make_sonnet("s" + std::to_string(n), raw);
}

const std::vector<std::string> kQuatrain = {
    "Shall I compare thee to a summer's day?",
    "Thou art more lovely and more temperate:",
    "Rough winds do shake the darling buds of May,",
    "And summer's lease hath all too short a date:",
};

}  // namespace

TEST_CASE("tokenize_line") {
    CHECK(tokenize_line("Shall I compare thee to a summer's day?") ==
          Tokens{"shall", "i", "compare", "thee", "to", "a", "summer's", "day", "?"});
    CHECK(tokenize_line("").empty());
    CHECK(tokenize_line("Rough winds do shake") == Tokens{"rough", "winds", "do", "shake"});
}

TEST_CASE("tokenization round-trips through detokenize") {
    for (const auto& p : parse(kSonnet18))
        for (const auto& raw : p.lines) {
            const Tokens t = tokenize_line(raw);
            CHECK(tokenize_line(detokenize(t)) == t);
        }
    const auto poems = read_poems_file(SONNET_DATA_DIR "/shakespeare_sonnets.txt");
    for (const auto& p : poems)
        for (const auto& raw : p.lines) {
            const Tokens t = tokenize_line(raw);
            CHECK(tokenize_line(detokenize(t)) == t);
        }
}

TEST_CASE("unicode folds to ascii") {
    CHECK(tokenize_line("Caf\xC3\xA9 na\xC3\xAFve") == Tokens{"cafe", "naive"});
    CHECK(fold_to_ascii("\xE2\x80\x9Chi\xE2\x80\x9D") == "\"hi\"");
    CHECK(CharVocab::encode("\x1A") == std::vector<int>{CharVocab::kUnk});
}

TEST_CASE("strip_for_meter") {
    CHECK(strip_for_meter(tokenize_line(kQuatrain[0])) == "shall i compare thee to a summers day");
    CHECK(strip_for_meter(Tokens{"a"}) == "a");
    CHECK_THROWS_AS(strip_for_meter(Tokens{"!", "?"}), DataError);
}

TEST_CASE("char vocabulary gives space its own id") {
    CHECK(CharVocab::id(' ') == CharVocab::kSpace);
    CHECK(CharVocab::id('a') == CharVocab::kFirstLetter);
    CHECK(CharVocab::id('z') == CharVocab::kFirstLetter + 25);
    CHECK(CharVocab::id('Q') == CharVocab::id('q'));
    CHECK(CharVocab::size() == 29);
}

TEST_CASE("read_poems handles titled and untitled input") {
    const auto titled = parse(kSonnet18);
    REQUIRE(titled.size() == 1);
    CHECK(titled[0].title == "Sonnet 18");
    CHECK(titled[0].lines.size() == 14);

    const auto plain = parse("a b\nc d\n\ne f\n");
    REQUIRE(plain.size() == 2);
    CHECK_FALSE(plain[0].title.has_value());
    CHECK(plain[1].lines == std::vector<std::string>{"e f"});
}

TEST_CASE("sonnet filter") {
    const auto poems = parse(kSonnet18);
    CHECK(is_sonnet(poems[0]));

    Poem thirteen = poems[0];
    thirteen.lines.pop_back();
    CHECK_FALSE(is_sonnet(thirteen));

    Poem long_line = poems[0];
    long_line.lines[3] = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen "
                         "sixteen seventeen eighteen nineteen twenty";
    CHECK_FALSE(is_sonnet(long_line));
    CHECK(is_sonnet(long_line, lines_only_filter()));
}

TEST_CASE("filter_sonnets is idempotent") {
    const auto poems = read_poems_file(SONNET_DATA_DIR "/shakespeare_sonnets.txt");
    for (const auto& filter : {SonnetFilter{}, lines_only_filter()}) {
        const auto once = filter_sonnets(poems, filter);
        std::ostringstream text;
        write_sonnets(text, once);
        std::vector<Poem> again_in;
        for (const auto& s : once) {
            Poem p;
            p.title = s.id;
            for (const auto& l : s.lines) p.lines.push_back(detokenize(l));
            again_in.push_back(p);
        }
        const auto twice = filter_sonnets(again_in, filter);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i].lines == once[i].lines);
    }
}

TEST_CASE("the bundled collection has 154 fourteen-line sonnets") {
    const auto poems = read_poems_file(SONNET_DATA_DIR "/shakespeare_sonnets.txt");
    CHECK(poems.size() == 154);
    // 99 has 15 lines, 126 has 12, 145 is tetrameter but 14 lines
    CHECK(filter_sonnets(poems, lines_only_filter()).size() == 152);
}

TEST_CASE("build_vocab") {
    std::vector<Sonnet> train{numbered_sonnet(1)};
    train[0].lines[0] = tokenize_line("alpha beta beta");

    const Vocab all = build_vocab(train, 1);
    for (const auto& line : train[0].lines)
        for (const auto& w : line) CHECK(all.contains(w));
    CHECK(all.frequency(all.id("beta")) == 2);

    const Vocab none = build_vocab(train, 1000000000);
    CHECK(none.size() == Vocab::kReserved);
    CHECK(none.id("alpha") == Vocab::kUnk);

    Sonnet fig = make_sonnet("fig", {kQuatrain[0], kQuatrain[1], kQuatrain[2], kQuatrain[3], "x", "x", "x", "x", "x", "x",
                                     "x", "x", "x", "x"});
    const Vocab v = build_vocab({fig}, 2);
    CHECK(v.contains("and"));
    CHECK(v.contains("more"));
    CHECK(v.contains("summer's"));
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("compare"));
    CHECK(v.id("temperate") == Vocab::kUnk);

    CHECK_THROWS_AS(build_vocab({}, 1), DataError);
}

TEST_CASE("vocab is a bijection with reserved entries") {
    const Vocab v(std::vector<std::string>{"x", "y"});
    CHECK(v.size() == 6);
    for (int i = 0; i < v.size(); ++i) CHECK(v.id(v.word(i)) == i);
    CHECK(v.id("zzz") == Vocab::kUnk);
    CHECK_THROWS_AS(Vocab(std::vector<std::string>{"x", "x"}), std::invalid_argument);
}

TEST_CASE("partition") {
    std::vector<Sonnet> ten;
    for (int i = 0; i < 10; ++i) ten.push_back(numbered_sonnet(i));
    const Split a = partition(ten, {0.8, 0.1, 0.1}, 7);
    CHECK(a.train.size() == 8);
    CHECK(a.dev.size() == 1);
    CHECK(a.test.size() == 1);

    std::set<std::string> ids;
    for (const auto* part : {&a.train, &a.dev, &a.test})
        for (const auto& s : *part) CHECK(ids.insert(s.id).second);
    CHECK(ids.size() == 10);

    const Split b = partition(ten, {0.8, 0.1, 0.1}, 7);
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.dev[0].id == b.dev[0].id);

    CHECK_THROWS_AS(partition(std::vector<Sonnet>(ten.begin(), ten.begin() + 2), {0.8, 0.1, 0.1}, 1), DataError);
    CHECK_THROWS_AS(partition(ten, {0.5, 0.1, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("quatrain_end_words") {
    std::vector<Tokens> q;
    for (const auto& l : kQuatrain) q.push_back(tokenize_line(l));
    CHECK(quatrain_end_words(q) == std::array<std::string, 4>{"day", "temperate", "may", "date"});

    const std::vector<Tokens> same(4, tokenize_line("the word ."));
    CHECK(quatrain_end_words(same) == std::array<std::string, 4>{"word", "word", "word", "word"});

    std::vector<Tokens> bad = q;
    bad[2] = tokenize_line("! ?");
    CHECK_THROWS_AS(quatrain_end_words(bad), DataError);
}

TEST_CASE("make_rhyme_examples") {
    const std::array<std::string, 4> ends{"day", "temperate", "may", "date"};
    const Vocab vocab(std::vector<std::string>{"day", "temperate", "may", "date", "rose", "love", "time", "eye"});
    Rng rng(1);

    const auto zero = make_rhyme_examples(ends, 0, vocab, rng);
    REQUIRE(zero.size() == 4);
    CHECK(zero[0].target == "day");
    CHECK(zero[0].references == std::vector<std::string>{"temperate", "may", "date"});

    Rng r1(9), r2(9);
    const auto a = make_rhyme_examples(ends, 2, vocab, r1);
    const auto b = make_rhyme_examples(ends, 2, vocab, r2);
    std::multiset<std::string> targets;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].references.size() == 5);
        CHECK(a[i].references == b[i].references);
        targets.insert(a[i].target);
        for (std::size_t k = 3; k < 5; ++k) {
            CHECK(std::find(ends.begin(), ends.end(), a[i].references[k]) == ends.end());
            CHECK(a[i].references[k].front() != '<');
        }
    }
    CHECK(targets == std::multiset<std::string>(ends.begin(), ends.end()));
}

TEST_CASE("every training quatrain yields four examples, one per end word") {
    const auto poems = read_poems_file(SONNET_DATA_DIR "/shakespeare_sonnets.txt");
    const auto sonnets = filter_sonnets(poems, lines_only_filter());
    const Vocab vocab = build_vocab(sonnets, 2);
    Rng rng(3);
    for (const auto& s : sonnets)
        for (std::size_t q = 0; q < Sonnet::kQuatrains; ++q) {
            const auto ends = quatrain_end_words(s.quatrain(q));
            const auto ex = make_rhyme_examples(ends, 2, vocab, rng);
            REQUIRE(ex.size() == 4);
            for (std::size_t i = 0; i < 4; ++i) CHECK(ex[i].target == ends[i]);
        }
}

TEST_CASE("sonnet file round trip") {
    std::vector<Sonnet> s{numbered_sonnet(1), numbered_sonnet(2)};
    std::ostringstream out;
    write_sonnets(out, s);
    std::istringstream in(out.str());
    const auto back = read_sonnets(in);
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "s2");
    CHECK(back[1].lines == s[1].lines);

    std::istringstream short_in("# x\na\nb\n");
    CHECK_THROWS_AS(read_sonnets(short_in), DataError);
}

TEST_CASE("prepare_corpus writes a reproducible directory") {
    const std::string dir = "test_prepare_out";
    std::filesystem::remove_all(dir);
    PrepareOptions opt;
    opt.filter = lines_only_filter();
    const auto r = prepare_corpus(SONNET_DATA_DIR "/shakespeare_sonnets.txt", dir, opt);
    CHECK(r.poems == 154);

    const auto read = [](const std::string& path) {
        std::ifstream in(path);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string stats = read(dir + "/stats.txt");
    CHECK(stats.find("Train") != std::string::npos);
    CHECK(stats.find("Dev") != std::string::npos);
    CHECK(stats.find("Test") != std::string::npos);

    const Split loaded = load_prepared(dir);
    CHECK(loaded.train.size() == r.split.train.size());
    CHECK(load_vocab(dir + "/vocab.txt").words() == r.vocab.words());

    const std::string train_before = read(dir + "/train.txt"), idx_before = read(dir + "/split.idx");
    prepare_corpus(SONNET_DATA_DIR "/shakespeare_sonnets.txt", dir, opt);
    CHECK(read(dir + "/train.txt") == train_before);
    CHECK(read(dir + "/split.idx") == idx_before);
    std::filesystem::remove_all(dir);

    std::ofstream(dir + "_empty.txt") << "just one line\n";
    CHECK_THROWS_AS(prepare_corpus(dir + "_empty.txt", dir, opt), DataError);
    std::filesystem::remove(dir + "_empty.txt");
}
