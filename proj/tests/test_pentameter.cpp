#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sonnet/grad_check.hpp"
#include "sonnet/model.hpp"

using namespace sonnet;

namespace {

struct TinyPm {
    ParameterSet params;
    std::unique_ptr<PentameterModel> pm;

    explicit TinyPm(PmConfig cfg = small_config(), std::uint64_t seed = 1, int char_dim = 4, int char_hidden = 3) {
        Rng rng(seed);
        CharEncoder::create(params, char_dim, char_hidden, rng);
        pm = std::make_unique<PentameterModel>(params, cfg, rng);
    }

    static PmConfig small_config() {
        PmConfig c;
        c.dec_hidden = 5;
        c.attn_dim = 4;
        return c;
    }

    void fill(Rng& rng, double scale) {
        for (auto& [name, p] : params)
            for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value(k) = rng.uniform(-scale, scale);
    }
    void zero() {
        for (auto& [name, p] : params) p.value.setZero();
    }
};

std::string random_line(Rng& rng, std::size_t max_len) {
    const std::size_t len = 1 + rng.uniform_int(max_len);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        const bool space = !s.empty() && s.back() != ' ' && i + 1 < len && rng.uniform() < 0.2;
        s += space ? ' ' : static_cast<char>('a' + rng.uniform_int(26));
    }
    if (s.find_first_of("aeiouy") == std::string::npos) s[0] = 'a';
    return s;
}

Matrix random_attention(Rng& rng, Eigen::Index steps, Eigen::Index M) {
    Matrix f(steps, M);
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (Eigen::Index j = 0; j < M; ++j) f(t, j) = rng.uniform();
        f.row(t) /= f.row(t).sum();
    }
    return f;
}

double brute_rep(const Matrix& f) {
    double total = 0;
    for (Eigen::Index t = 0; t < f.rows(); ++t)
        for (Eigen::Index j = 0; j < f.cols(); ++j) {
            double prior = 0;
            for (Eigen::Index u = 0; u < t; ++u) prior += f(u, j);
            total += std::min(f(t, j), prior);
        }
    return total;
}

double brute_cov(const Matrix& f, const std::vector<bool>& vowel, double C) {
    double total = 0;
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
        if (!vowel[static_cast<std::size_t>(j)]) continue;
        double mass = 0;
        for (Eigen::Index t = 0; t < f.rows(); ++t) mass += f(t, j);
        total += std::max(0.0, C - mass);
    }
    return total;
}

std::vector<Var> rows_as_vars(Graph& g, const Matrix& f) {
    std::vector<Var> out;
    for (Eigen::Index t = 0; t < f.rows(); ++t) out.push_back(g.constant(f.row(t)));
    return out;
}

}  // namespace

TEST_CASE("positional update") {
    CHECK(position_update(0.3, 1.0) == 1.0);
    CHECK(position_update(0.5, 0.0) == 0.5);
    CHECK(position_update(0.4, 0.3) > 0.3);
}

TEST_CASE("repeat and coverage losses match double loops") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index M = 1 + static_cast<Eigen::Index>(rng.uniform_int(12));
        const Matrix f = random_attention(rng, PmConfig::kSteps, M);
        std::vector<bool> vowel(static_cast<std::size_t>(M));
        for (auto&& v : vowel) v = rng.uniform() < 0.4;
        Graph g;
        const auto rows = rows_as_vars(g, f);
        CHECK(std::abs(repeat_loss(rows).scalar() - brute_rep(f)) < 1e-12);
        CHECK(std::abs(coverage_loss(rows, vowel, 0.6).scalar() - brute_cov(f, vowel, 0.6)) < 1e-12);
    }
}

TEST_CASE("repeat and coverage closed forms") {
    Matrix same = Matrix::Zero(10, 5);
    same.col(2).setOnes();
    Graph g;
    CHECK(repeat_loss(rows_as_vars(g, same)).scalar() == doctest::Approx(9.0));
    CHECK(repeat_loss(rows_as_vars(g, Matrix(same.topRows(1)))).scalar() == 0.0);

    Matrix spread = Matrix::Constant(10, 4, 0.25);
    CHECK(coverage_loss(rows_as_vars(g, spread), {true, true, false, true}, 0.6).scalar() == 0.0);
    CHECK(coverage_loss(rows_as_vars(g, same), {true, false, false, false, false}, 0.6).scalar() == doctest::Approx(0.6));
    CHECK_THROWS_AS(coverage_loss(rows_as_vars(g, same), {true}, 0.6), ShapeError);
}

TEST_CASE("zero weights give the closed-form first step") {
    TinyPm t;
    t.zero();
    Graph g;
    const auto l = t.pm->loss(g, "aaaaaaaaaa");
    CHECK(l.trace.nu[0] == doctest::Approx(0.5));
    for (double p : l.trace.p_unstressed) CHECK(p == doctest::Approx(0.5));
    // each step costs -log 0.5
    CHECK(l.ent.scalar() == doctest::Approx(10 * std::log(2.0)));

    // mu_1 = M/2 = 5: the Gaussian is the whole score, so f falls off by e^-1/2 one T away
    const auto f = l.trace.f.row(0);
    CHECK(f(4) == doctest::Approx(f.maxCoeff()));
    CHECK(f(2) / f(4) == doctest::Approx(std::exp(-0.5)));
    CHECK(f(6) / f(4) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("a very wide Gaussian leaves a plain softmax") {
    PmConfig cfg = TinyPm::small_config();
    cfg.T = 1e7;
    TinyPm t(cfg);
    t.params.at("pm/v_d").value.setZero();
    Graph g;
    const auto l = t.pm->loss(g, "ab cd");
    for (Eigen::Index s = 0; s < l.trace.f.rows(); ++s) {
        CHECK(l.trace.f(s, 0) == doctest::Approx(0.25));
        CHECK(l.trace.f(s, 2) == 0.0);
    }
}

TEST_CASE("a single letter takes all the attention") {
    TinyPm t;
    Graph g;
    const auto l = t.pm->loss(g, "a");
    for (Eigen::Index s = 0; s < l.trace.f.rows(); ++s) CHECK(l.trace.f(s, 0) == doctest::Approx(1.0));
}

TEST_CASE("a large stress bias saturates P(S-)") {
    TinyPm t;
    t.params.at("pm/b_e").value(0, 0) = 50;
    const auto tr = t.pm->trace({"shall", "i"});
    for (double p : tr.p_unstressed) CHECK(p == doctest::Approx(1.0));
}

TEST_CASE("attention traces are monotone and normalized") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        TinyPm t(TinyPm::small_config(), static_cast<std::uint64_t>(trial) + 1);
        t.fill(rng, trial % 2 ? 1.0 : 3.0);
        const std::string line = random_line(rng, 12);
        Graph g(false);
        const auto tr = t.pm->loss(g, line).trace;
        double prev = 0.0;
        for (std::size_t s = 0; s < tr.nu.size(); ++s) {
            CHECK(tr.nu[s] >= prev);
            CHECK(tr.nu[s] <= 1.0);
            prev = tr.nu[s];
            CHECK(std::abs(tr.f.row(static_cast<Eigen::Index>(s)).sum() - 1.0) < 1e-9);
            for (std::size_t j = 0; j < line.size(); ++j)
                if (line[j] == ' ') CHECK(tr.f(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) == 0.0);
        }
    }
}

TEST_CASE("pentameter loss passes grad_check") {
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        TinyPm t(TinyPm::small_config(), 40 + static_cast<std::uint64_t>(trial));
        t.fill(rng, 0.5);
        const std::string line = trial == 0 ? "shall i comp" : random_line(rng, 12);
        auto build = [&](Graph& g) { return t.pm->loss(g, line).total; };
        const auto r = grad_check<Real>(build, t.params, 1e-5, 200);
        INFO(line << " worst " << r.worst_parameter);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("scoring is pure and rejects vowel-free lines") {
    TinyPm t;
    const Tokens line{"shall", "i", "compare", "thee"};
    CHECK(t.pm->conformity(line) == t.pm->conformity(line));
    CHECK(std::isfinite(t.pm->conformity(line)));
    Graph g;
    CHECK_THROWS_AS(t.pm->loss(g, "psst"), DataError);
    CHECK_THROWS_AS(t.pm->loss(g, Tokens{"!"}), DataError);
}

TEST_CASE("extract_stress") {
    AttentionTrace tr;
    tr.chars = "shall i compare thee";
    tr.f = Matrix::Zero(PmConfig::kSteps, static_cast<Eigen::Index>(tr.chars.size()));
    // steps 0..3 land on shall, i, com-, -pare; the rest on thee
    tr.f(0, 0) = 1;
    tr.f(1, 6) = 1;
    tr.f(2, 9) = 1;
    tr.f(3, 13) = 1;
    for (int s = 4; s < PmConfig::kSteps; ++s) tr.f(s, 17) = 1;
    auto ex = extract_stress(tr, 0.2);
    REQUIRE(ex.words.size() == 4);
    CHECK(ex.words[0].pattern == "0");
    CHECK(ex.words[1].pattern == "1");
    CHECK(ex.words[2].word == "compare");
    CHECK(ex.words[2].pattern == "01");
    CHECK(ex.words[3].pattern == "010101");
    CHECK(ex.shared_steps == 0);

    tr.f.setZero();
    tr.f.col(9).setOnes();
    ex = extract_stress(tr, 0.2);
    CHECK(ex.words[2].pattern == "0101010101");
    CHECK(ex.words[0].pattern.empty());

    tr.f.setConstant(0.19);
    CHECK(extract_stress(tr, 0.2).words[1].pattern.empty());

    tr.f.setZero();
    tr.f.col(0).setConstant(0.5);
    tr.f.col(6).setConstant(0.5);
    CHECK(extract_stress(tr, 0.2).shared_steps == PmConfig::kSteps);
}

TEST_CASE("trace csv has a header and one row per step") {
    TinyPm t;
    const auto csv = trace_to_csv(t.pm->trace({"a", "day"}));
    CHECK(csv.rfind("step,nu,p_unstressed,a,_,d,a,y\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + PmConfig::kSteps);
}
