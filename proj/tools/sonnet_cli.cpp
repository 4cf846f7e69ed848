#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sonnet/evalharness.hpp"
#include "sonnet/model.hpp"
#include "sonnet/prepare.hpp"

using namespace sonnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

RunConfig resolve_config(const Common& c) {
    RunConfig cfg;
    std::string path = c.config_path;
    if (path.empty())
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    if (!path.empty()) cfg = load_config(path);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_path, std::string("config file (default: $") + kConfigEnv + ")");
    cmd->add_option("--set", c.overrides, "override a config key, key=value")->take_all();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json prf_json(const Prf& p) {
    return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"tp", p.tp}, {"fp", p.fp}, {"fn", p.fn}};
}

json pairs_json(const std::vector<ScoredPair>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back({{"w1", p.w1}, {"w2", p.w2}, {"cosine", p.cosine}});
    return a;
}

// --- prepare ---------------------------------------------------------------

struct PrepareArgs {
    Common common;
    std::string input;
    std::string out;
    bool lines_only = false;
};

int cmd_prepare(const PrepareArgs& a) {
    const RunConfig cfg = resolve_config(a.common);
    PrepareOptions opt;
    opt.split = cfg.train.split;
    opt.split_seed = cfg.train.split_seed;
    opt.min_freq = cfg.train.min_freq;
    if (a.lines_only) opt.filter = lines_only_filter();
    const std::string out = a.out.empty() ? cfg.paths.corpus_dir : a.out;
    const auto r = prepare_corpus(a.input, out, opt);
    std::cout << r.poems << " poems read, " << r.split.train.size() + r.split.dev.size() + r.split.test.size()
              << " sonnets kept, vocabulary " << r.vocab.size() << "\n\n"
              << format_stats(r.split);
    return kOk;
}

// --- train-embeddings ------------------------------------------------------

struct EmbedArgs {
    Common common;
    std::string input;
    std::string out;
};

int cmd_train_embeddings(const EmbedArgs& a) {
    const RunConfig cfg = resolve_config(a.common);
    std::vector<Tokens> sentences;
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw DataError("cannot read " + a.input);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] == '#') continue;
        auto t = tokenize_line(line);
        if (!t.empty()) sentences.push_back(std::move(t));
    }
    if (sentences.empty()) throw DataError("no text in " + a.input);
    Rng rng(cfg.seed);
    const auto r = train_skipgram(sentences, cfg.embeddings, rng);
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
        std::fprintf(stderr, "epoch %zu  loss %.5f\n", e + 1, r.epoch_loss[e]);
    save_embeddings(r.embeddings, a.out);
    std::cout << r.embeddings.words.size() << " vectors of dimension " << r.embeddings.dim() << " written to " << a.out
              << "\n";
    return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string out = "run";
    int runs = 1;
    bool no_char = false;
    bool no_context = false;
    bool lm_only = false;
};

json epoch_json(const EpochLog& l) {
    return {{"epoch", l.epoch},
            {"train_lm", l.train_lm},
            {"train_pm", l.train_pm},
            {"train_rm", l.train_rm},
            {"dev_lm", l.dev.lm},
            {"dev_pm", l.dev.pm},
            {"dev_rm", l.dev.rm},
            {"dev_total", l.dev.total},
            {"dev_perplexity", l.dev.perplexity},
            {"restored", l.restored},
            {"seconds", l.seconds}};
}

int train_one(const RunConfig& cfg, const Split& split, const Vocab& vocab, const fs::path& dir) {
    fs::create_directories(dir);
    JointModel model(cfg, vocab);
    if (!cfg.paths.embeddings.empty()) {
        const auto emb = load_embeddings(cfg.paths.embeddings);
        if (emb.dim() != cfg.lm.word_dim)
            throw DataError("embedding dimension " + std::to_string(emb.dim()) + " does not match lm.word_dim " +
                            std::to_string(cfg.lm.word_dim));
        const int n = initialize_from_embeddings(model.params().at("lm/W_wrd").value, vocab, emb);
        std::fprintf(stderr, "initialized %d of %d word vectors from %s\n", n, vocab.size(), cfg.paths.embeddings.c_str());
    }
    Rng rng(cfg.seed);
    Trainer trainer(model, split, rng);
    const std::string ckpt = (dir / "model.ckpt").string();
    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    json initial = {{"epoch", 0}, {"dev_lm", trainer.initial_dev().lm}, {"dev_pm", trainer.initial_dev().pm},
                    {"dev_rm", trainer.initial_dev().rm}, {"dev_total", trainer.initial_dev().total},
                    {"dev_perplexity", trainer.initial_dev().perplexity}};
    log << initial.dump() << '\n';
    try {
        trainer.train(cfg.train.epochs, [&](const EpochLog& l) {
            log << epoch_json(l).dump() << '\n' << std::flush;
            std::fprintf(stderr, "seed %llu epoch %2d  ppl %8.3f  pm %.4f  rm %.4f%s  (%.1fs)\n",
                         static_cast<unsigned long long>(cfg.seed), l.epoch, l.dev.perplexity, l.dev.pm, l.dev.rm,
                         l.restored ? "  restored" : "", l.seconds);
        });
    } catch (const NumericError& e) {
        model.save(ckpt);
        std::fprintf(stderr, "numeric failure: %s\nlast good weights saved to %s\n", e.what(), ckpt.c_str());
        return kNumeric;
    }
    model.save(ckpt);
    std::cout << ckpt << '\n';
    return kOk;
}

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = resolve_config(a.common);
    if (a.no_context) cfg.lm.use_context = false;
    if (a.no_char) {
        cfg.lm.use_char = false;
        cfg.lm.use_context = false;
    }
    if (a.lm_only) {
        cfg.train.train_pm = false;
        cfg.train.train_rm = false;
    }
    if (a.runs < 1) throw UsageError("--runs must be at least 1");
    const Split split = load_prepared(cfg.paths.corpus_dir);
    const fs::path vocab_path = fs::path(cfg.paths.corpus_dir) / "vocab.txt";
    const Vocab vocab = fs::exists(vocab_path) ? load_vocab(vocab_path.string()) : build_vocab(split.train, cfg.train.min_freq);
    for (int r = 0; r < a.runs; ++r) {
        RunConfig run = cfg;
        run.seed = cfg.seed + static_cast<std::uint64_t>(r);
        const fs::path dir = a.runs == 1 ? fs::path(a.out) : fs::path(a.out) / ("seed-" + std::to_string(run.seed));
        const int code = train_one(run, split, vocab, dir);
        if (code != kOk) return code;
    }
    return kOk;
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
    Common common;
    std::string checkpoint;
    int n = 5;
    std::string scheme;
    std::optional<std::uint64_t> seed;
    std::string meta;
};

int cmd_generate(const GenerateArgs& a) {
    const RunConfig overrides = resolve_config(a.common);
    const auto model = JointModel::load(a.checkpoint);
    GenConfig gen = overrides.gen;
    if (!a.scheme.empty()) gen.scheme = a.scheme;
    gen.validate();
    const Stopwords stop = load_stopwords(overrides.paths.stopwords);
    Generator generator(model->lm(), model->pm(), model->rm(), model->vocab(), stop, gen);

    const std::uint64_t seed = a.seed.value_or(overrides.seed);
    std::ofstream meta;
    if (!a.meta.empty()) {
        meta.open(a.meta, std::ios::binary);
        if (!meta) throw DataError("cannot write " + a.meta);
    }
    Rng master(seed);
    int failures = 0;
    for (int i = 0; i < a.n; ++i) {
        Rng rng = master.split();
        QuatrainResult q = generator.generate_quatrain(rng);
        q.seed = seed;
        if (i) std::cout << '\n';
        if (!q.ok) {
            ++failures;
            std::cout << "# generation failed: " << q.failure << '\n';
        } else {
            for (const auto& line : q.lines) std::cout << detokenize(line) << '\n';
        }
        if (meta.is_open()) {
            json pairs = json::array();
            for (const auto& p : q.pairs)
                pairs.push_back({{"i", p.i + 1}, {"j", p.j + 1}, {"partners", p.partners}, {"score", p.score}});
            json j = {{"index", i},  {"seed", seed},           {"ok", q.ok},     {"scheme", q.scheme},
                      {"line_pm", q.line_pm}, {"rhyme_scores", pairs}, {"restarts", q.restarts}, {"draws", q.draws}};
            if (!q.ok) j["failure"] = q.failure;
            meta << j.dump() << '\n';
        }
    }
    if (failures) std::fprintf(stderr, "%d of %d quatrains failed\n", failures, a.n);
    return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::vector<std::string> checkpoints;
    std::string split = "test";
    std::string json_out;
    std::string text_out;
    std::string pairs_in;
};

const std::vector<Sonnet>& pick_split(const Split& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "dev") return s.dev;
    if (name == "test") return s.test;
    throw UsageError("--split must be train, dev or test");
}

int score_pairs(const JointModel& model, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    for (std::string line; std::getline(in, line);) {
        std::istringstream ss(line);
        std::string w1, w2;
        if (!(ss >> w1 >> w2)) continue;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", model.rm().score(w1, w2));
        std::cout << w1 << ' ' << w2 << ' ' << buf << '\n';
    }
    return kOk;
}

int cmd_eval(const EvalArgs& a) {
    const RunConfig cfg = resolve_config(a.common);
    if (!a.pairs_in.empty()) {
        if (a.checkpoints.size() != 1) throw UsageError("--pairs takes exactly one checkpoint");
        return score_pairs(*JointModel::load(a.checkpoints.front()), a.pairs_in);
    }
    const Split split = load_prepared(cfg.paths.corpus_dir);
    const auto& sonnets = pick_split(split, a.split);

    std::optional<PronDictionary> dict;
    if (fs::exists(cfg.paths.dictionary))
        dict = PronDictionary::load(cfg.paths.dictionary);
    else
        std::fprintf(stderr, "warning: dictionary %s not found; stress and rhyme sections skipped\n",
                     cfg.paths.dictionary.c_str());

    std::vector<Tokens> lines;
    for (const auto& s : sonnets) lines.insert(lines.end(), s.lines.begin(), s.lines.end());
    const auto pairs = quatrain_end_pairs(sonnets);

    json runs = json::array();
    std::vector<double> ppl, acc, f1, bf1;
    std::optional<ErrorTable> table;
    std::ostringstream text;
    for (const auto& path : a.checkpoints) {
        const auto model = JointModel::load(path);
        json run = {{"checkpoint", path}};
        const double p = model->lm().perplexity(sonnets, model->vocab());
        run["perplexity"] = p;
        ppl.push_back(p);
        if (dict) {
            const auto st = stress_accuracy(model->pm(), lines, *dict, cfg.eval.stress_threshold);
            run["stress"] = {{"accuracy", st.accuracy},
                             {"correct", st.correct},
                             {"considered", st.considered},
                             {"discarded_uncovered", st.discarded_uncovered},
                             {"discarded_nonalternating", st.discarded_nonalternating},
                             {"any_nonalternating", st.any_nonalternating},
                             {"total", st.total},
                             {"shared_steps", st.shared_steps},
                             {"steps", st.steps}};
            acc.push_back(st.accuracy);
            const auto re = rhyme_eval(model->rm(), pairs, *dict, cfg.eval.rhyme_threshold);
            run["rhyme"] = {{"model", prf_json(re.model)},
                            {"baseline", prf_json(re.baseline)},
                            {"pairs", re.pairs.size()},
                            {"total_pairs", re.total_pairs},
                            {"uncovered", re.uncovered}};
            f1.push_back(re.model.f1);
            bf1.push_back(re.baseline.f1);
            if (!table) table = error_table(re.pairs, static_cast<std::size_t>(cfg.eval.error_rows));
        }
        runs.push_back(run);
    }

    json report = {{"split", a.split}, {"runs", runs}};
    json mean = {{"perplexity", mean_of(ppl)}};
    char buf[160];
    text << "Evaluation on " << a.split << " (" << sonnets.size() << " sonnets, " << a.checkpoints.size()
         << (a.checkpoints.size() == 1 ? " checkpoint)\n\n" : " checkpoints, averaged)\n\n");
    text << "Model     Ppl       Stress Acc  Rhyme F1\n";
    if (dict) {
        mean["stress_accuracy"] = mean_of(acc);
        mean["rhyme_f1"] = mean_of(f1);
        mean["rhyme_baseline_f1"] = mean_of(bf1);
        std::snprintf(buf, sizeof buf, "%-9s %-9.2f %-11.3f %.3f\n", "model", mean_of(ppl), mean_of(acc), mean_of(f1));
        text << buf;
        std::snprintf(buf, sizeof buf, "%-9s %-9s %-11s %.3f\n", "Rhyme-BL", "-", "-", mean_of(bf1));
        text << buf;
        report["error_table"] = {{"rhyming", pairs_json(table->rhyming)},
                                 {"non_rhyming", pairs_json(table->non_rhyming)}};
        text << '\n' << format_error_table(*table);
    } else {
        std::snprintf(buf, sizeof buf, "%-9s %-9.2f %-11s %s\n", "model", mean_of(ppl), "-", "-");
        text << buf;
    }
    report["mean"] = mean;

    std::cout << text.str();
    if (!a.json_out.empty()) write_text(a.json_out, report.dump(2) + "\n");
    if (!a.text_out.empty()) write_text(a.text_out, text.str());
    return kOk;
}

// --- inspect-checkpoint ----------------------------------------------------

struct InspectArgs {
    Common common;
    std::string checkpoint;
    bool values = false;
    std::string trace_line;
    std::string csv_out;
};

int cmd_inspect(const InspectArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    if (a.trace_line.empty()) {
        std::cout << dump_checkpoint_text(ckpt, a.values);
        return kOk;
    }
    const auto model = JointModel::from_checkpoint(ckpt);
    const auto tr = model->pm().trace(tokenize_line(a.trace_line));
    const std::string csv = trace_to_csv(tr);
    if (a.csv_out.empty())
        std::cout << csv;
    else
        write_text(a.csv_out, csv);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint sonnet language, meter and rhyme models"};
    app.require_subcommand(0, 1);
    app.set_help_all_flag("--help-all");
    bool show_config = false;
    app.add_flag("--config-reference", show_config, "print every config key with its default and exit");

    PrepareArgs prep;
    auto* p = app.add_subcommand("prepare", "filter raw poems into sonnets and write the split corpus");
    add_common(p, prep.common);
    p->add_option("input", prep.input, "raw poem file")->required();
    p->add_option("-o,--out", prep.out, "output directory (default: paths.corpus_dir)");
    p->add_flag("--lines-only", prep.lines_only, "keep every 14-line poem, skipping the length heuristics");

    EmbedArgs emb;
    auto* e = app.add_subcommand("train-embeddings", "train skip-gram word vectors on a text file");
    add_common(e, emb.common);
    e->add_option("input", emb.input, "text, one sentence per line")->required();
    e->add_option("-o,--out", emb.out, "embedding file")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train the joint model");
    add_common(t, tr.common);
    t->add_option("-o,--out", tr.out, "output directory")->capture_default_str();
    t->add_option("--runs", tr.runs, "train this many seeds, seed .. seed+runs-1")->capture_default_str();
    t->add_flag("--no-char", tr.no_char, "language model without character encodings or context (LM)");
    t->add_flag("--no-context", tr.no_context, "language model without the context encoder (LM*)");
    t->add_flag("--lm-only", tr.lm_only, "train only the language model");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "generate quatrains");
    add_common(g, gen.common);
    g->add_option("checkpoint", gen.checkpoint)->required();
    g->add_option("-n", gen.n, "number of quatrains")->capture_default_str()->check(CLI::PositiveNumber);
    g->add_option("--scheme", gen.scheme, "AABB, ABAB, ABBA or random");
    g->add_option("--seed", gen.seed, "generation seed (default: config seed)");
    g->add_option("--meta", gen.meta, "write JSON-lines metadata here");

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "perplexity, stress accuracy and rhyme F1");
    add_common(v, ev.common);
    v->add_option("checkpoints", ev.checkpoints, "one or more checkpoints; results are averaged")->required();
    v->add_option("--split", ev.split, "train, dev or test")->capture_default_str();
    v->add_option("--json", ev.json_out, "write the JSON report here");
    v->add_option("--report", ev.text_out, "write the text report here");
    v->add_option("--pairs", ev.pairs_in, "score 'w1 w2' lines and print 'w1 w2 cosine'");

    InspectArgs in;
    auto* i = app.add_subcommand("inspect-checkpoint", "dump a checkpoint or a pentameter attention trace");
    add_common(i, in.common);
    i->add_option("checkpoint", in.checkpoint)->required();
    i->add_flag("--values", in.values, "include tensor values");
    i->add_option("--trace", in.trace_line, "print the stress attention of this line as CSV");
    i->add_option("--csv", in.csv_out, "write the trace CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (show_config) {
        std::cout << config_reference();
        return kOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (*p) return cmd_prepare(prep);
        if (*e) return cmd_train_embeddings(emb);
        if (*t) return cmd_train(tr);
        if (*g) return cmd_generate(gen);
        if (*v) return cmd_eval(ev);
        if (*i) return cmd_inspect(in);
    } catch (const UsageError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kUsage;
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kUsage;
    } catch (const NumericError& err) {
        std::fprintf(stderr, "numeric failure: %s\n", err.what());
        return kNumeric;
    } catch (const DataError& err) {
        std::fprintf(stderr, "data error: %s\n", err.what());
        return kData;
    } catch (const CheckpointError& err) {
        std::fprintf(stderr, "checkpoint error: %s\n", err.what());
        return kData;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kData;
    }
    return kUsage;
}
