#include "sonnet/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace sonnet {

JointModel::JointModel(const RunConfig& cfg, Vocab vocab) : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    CharEncoder::create(params_, cfg_.lm.char_dim, cfg_.lm.char_hidden, rng);
    lm_ = std::make_unique<LanguageModel>(params_, cfg_.lm, vocab_.size(), rng);
    pm_ = std::make_unique<PentameterModel>(params_, cfg_.pm, rng);
    rm_ = std::make_unique<RhymeModel>(params_, cfg_.rm, rng);
}

JointModel::JointModel(const RunConfig& cfg, Vocab vocab, BindTag) : cfg_(cfg), vocab_(std::move(vocab)) {}

void JointModel::bind() {
    lm_ = std::make_unique<LanguageModel>(params_, cfg_.lm);
    pm_ = std::make_unique<PentameterModel>(params_, cfg_.pm);
    rm_ = std::make_unique<RhymeModel>(params_, cfg_.rm);
    if (lm_->vocab_size() != vocab_.size()) throw CheckpointError("checkpoint vocabulary does not match lm/W_wrd");
}

std::unique_ptr<JointModel> JointModel::from_checkpoint(const Checkpoint& ckpt) {
    RunConfig cfg;
    try {
        cfg.apply(ckpt.header, true);
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    if (ckpt.vocab.size() < static_cast<std::size_t>(Vocab::kReserved)) throw CheckpointError("checkpoint vocabulary too small");
    Vocab vocab(std::vector<std::string>(ckpt.vocab.begin() + Vocab::kReserved, ckpt.vocab.end()));
    if (vocab.words() != ckpt.vocab) throw CheckpointError("checkpoint vocabulary has unexpected reserved entries");
    std::unique_ptr<JointModel> m(new JointModel(cfg, std::move(vocab), BindTag{}));
    ckpt.populate(m->params_);
    try {
        m->bind();
    } catch (const std::out_of_range& e) {
        throw CheckpointError(std::string("checkpoint is missing a tensor: ") + e.what());
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("checkpoint tensors do not fit the header: ") + e.what());
    }
    return m;
}

std::unique_ptr<JointModel> JointModel::load(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }

Checkpoint JointModel::checkpoint() const {
    Checkpoint c = Checkpoint::from_parameters(params_);
    c.header = cfg_.to_map();
    c.vocab = vocab_.words();
    return c;
}

void JointModel::save(const std::string& path) const { save_checkpoint(checkpoint(), path); }

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> lm_names(const JointModel& m) {
    auto names = m.lm().parameter_names();
    if (m.config().train.freeze_embeddings) names.erase(std::remove(names.begin(), names.end(), "lm/W_wrd"), names.end());
    return names;
}

}  // namespace

Trainer::Trainer(JointModel& model, const Split& split, Rng& rng)
    : model_(model),
      split_(split),
      rng_(rng),
      lm_opt_(lm_names(model), AdagradConfig{model.config().train.lm_lr, 1e-10, model.config().train.clip_norm}),
      pm_opt_(model.pm().parameter_names(),
              AdamConfig{model.config().train.adam_lr, 0.9, 0.999, 1e-8, model.config().train.clip_norm}),
      rm_opt_(model.rm().parameter_names(),
              AdamConfig{model.config().train.adam_lr, 0.9, 0.999, 1e-8, model.config().train.clip_norm}) {
    if (split.train.empty()) throw DataError("training split is empty");
    if (split.dev.empty()) throw DataError("dev split is empty");
    initial_ = previous_ = evaluate(split.dev);
}

void Trainer::apply(StepResult r, const char* what) {
    if (!r.applied) throw NumericError(std::string(what) + " step rejected: non-finite gradient in " + r.offending);
}

double Trainer::lm_step(const Sonnet& s) {
    auto& params = model_.params();
    params.zero_grad();
    Graph g;
    Pass pass(g, true, rng_);
    auto nll = model_.lm().sonnet_nll(pass, s.lines, model_.vocab());
    Var loss = scale(nll.total, Real(1) / static_cast<Real>(nll.tokens));
    const double value = static_cast<double>(loss.scalar());
    if (!std::isfinite(value)) throw NumericError("language model loss is not finite on " + s.id);
    g.backward(loss);
    apply(lm_opt_.step(params), "language model");
    return value;
}

double Trainer::pm_step(const Sonnet& s) {
    auto& params = model_.params();
    params.zero_grad();
    Graph g;
    std::vector<Var> parts;
    for (const auto& line : s.lines) {
        try {
            parts.push_back(model_.pm().loss(g, line).total);
        } catch (const DataError&) {
            // lines without a vowel carry no stress signal
        }
    }
    if (parts.empty()) return 0.0;
    Var loss = add_n(parts);
    const double value = static_cast<double>(loss.scalar());
    if (!std::isfinite(value)) throw NumericError("pentameter loss is not finite on " + s.id);
    g.backward(loss);
    apply(pm_opt_.step(params), "pentameter");
    return value / static_cast<double>(parts.size());
}

double Trainer::rm_step(const Sonnet& s) {
    auto& params = model_.params();
    params.zero_grad();
    Graph g;
    std::unordered_map<std::string, Var> cache;
    std::vector<Var> parts;
    for (std::size_t q = 0; q < Sonnet::kQuatrains; ++q) {
        const auto ends = quatrain_end_words(s.quatrain(q));
        for (const auto& ex : make_rhyme_examples(ends, model_.config().rm.k_neg, model_.vocab(), rng_))
            parts.push_back(model_.rm().loss(g, ex, &cache));
    }
    Var loss = add_n(parts);
    const double value = static_cast<double>(loss.scalar());
    if (!std::isfinite(value)) throw NumericError("rhyme loss is not finite on " + s.id);
    g.backward(loss);
    apply(rm_opt_.step(params), "rhyme");
    return value / static_cast<double>(parts.size());
}

DevLoss Trainer::evaluate(const std::vector<Sonnet>& sonnets) const {
    const auto& tc = model_.config().train;
    DevLoss d;
    if (tc.train_lm) {
        d.perplexity = model_.lm().perplexity(sonnets, model_.vocab());
        d.lm = std::log(d.perplexity);
    }
    if (tc.train_pm) {
        double total = 0;
        std::size_t n = 0;
        for (const auto& s : sonnets) {
            for (const auto& line : s.lines) {
                try {
                    total += model_.pm().conformity(line);
                    ++n;
                } catch (const DataError&) {
                }
            }
        }
        d.pm = n ? total / static_cast<double>(n) : 0.0;
    }
    if (tc.train_rm) {
        Rng fixed(0x5EED);
        double total = 0;
        std::size_t n = 0;
        for (const auto& s : sonnets) {
            Graph g(false);
            std::unordered_map<std::string, Var> cache;
            for (std::size_t q = 0; q < Sonnet::kQuatrains; ++q) {
                const auto ends = quatrain_end_words(s.quatrain(q));
                for (const auto& ex : make_rhyme_examples(ends, model_.config().rm.k_neg, model_.vocab(), fixed)) {
                    total += static_cast<double>(model_.rm().loss(g, ex, &cache).scalar());
                    ++n;
                }
            }
        }
        d.rm = n ? total / static_cast<double>(n) : 0.0;
    }
    d.total = d.lm + d.pm + d.rm;
    return d;
}

EpochLog Trainer::run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    const auto& tc = model_.config().train;
    const auto snapshot = model_.params().values();
    std::vector<std::size_t> order(split_.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);

    EpochLog log;
    log.epoch = ++epoch_;
    try {
        for (std::size_t i : order) {
            const Sonnet& s = split_.train[i];
            if (tc.train_lm) log.train_lm += lm_step(s);
            if (tc.train_pm) log.train_pm += pm_step(s);
            if (tc.train_rm) log.train_rm += rm_step(s);
        }
    } catch (const NumericError&) {
        model_.params().restore(snapshot);
        throw;
    }
    const double n = static_cast<double>(order.size());
    log.train_lm /= n;
    log.train_pm /= n;
    log.train_rm /= n;
    log.dev = evaluate(split_.dev);
    if (!std::isfinite(log.dev.total)) {
        model_.params().restore(snapshot);
        throw NumericError("dev loss is not finite after epoch " + std::to_string(log.epoch));
    }
    if (log.dev.total > previous_.total) {
        model_.params().restore(snapshot);
        log.restored = true;
        log.dev = previous_;
    } else {
        previous_ = log.dev;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return log;
}

std::vector<EpochLog> Trainer::train(int epochs, const std::function<void(const EpochLog&)>& on_epoch) {
    std::vector<EpochLog> logs;
    for (int e = 0; e < epochs; ++e) {
        logs.push_back(run_epoch());
        if (on_epoch) on_epoch(logs.back());
    }
    return logs;
}

}  // namespace sonnet
