#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonnet/checkpoint.hpp"
#include "sonnet/config.hpp"
#include "sonnet/optim.hpp"

namespace sonnet {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The three models over one parameter registry.
class JointModel {
public:
    JointModel(const RunConfig& cfg, Vocab vocab);
    // Rebuilds a model from a checkpoint; the header supplies the config.
    static std::unique_ptr<JointModel> from_checkpoint(const Checkpoint& ckpt);
    static std::unique_ptr<JointModel> load(const std::string& path);

    Checkpoint checkpoint() const;
    void save(const std::string& path) const;

    const RunConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const LanguageModel& lm() const { return *lm_; }
    const PentameterModel& pm() const { return *pm_; }
    const RhymeModel& rm() const { return *rm_; }

private:
    struct BindTag {};
    JointModel(const RunConfig& cfg, Vocab vocab, BindTag);
    void bind();

    RunConfig cfg_;
    Vocab vocab_;
    ParameterSet params_;
    std::unique_ptr<LanguageModel> lm_;
    std::unique_ptr<PentameterModel> pm_;
    std::unique_ptr<RhymeModel> rm_;
};

struct DevLoss {
    double lm = 0.0;  // mean per-token NLL
    double pm = 0.0;  // mean per line
    double rm = 0.0;  // mean per example
    double total = 0.0;
    double perplexity = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double train_lm = 0.0;
    double train_pm = 0.0;
    double train_rm = 0.0;
    DevLoss dev;
    bool restored = false;
    double seconds = 0.0;
};

class Trainer {
public:
    Trainer(JointModel& model, const Split& split, Rng& rng);

    // Dev losses of the enabled components, dropout off.
    DevLoss evaluate(const std::vector<Sonnet>& sonnets) const;
    // One pass over the shuffled training set, then the dev check; a worse
    // dev total restores the previous epoch's weights.
    EpochLog run_epoch();
    std::vector<EpochLog> train(int epochs, const std::function<void(const EpochLog&)>& on_epoch = {});

    const DevLoss& initial_dev() const { return initial_; }

private:
    double lm_step(const Sonnet& s);
    double pm_step(const Sonnet& s);
    double rm_step(const Sonnet& s);
    void apply(StepResult r, const char* what);

    JointModel& model_;
    const Split& split_;
    Rng& rng_;
    Adagrad lm_opt_;
    Adam pm_opt_;
    Adam rm_opt_;
    DevLoss initial_;
    DevLoss previous_;
    int epoch_ = 0;
};

}  // namespace sonnet
