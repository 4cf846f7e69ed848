#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sonnet/embeddings.hpp"
#include "sonnet/generator.hpp"
#include "sonnet/langmodel.hpp"
#include "sonnet/pentameter.hpp"
#include "sonnet/rhyme.hpp"

namespace sonnet {

// Environment variable naming the config file read when --config is absent.
inline constexpr const char* kConfigEnv = "SONNET_CONFIG";

struct TrainConfig {
    int epochs = 30;
    double lm_lr = 0.05;     // Adagrad
    double adam_lr = 0.001;  // pentameter and rhyme models
    double clip_norm = 5.0;
    bool train_lm = true;
    bool train_pm = true;
    bool train_rm = true;
    bool freeze_embeddings = false;
    int min_freq = 2;
    std::array<double, 3> split = {0.8, 0.1, 0.1};
    std::uint64_t split_seed = 1;
};

struct EvalConfig {
    double stress_threshold = 0.20;
    double rhyme_threshold = 0.8;
    int error_rows = 10;
};

struct PathConfig {
    std::string corpus_dir = "corpus";
    std::string embeddings;  // optional pretrained skip-gram vectors
    std::string dictionary = "data/cmudict.dict";
    std::string stopwords = "data/stopwords_en.txt";
};

struct RunConfig {
    std::uint64_t seed = 1;
    LmConfig lm;
    PmConfig pm;
    RmConfig rm;
    TrainConfig train;
    SkipGramConfig embeddings;
    GenConfig gen;
    EvalConfig eval;
    PathConfig paths;

    // Every key with its current value, in registry order.
    std::map<std::string, std::string> to_map() const;
    void set(const std::string& key, const std::string& value);
    void apply(const std::map<std::string, std::string>& values, bool ignore_unknown = false);
    void validate() const;
};

struct ConfigField {
    std::string key;
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigField>& config_fields();

// Flat "key = value" text; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
// Commented reference listing every key and its default.
std::string config_reference();

}  // namespace sonnet
