#include "sonnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sonnet {

namespace {

std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }
std::string format(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

void parse(const std::string& s, int& out) {
    std::size_t pos = 0;
    out = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not an integer: " + s);
}
void parse(const std::string& s, std::uint64_t& out) {
    std::size_t pos = 0;
    out = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not an unsigned integer: " + s);
}
void parse(const std::string& s, double& out) {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not a number: " + s);
}
void parse(const std::string& s, bool& out) {
    if (s == "true" || s == "1" || s == "yes") out = true;
    else if (s == "false" || s == "0" || s == "no") out = false;
    else throw std::invalid_argument("not a boolean: " + s);
}
void parse(const std::string& s, std::string& out) { out = s; }

template <class Proj>
ConfigField field(std::string key, std::string doc, Proj proj) {
    return ConfigField{std::move(key), std::move(doc),
                       [proj](const RunConfig& c) { return format(proj(const_cast<RunConfig&>(c))); },
                       [proj](RunConfig& c, const std::string& v) { parse(v, proj(c)); }};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        field("seed", "master seed for initialization, dropout, sampling", [](RunConfig& c) -> auto& { return c.seed; }),

        field("lm.word_dim", "word embedding size", [](RunConfig& c) -> auto& { return c.lm.word_dim; }),
        field("lm.char_dim", "character embedding size (shared)", [](RunConfig& c) -> auto& { return c.lm.char_dim; }),
        field("lm.char_hidden", "character biLSTM size per direction (shared)", [](RunConfig& c) -> auto& { return c.lm.char_hidden; }),
        field("lm.enc_hidden", "context encoder biLSTM size per direction", [](RunConfig& c) -> auto& { return c.lm.enc_hidden; }),
        field("lm.dec_hidden", "decoder LSTM size", [](RunConfig& c) -> auto& { return c.lm.dec_hidden; }),
        field("lm.attn_dim", "attention scorer width", [](RunConfig& c) -> auto& { return c.lm.attn_dim; }),
        field("lm.dropout", "dropout on embeddings and LSTM outputs", [](RunConfig& c) -> auto& { return c.lm.dropout; }),
        field("lm.use_char", "feed character encodings to the decoder", [](RunConfig& c) -> auto& { return c.lm.use_char; }),
        field("lm.use_context", "attend over preceding lines", [](RunConfig& c) -> auto& { return c.lm.use_context; }),
        field("lm.reversed", "reverse word order within every line", [](RunConfig& c) -> auto& { return c.lm.reversed; }),
        field("lm.context_lines", "preceding lines used as context", [](RunConfig& c) -> auto& { return c.lm.context_lines; }),

        field("pm.dec_hidden", "stress decoder LSTM size", [](RunConfig& c) -> auto& { return c.pm.dec_hidden; }),
        field("pm.attn_dim", "position and attention scorer width", [](RunConfig& c) -> auto& { return c.pm.attn_dim; }),
        field("pm.T", "Gaussian std over character positions", [](RunConfig& c) -> auto& { return c.pm.T; }),
        field("pm.alpha", "repeat loss weight", [](RunConfig& c) -> auto& { return c.pm.alpha; }),
        field("pm.beta", "coverage loss weight", [](RunConfig& c) -> auto& { return c.pm.beta; }),
        field("pm.C", "coverage threshold", [](RunConfig& c) -> auto& { return c.pm.C; }),

        field("rm.hidden", "rhyme encoder LSTM size", [](RunConfig& c) -> auto& { return c.rm.hidden; }),
        field("rm.delta", "margin", [](RunConfig& c) -> auto& { return c.rm.delta; }),
        field("rm.k_neg", "negative references per example", [](RunConfig& c) -> auto& { return c.rm.k_neg; }),

        field("train.epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
        field("train.lm_lr", "Adagrad learning rate (language model)", [](RunConfig& c) -> auto& { return c.train.lm_lr; }),
        field("train.adam_lr", "Adam learning rate (stress and rhyme models)", [](RunConfig& c) -> auto& { return c.train.adam_lr; }),
        field("train.clip_norm", "global gradient norm clip", [](RunConfig& c) -> auto& { return c.train.clip_norm; }),
        field("train.lm", "train the language model", [](RunConfig& c) -> auto& { return c.train.train_lm; }),
        field("train.pm", "train the stress model", [](RunConfig& c) -> auto& { return c.train.train_pm; }),
        field("train.rm", "train the rhyme model", [](RunConfig& c) -> auto& { return c.train.train_rm; }),
        field("train.freeze_embeddings", "keep lm/W_wrd fixed", [](RunConfig& c) -> auto& { return c.train.freeze_embeddings; }),
        field("train.min_freq", "vocabulary frequency cutoff", [](RunConfig& c) -> auto& { return c.train.min_freq; }),
        field("train.split_train", "train fraction", [](RunConfig& c) -> auto& { return c.train.split[0]; }),
        field("train.split_dev", "dev fraction", [](RunConfig& c) -> auto& { return c.train.split[1]; }),
        field("train.split_test", "test fraction", [](RunConfig& c) -> auto& { return c.train.split[2]; }),
        field("train.split_seed", "partition seed", [](RunConfig& c) -> auto& { return c.train.split_seed; }),

        field("embeddings.dim", "skip-gram vector size", [](RunConfig& c) -> auto& { return c.embeddings.dim; }),
        field("embeddings.window", "skip-gram window", [](RunConfig& c) -> auto& { return c.embeddings.window; }),
        field("embeddings.k_negative", "skip-gram negatives", [](RunConfig& c) -> auto& { return c.embeddings.k_negative; }),
        field("embeddings.epochs", "skip-gram epochs", [](RunConfig& c) -> auto& { return c.embeddings.epochs; }),
        field("embeddings.lr", "skip-gram initial learning rate", [](RunConfig& c) -> auto& { return c.embeddings.lr; }),
        field("embeddings.min_count", "skip-gram frequency cutoff", [](RunConfig& c) -> auto& { return c.embeddings.min_count; }),

        field("gen.temperature", "word sampling temperature", [](RunConfig& c) -> auto& { return c.gen.temperature; }),
        field("gen.candidates", "candidate lines per quatrain line", [](RunConfig& c) -> auto& { return c.gen.candidates; }),
        field("gen.select_temperature", "line selection temperature", [](RunConfig& c) -> auto& { return c.gen.select_temperature; }),
        field("gen.rhyme_accept", "minimum score for rhyme partners", [](RunConfig& c) -> auto& { return c.gen.rhyme_accept; }),
        field("gen.nonrhyme_accept", "maximum score for non-partners", [](RunConfig& c) -> auto& { return c.gen.nonrhyme_accept; }),
        field("gen.resample_cap", "draws per token before a restart", [](RunConfig& c) -> auto& { return c.gen.resample_cap; }),
        field("gen.restart_budget", "quatrain restarts before giving up", [](RunConfig& c) -> auto& { return c.gen.restart_budget; }),
        field("gen.scheme", "AABB, ABAB, ABBA or random", [](RunConfig& c) -> auto& { return c.gen.scheme; }),
        field("gen.min_words", "minimum words per line", [](RunConfig& c) -> auto& { return c.gen.min_words; }),
        field("gen.max_words", "maximum words per line", [](RunConfig& c) -> auto& { return c.gen.max_words; }),
        field("gen.max_tokens", "maximum tokens per line", [](RunConfig& c) -> auto& { return c.gen.max_tokens; }),

        field("eval.stress_threshold", "attention needed to assign a stress", [](RunConfig& c) -> auto& { return c.eval.stress_threshold; }),
        field("eval.rhyme_threshold", "cosine at which a pair counts as rhyming", [](RunConfig& c) -> auto& { return c.eval.rhyme_threshold; }),
        field("eval.error_rows", "rows per side of the error table", [](RunConfig& c) -> auto& { return c.eval.error_rows; }),

        field("paths.corpus_dir", "prepared corpus directory", [](RunConfig& c) -> auto& { return c.paths.corpus_dir; }),
        field("paths.embeddings", "pretrained embeddings (empty: none)", [](RunConfig& c) -> auto& { return c.paths.embeddings; }),
        field("paths.dictionary", "CMU-format pronunciation dictionary", [](RunConfig& c) -> auto& { return c.paths.dictionary; }),
        field("paths.stopwords", "stopword list for generation", [](RunConfig& c) -> auto& { return c.paths.stopwords; }),
    };
    return fields;
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> m;
    for (const auto& f : config_fields()) m[f.key] = f.get(*this);
    return m;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : config_fields()) {
        if (f.key != key) continue;
        try {
            f.set(*this, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config key '" + key + "': " + e.what());
        }
        return;
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::apply(const std::map<std::string, std::string>& values, bool ignore_unknown) {
    for (const auto& [k, v] : values) {
        bool known = false;
        for (const auto& f : config_fields()) known = known || f.key == k;
        if (!known && ignore_unknown) continue;
        set(k, v);
    }
}

void RunConfig::validate() const {
    if (lm.word_dim <= 0 || lm.char_dim <= 0 || lm.char_hidden <= 0 || lm.enc_hidden <= 0 || lm.dec_hidden <= 0 ||
        lm.attn_dim <= 0 || pm.dec_hidden <= 0 || pm.attn_dim <= 0 || rm.hidden <= 0)
        throw std::invalid_argument("all dimensions must be positive");
    if (!(lm.dropout >= 0.0 && lm.dropout < 1.0)) throw std::invalid_argument("lm.dropout must be in [0, 1)");
    if (lm.context_lines < 1) throw std::invalid_argument("lm.context_lines must be at least 1");
    if (!(pm.T > 0.0) || pm.alpha < 0.0 || pm.beta < 0.0 || !(pm.C > 0.0 && pm.C <= 10.0))
        throw std::invalid_argument("need pm.T > 0, pm.alpha, pm.beta >= 0 and 0 < pm.C <= 10");
    if (!(rm.delta > 0.0) || rm.k_neg < 0) throw std::invalid_argument("need rm.delta > 0 and rm.k_neg >= 0");
    if (train.epochs < 0 || train.min_freq < 1) throw std::invalid_argument("need train.epochs >= 0 and train.min_freq >= 1");
    gen.validate();
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    int n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig c;
    c.apply(parse_config_text(ss.str()));
    c.validate();
    return c;
}

std::string config_reference() {
    const RunConfig defaults;
    std::ostringstream os;
    for (const auto& f : config_fields()) os << "# " << f.doc << "\n" << f.key << " = " << f.get(defaults) << "\n";
    return os.str();
}

}  // namespace sonnet
