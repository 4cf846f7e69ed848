#include "sonnet/prepare.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sonnet {

namespace fs = std::filesystem;

SonnetFilter lines_only_filter() {
    SonnetFilter f;
    f.min_mean_words = 0;
    f.max_mean_words = 1e9;
    f.min_mean_chars = 0;
    f.max_mean_chars = 1e9;
    f.min_words = 0;
    f.max_words = static_cast<std::size_t>(-1);
    f.min_chars = 0;
    f.max_chars = static_cast<std::size_t>(-1);
    f.min_letter_ratio = 0;
    return f;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Sonnet> read_partition(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return read_sonnets(in);
}

}  // namespace

std::size_t count_words(const std::vector<Sonnet>& sonnets) {
    std::size_t n = 0;
    for (const auto& s : sonnets)
        for (const auto& line : s.lines) n += word_count(line);
    return n;
}

std::string format_stats(const Split& split) {
    std::ostringstream out;
    char buf[128];
    out << "Partition  #Sonnets   #Words\n";
    const std::pair<const char*, const std::vector<Sonnet>*> rows[] = {
        {"Train", &split.train}, {"Dev", &split.dev}, {"Test", &split.test}};
    std::size_t ts = 0, tw = 0;
    for (const auto& [name, part] : rows) {
        const std::size_t w = count_words(*part);
        std::snprintf(buf, sizeof buf, "%-9s %9zu %8zu\n", name, part->size(), w);
        out << buf;
        ts += part->size();
        tw += w;
    }
    std::snprintf(buf, sizeof buf, "%-9s %9zu %8zu\n", "Total", ts, tw);
    out << buf;
    return out.str();
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ostringstream out;
    for (int i = Vocab::kReserved; i < vocab.size(); ++i) out << vocab.word(i) << '\t' << vocab.frequency(i) << '\n';
    write_file(path, out.str());
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::vector<std::string> words;
    std::vector<std::int64_t> counts;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw DataError("malformed vocabulary line: " + line);
        words.push_back(line.substr(0, tab));
        try {
            counts.push_back(std::stoll(line.substr(tab + 1)));
        } catch (const std::exception&) {
            throw DataError("malformed vocabulary count: " + line);
        }
    }
    Vocab v;
    try {
        v = Vocab(words);
    } catch (const std::invalid_argument& e) {
        throw DataError(path + ": " + e.what());
    }
    for (std::size_t i = 0; i < counts.size(); ++i) v.set_frequency(static_cast<int>(i) + Vocab::kReserved, counts[i]);
    return v;
}

PrepareResult prepare_corpus(const std::string& poems_path, const std::string& out_dir, const PrepareOptions& opt) {
    const auto poems = read_poems_file(poems_path);
    auto sonnets = filter_sonnets(poems, opt.filter);
    if (sonnets.empty()) throw DataError("no sonnets left after filtering " + poems_path);

    PrepareResult r;
    r.poems = poems.size();
    r.split = partition(std::move(sonnets), opt.split, opt.split_seed);
    if (r.split.train.empty()) throw DataError("training partition is empty");
    r.vocab = build_vocab(r.split.train, opt.min_freq);

    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());

    std::ostringstream index;
    const std::pair<const char*, const std::vector<Sonnet>*> parts[] = {
        {"train", &r.split.train}, {"dev", &r.split.dev}, {"test", &r.split.test}};
    for (const auto& [name, part] : parts) {
        std::ostringstream text;
        write_sonnets(text, *part);
        write_file(dir / (std::string(name) + ".txt"), text.str());
        for (const auto& s : *part) index << name << '\t' << s.id << '\n';
    }
    write_file(dir / "split.idx", index.str());
    save_vocab(r.vocab, (dir / "vocab.txt").string());
    write_file(dir / "stats.txt", format_stats(r.split));
    return r;
}

Split load_prepared(const std::string& dir) {
    const fs::path d(dir);
    Split s;
    s.train = read_partition(d / "train.txt");
    s.dev = read_partition(d / "dev.txt");
    s.test = read_partition(d / "test.txt");
    return s;
}

}  // namespace sonnet
