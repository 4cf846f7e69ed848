#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sonnet/corpus.hpp"

namespace sonnet {

// Keeps only the 14-line rule. Shakespeare averages under 8 words a line,
// so the default thresholds drop about a third of his sonnets.
SonnetFilter lines_only_filter();

struct PrepareOptions {
    std::array<double, 3> split = {0.8, 0.1, 0.1};
    std::uint64_t split_seed = 1;
    int min_freq = 2;
    SonnetFilter filter;
};

struct PrepareResult {
    std::size_t poems = 0;
    Split split;
    Vocab vocab;
};

// Prepared corpus directory layout:
//   train.txt dev.txt test.txt   sonnets, "# id" then 14 tokenized lines
//   split.idx                    "<partition>\t<id>" per sonnet
//   vocab.txt                    "<word>\t<count>" in id order, reserved entries excluded
//   stats.txt                    sonnet and word counts per partition
PrepareResult prepare_corpus(const std::string& poems_path, const std::string& out_dir, const PrepareOptions& opt);
Split load_prepared(const std::string& dir);
Vocab load_vocab(const std::string& path);
void save_vocab(const Vocab& vocab, const std::string& path);

std::size_t count_words(const std::vector<Sonnet>& sonnets);
std::string format_stats(const Split& split);

}  // namespace sonnet
