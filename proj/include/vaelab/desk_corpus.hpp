#pragma once

// A small English-like language for desk experiments. Sentences come from a
// probabilistic grammar with subject-verb number agreement, prepositional
// attractors, relative clauses and coordination. Word choice within each
// class is Zipfian so the corpus has a realistic frequency profile.

#include "vaelab/corpus.hpp"
#include "vaelab/syntax_probe.hpp"

#include <cstdint>
#include <filesystem>

namespace vaelab {

struct DeskCorpusOptions {
    std::size_t train = 5000;
    std::size_t dev = 500;
    std::size_t test = 500;
    std::size_t pairs_per_group = 50;
    std::size_t min_len = 3;
    std::size_t max_len = 20;
    std::uint64_t seed = 7;
};

struct DeskCorpus {
    TokenizedText train;
    TokenizedText dev;
    TokenizedText test;
    std::vector<MinimalPair> pairs;
};

DeskCorpus make_desk_corpus(const DeskCorpusOptions& options = {});

// Writes train.txt, dev.txt, test.txt and pairs.tsv into `dir`.
void write_desk_corpus(const std::filesystem::path& dir, const DeskCorpus& corpus);

// Every word the grammar can emit.
std::vector<std::string> desk_lexicon();

}  // namespace vaelab
