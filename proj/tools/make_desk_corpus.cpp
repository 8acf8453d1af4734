// Writes the grammar-generated desk corpus (train/dev/test text and minimal
// pairs) into a directory.

#include "vaelab/desk_corpus.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"make_desk_corpus: synthetic agreement corpus for desk experiments"};
    vaelab::DeskCorpusOptions o;
    std::string out = "data/desk";
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--seed", o.seed, "grammar sampling seed")->capture_default_str();
    app.add_option("--train", o.train, "training sentences")->capture_default_str();
    app.add_option("--dev", o.dev, "development sentences")->capture_default_str();
    app.add_option("--test", o.test, "test sentences")->capture_default_str();
    app.add_option("--pairs", o.pairs_per_group, "minimal pairs per sub-category")->capture_default_str();
    app.add_option("--max-len", o.max_len, "longest sentence in tokens")->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        const auto corpus = vaelab::make_desk_corpus(o);
        vaelab::write_desk_corpus(out, corpus);
        std::cerr << "wrote " << corpus.train.size() << '/' << corpus.dev.size() << '/' << corpus.test.size()
                  << " sentences and " << corpus.pairs.size() << " pairs to " << out << '\n';
    } catch (const std::exception& e) {
        std::cerr << "make_desk_corpus: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
