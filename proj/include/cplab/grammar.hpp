#pragma once

// Synthetic bilingual grammar: two artificial languages with disjoint
// lexicons (up to a configurable cognate overlap), noun-class determiners,
// number agreement between subject and verb, SOV vs SVO order, and minimal
// pairs built by corrupting exactly one morpheme.

#include <cstdint>
#include <string>
#include <vector>

#include "cplab/corpus.hpp"

namespace cplab {

struct MinimalPair {
    std::string good;
    std::string bad;
    std::string phenomenon;
};

struct SyntheticGrammar {
    std::uint64_t seed = 0;
    double overlap_fraction = 0.0;  // shared cognate stems between the languages
    int noun_stems_per_class = 40;  // two noun classes
    int verb_stems = 30;
};

struct Lexicon {
    std::string tag;  // "l1" | "l2"
    bool svo = false;
    std::vector<std::string> nouns_a, nouns_b, verbs;  // stems
    std::string det_a, det_b;
    std::string noun_sg, noun_pl;  // number suffixes
    std::string verb_sg, verb_pl;  // agreement suffixes
};

struct BuiltGrammar {
    Lexicon l1;  // SOV
    Lexicon l2;  // SVO
};

BuiltGrammar build_lexicons(const SyntheticGrammar& g);

CorpusSource generate_corpus(const Lexicon& lex, const std::string& language_tag,
                             std::size_t n_sentences, std::uint64_t text_seed);

std::vector<MinimalPair> generate_pairs(const Lexicon& lex, std::size_t n_pairs,
                                        std::uint64_t pair_seed);

struct SynthOutput {
    CorpusSource l1;
    CorpusSource l2;
    std::vector<MinimalPair> pairs_l1;
    std::vector<MinimalPair> pairs_l2;
};

SynthOutput synth_generate(const SyntheticGrammar& g, std::size_t n_sentences, std::size_t n_pairs);

void save_pairs_tsv(const std::vector<MinimalPair>& pairs, const std::string& path);
std::vector<MinimalPair> load_pairs_tsv(const std::string& path);

}  // namespace cplab
