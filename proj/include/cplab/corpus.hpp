#pragma once

// Plain-text corpus pipeline: cleaning, domain unification into line blocks,
// train/validation/test splitting, interleaving, and token-count alignment.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cplab/common.hpp"
#include "cplab/tokenizer.hpp"

namespace cplab {

struct CorpusSource {
    std::string domain;    // spoken | literature | nonfiction | synthetic | ...
    std::string language;
    std::vector<std::string> lines;

    std::size_t line_count() const { return lines.size(); }
    std::uint64_t char_count() const;
};

// Strip outer whitespace, collapse internal space runs, replace non-breaking
// spaces, drop lines that end up empty.
std::vector<std::string> clean_lines(const std::vector<std::string>& raw);

enum class Split : int { Train = 0, Validation = 1, Test = 2 };

struct LineBlock {
    std::string origin;  // domain tag
    std::vector<std::string> lines;
};

struct UnifiedCorpus {
    std::string language;
    std::uint64_t seed = 0;
    std::vector<LineBlock> blocks;
    std::vector<Split> split_assignment;  // parallel to blocks once assigned
};

// Sample whole blocks (up to `block_lines` lines each) per domain so that the
// selected block counts follow the given ratio, then shuffle the union once.
UnifiedCorpus unify(const std::vector<CorpusSource>& sources,
                    const std::vector<std::pair<std::string, double>>& ratio, std::uint64_t seed,
                    std::size_t block_lines = 10000);

// Largest-remainder apportionment of n blocks into 83 / 8.5 / 8.5 percent.
std::array<std::size_t, 3> apportion_blocks(std::size_t n_blocks);

// Randomly assigns each block to a split with exact apportionment counts.
void assign_splits(UnifiedCorpus& c);

// Blocks of one split, in order, each joined into newline-terminated text.
std::vector<std::string> split_block_texts(const UnifiedCorpus& c, Split which);
std::string split_text(const UnifiedCorpus& c, Split which);

// Alternating L1,L2,... at block granularity; a longer tail is appended.
template <typename T>
std::vector<T> interleave(const std::vector<T>& l1, const std::vector<T>& l2) {
    std::vector<T> out;
    out.reserve(l1.size() + l2.size());
    const std::size_t common = std::min(l1.size(), l2.size());
    for (std::size_t i = 0; i < common; ++i) {
        out.push_back(l1[i]);
        out.push_back(l2[i]);
    }
    for (std::size_t i = common; i < l1.size(); ++i) out.push_back(l1[i]);
    for (std::size_t i = common; i < l2.size(); ++i) out.push_back(l2[i]);
    return out;
}

// Truncate each corpus (a list of block texts) at block granularity to the
// smallest prefix reaching `target_tokens`. Resulting sizes land within one
// block of the target. Fails naming the shortfall if a corpus is too small.
struct AlignedSizes {
    std::vector<std::size_t> blocks_kept;
    std::vector<std::uint64_t> token_counts;
};
AlignedSizes align_size(std::vector<std::vector<std::string>>& corpora, std::uint64_t target_tokens,
                        const TokenizerModel& tokenizer);

}  // namespace cplab
