#pragma once

// Byte-level BPE: training, encode/decode, and fixed-size blockification.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cplab/common.hpp"

namespace cplab {

// Learned merges plus the byte-string of every token. Token ids 0..255 are the
// raw bytes; merge k produces id 256+k. EOS and MASK live directly above the
// trained vocabulary and are never produced by encode.
struct TokenizerModel {
    int requested_vocab = 0;
    int min_frequency = 2;
    std::uint64_t seed = 0;
    bool pre_split = true;
    std::vector<std::pair<std::int32_t, std::int32_t>> merges;
    std::vector<std::string> token_bytes;  // size = 256 + merges.size()

    int vocab_size() const { return static_cast<int>(token_bytes.size()); }
    std::int32_t eos_id() const { return vocab_size(); }
    std::int32_t mask_id() const { return vocab_size() + 1; }
    // Width of the model softmax: trained vocabulary plus EOS and MASK.
    int model_vocab() const { return vocab_size() + 2; }

    std::uint64_t fingerprint() const;
};

// Greedy highest-count pair merging until `vocab_size` tokens exist or no pair
// reaches `min_frequency`. Ties break to the lexicographically smallest pair
// of token byte-strings.
TokenizerModel train_bpe(std::string_view corpus, int vocab_size, int min_frequency,
                         std::uint64_t seed, bool pre_split = true);

std::vector<std::int32_t> encode(const TokenizerModel& t, std::string_view text);
std::string decode(const TokenizerModel& t, std::span<const std::int32_t> ids);

void save_tokenizer(const TokenizerModel& t, const std::string& path);
TokenizerModel load_tokenizer(const std::string& path);

// Ordered fixed-length blocks of token ids with provenance.
struct BlockDataset {
    int block_length = 512;
    std::string language;
    std::vector<std::vector<std::int32_t>> blocks;  // each exactly block_length
    std::uint64_t source_char_count = 0;            // Unicode scalars of the source text
    std::uint64_t dropped_tokens = 0;               // trailing remainder

    std::size_t size() const { return blocks.size(); }
    std::uint64_t token_count() const { return blocks.size() * static_cast<std::uint64_t>(block_length); }
};

// Full blocks in order; the trailing remainder is dropped and counted.
BlockDataset blockify(std::span<const std::int32_t> ids, int block_length, std::string language,
                      std::uint64_t source_char_count);

}  // namespace cplab
