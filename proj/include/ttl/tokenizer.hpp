// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "ttl/errors.hpp"

namespace ttl {

// Byte-level BPE tokenizer with byte fallback: the base vocabulary holds the
// four control tokens followed by all 256 byte values, so every byte string
// encodes and decode(encode(s)) == s exactly.
//
// Whitespace is handled by a marker-prefix convention: a single space before
// a word is attached to that word's chunk (" word"), longer whitespace runs
// keep their excess as separate chunks. Merges never cross chunk boundaries.
class Tokenizer {
  public:
    struct TrainOptions {
        int64_t vocab_size = 32000;
        // Merges with fewer occurrences than this stop training early.
        int64_t min_pair_frequency = 2;
        // Cap on distinct chunk entries in the streaming frequency table.
        // When exceeded, lowest-count entries are pruned (counts become
        // approximate for very large corpora).
        int64_t max_table_entries = 1 << 22;
    };

    static constexpr int32_t kUnkId = 0;
    static constexpr int32_t kBosId = 1;
    static constexpr int32_t kEosId = 2;
    static constexpr int32_t kPadId = 3;
    static constexpr int32_t kNumSpecials = 4;
    static constexpr int32_t kByteBase = kNumSpecials; // byte b -> id kByteBase + b

    Tokenizer() = default;

    static Tokenizer train(std::istream& corpus, const TrainOptions& opts);
    static Tokenizer train(std::string_view corpus, const TrainOptions& opts);
    static Tokenizer train(std::istream& corpus) { return train(corpus, TrainOptions{}); }
    static Tokenizer train(std::string_view corpus) { return train(corpus, TrainOptions{}); }

    std::vector<int32_t> encode(std::string_view text) const;
    // strip_specials: control ids vanish; otherwise they render as their names.
    std::string decode(const std::vector<int32_t>& ids, bool strip_specials = true) const;

    int64_t vocab_size() const { return static_cast<int64_t>(vocab_.size()); }
    const std::string& token_bytes(int32_t id) const;
    const std::vector<std::pair<int32_t, int32_t>>& merges() const { return merges_; }

    int32_t bos_id() const { return kBosId; }
    int32_t eos_id() const { return kEosId; }
    int32_t pad_id() const { return kPadId; }
    int32_t unk_id() const { return kUnkId; }

    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);
    std::string serialize() const;
    static Tokenizer deserialize(std::string_view text);
    // FNV-1a of the serialized model; datasets and checkpoints record it.
    uint64_t fingerprint() const;

    // Reversible pre-tokenization; exposed for tests.
    static std::vector<std::string> chunk_text(std::string_view text);

  private:
    std::vector<std::string> vocab_; // id -> bytes (special names for ids < 4)
    std::vector<std::pair<int32_t, int32_t>> merges_;

    void rebuild_merge_index();
    std::vector<uint64_t> merge_keys_; // sorted (left<<32|right) for rank lookup
    std::vector<int32_t> merge_ranks_;
    int32_t merge_rank(int32_t left, int32_t right) const;
    void encode_chunk(std::string_view chunk, std::vector<int32_t>& out) const;
};

// One measured (or externally supplied) tokenizer-efficiency row.
struct FertilityRow {
    std::string name;
    uint64_t token_count = 0;
    uint64_t vocab_size = 0;
    double fertility = 0.0; // token_count / word_count
};

struct EfficiencyReport {
    uint64_t word_count = 0;
    std::vector<FertilityRow> rows; // ascending by token_count

    std::string text() const;
    std::string csv() const;
};

// Counts the tokens each tokenizer needs for the whitespace-separated words
// of `wordlist` (each word encoded in isolation), merges in fixture rows,
// and sorts ascending by token count. word_count falls back to the wordlist
// length; fixture-only calls must pass it explicitly.
EfficiencyReport benchmark_fertility(
    const std::vector<std::pair<std::string, const Tokenizer*>>& models,
    const std::vector<FertilityRow>& fixtures, std::string_view wordlist,
    uint64_t word_count_override = 0);

// Fixture file: one `name,token_count,vocab_size` line per row ('#' comments).
std::vector<FertilityRow> load_fertility_fixtures(const std::string& path);

} // namespace ttl
