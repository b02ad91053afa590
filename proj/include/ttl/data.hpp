// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ttl/tokenizer.hpp"

namespace ttl {

// Fixed-length token sequences packed across document boundaries.
struct PackedDataset {
    int64_t sequence_length = 2048;
    std::vector<int32_t> tokens; // n_sequences * sequence_length, row-major
    uint64_t tokenizer_fingerprint = 0;

    struct ManifestEntry {
        std::string source;
        uint64_t documents = 0;
        uint64_t tokens = 0;
    };
    std::vector<ManifestEntry> manifest;

    int64_t n_sequences() const {
        return sequence_length == 0 ? 0 : static_cast<int64_t>(tokens.size()) / sequence_length;
    }
    int64_t total_tokens() const { return static_cast<int64_t>(tokens.size()); }
    const int32_t* sequence(int64_t i) const { return tokens.data() + i * sequence_length; }

    void save(const std::string& path) const;
    static PackedDataset load(const std::string& path);
};

// Prompt mask aligned with a PackedDataset: 1 = prompt position (excluded
// from the SFT loss), 0 = completion position.
struct PackedMask {
    int64_t sequence_length = 2048;
    std::vector<uint8_t> mask;

    void save(const std::string& path) const;
    static PackedMask load(const std::string& path);
};

struct IngestFilters {
    int64_t min_doc_bytes = 0;       // drop shorter documents
    double max_non_alnum_ratio = 1.0; // drop documents with more symbol noise
};

// True when the document passes both ingestion filters. Bytes >= 0x80 count
// as alphanumeric so multi-byte letters are not penalized.
bool passes_filters(std::string_view doc, const IngestFilters& filters);

// Encodes documents in order, appending eos after each one (an empty
// document contributes a single eos). Filtered documents are skipped.
std::vector<int32_t> tokenize_corpus(const Tokenizer& tok,
                                     const std::vector<std::string>& documents,
                                     const IngestFilters& filters = {});

// Greedy packing; the final partial block is dropped, never padded.
PackedDataset pack(const std::vector<int32_t>& stream, int64_t sequence_length,
                   uint64_t tokenizer_fingerprint = 0);

// Deterministic disjoint split; eval gets round(fraction * n) sequences.
std::pair<PackedDataset, PackedDataset> split_eval(const PackedDataset& dataset,
                                                   double fraction = 0.01, uint64_t seed = 0);

// Splits raw text into documents at blank lines (or per line).
std::vector<std::string> split_documents(std::string_view text, bool per_line = false);

// SFT ingestion: one "prompt \t completion" pair per line. Tokens are
// prompt + completion + eos packed across boundaries; the mask flags the
// prompt positions (the eos counts as completion).
std::pair<PackedDataset, PackedMask> pack_sft(
    const Tokenizer& tok, const std::vector<std::pair<std::string, std::string>>& pairs,
    int64_t sequence_length);

} // namespace ttl
