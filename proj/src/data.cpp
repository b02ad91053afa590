// SPDX-License-Identifier: Apache-2.0
#include "ttl/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "ttl/io_util.hpp"
#include "ttl/rng.hpp"

namespace ttl {

namespace {
constexpr char kDatasetMagic[4] = {'T', 'T', 'L', 'D'};
constexpr char kMaskMagic[4] = {'T', 'T', 'L', 'M'};
constexpr uint32_t kDatasetVersion = 1;
} // namespace

bool passes_filters(std::string_view doc, const IngestFilters& f) {
    if (static_cast<int64_t>(doc.size()) < f.min_doc_bytes) return false;
    if (f.max_non_alnum_ratio < 1.0 && !doc.empty()) {
        int64_t noise = 0;
        for (unsigned char c : doc)
            if (c < 0x80 && !std::isalnum(c) && !std::isspace(c)) ++noise;
        if (static_cast<double>(noise) / static_cast<double>(doc.size()) >
            f.max_non_alnum_ratio)
            return false;
    }
    return true;
}

std::vector<int32_t> tokenize_corpus(const Tokenizer& tok,
                                     const std::vector<std::string>& documents,
                                     const IngestFilters& filters) {
    std::vector<int32_t> stream;
    for (const auto& doc : documents) {
        if (!passes_filters(doc, filters)) continue;
        auto ids = tok.encode(doc);
        stream.insert(stream.end(), ids.begin(), ids.end());
        stream.push_back(tok.eos_id());
    }
    return stream;
}

PackedDataset pack(const std::vector<int32_t>& stream, int64_t sequence_length,
                   uint64_t tokenizer_fingerprint) {
    if (sequence_length < 2) throw ConfigError("pack: sequence_length must be >= 2");
    PackedDataset ds;
    ds.sequence_length = sequence_length;
    ds.tokenizer_fingerprint = tokenizer_fingerprint;
    const int64_t n_sequences = static_cast<int64_t>(stream.size()) / sequence_length;
    ds.tokens.assign(stream.begin(), stream.begin() + n_sequences * sequence_length);
    return ds;
}

std::pair<PackedDataset, PackedDataset> split_eval(const PackedDataset& dataset,
                                                   double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DomainError("split_eval: fraction must lie in (0, 1)");
    const int64_t n = dataset.n_sequences();
    const int64_t n_eval = static_cast<int64_t>(std::llround(fraction * static_cast<double>(n)));
    if (n_eval < 1 || n_eval >= n)
        throw DomainError("split_eval: dataset too small for a non-empty split");

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng = Rng::derive(seed, /*stream=*/0xe5a1);
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(i + 1)))]);

    auto take = [&](int64_t begin, int64_t end) {
        PackedDataset out;
        out.sequence_length = dataset.sequence_length;
        out.tokenizer_fingerprint = dataset.tokenizer_fingerprint;
        out.tokens.reserve(static_cast<size_t>((end - begin) * dataset.sequence_length));
        for (int64_t i = begin; i < end; ++i) {
            const int32_t* seq = dataset.sequence(order[static_cast<size_t>(i)]);
            out.tokens.insert(out.tokens.end(), seq, seq + dataset.sequence_length);
        }
        return out;
    };
    return {take(n_eval, n), take(0, n_eval)};
}

std::vector<std::string> split_documents(std::string_view text, bool per_line) {
    std::vector<std::string> docs;
    std::string current;
    size_t i = 0;
    auto flush = [&] {
        if (!current.empty()) docs.push_back(std::move(current));
        current.clear();
    };
    while (i <= text.size()) {
        if (i == text.size()) {
            flush();
            break;
        }
        size_t nl = text.find('\n', i);
        std::string_view line = text.substr(i, (nl == std::string_view::npos ? text.size() : nl) - i);
        i = nl == std::string_view::npos ? text.size() : nl + 1;
        if (per_line) {
            if (!line.empty()) docs.emplace_back(line);
        } else if (line.empty()) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current.append(line);
        }
    }
    return docs;
}

std::pair<PackedDataset, PackedMask> pack_sft(
    const Tokenizer& tok, const std::vector<std::pair<std::string, std::string>>& pairs,
    int64_t sequence_length) {
    if (sequence_length < 2) throw ConfigError("pack_sft: sequence_length must be >= 2");
    std::vector<int32_t> stream;
    std::vector<uint8_t> flags;
    for (const auto& [prompt, completion] : pairs) {
        auto p = tok.encode(prompt);
        auto c = tok.encode(completion);
        stream.insert(stream.end(), p.begin(), p.end());
        flags.insert(flags.end(), p.size(), 1);
        stream.insert(stream.end(), c.begin(), c.end());
        flags.insert(flags.end(), c.size(), 0);
        stream.push_back(tok.eos_id());
        flags.push_back(0);
    }
    PackedDataset ds = pack(stream, sequence_length, tok.fingerprint());
    PackedMask mask;
    mask.sequence_length = sequence_length;
    mask.mask.assign(flags.begin(), flags.begin() + ds.total_tokens());
    return {std::move(ds), std::move(mask)};
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

void PackedDataset::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_bytes(f, kDatasetMagic, 4);
    write_le<uint32_t>(f, kDatasetVersion);
    write_le<uint32_t>(f, static_cast<uint32_t>(sequence_length));
    write_le<uint64_t>(f, static_cast<uint64_t>(n_sequences()));
    write_le<uint64_t>(f, tokenizer_fingerprint);
    for (int32_t t : tokens) write_le<uint32_t>(f, static_cast<uint32_t>(t));
    if (!f) throw IoError("write failed: " + path);
}

PackedDataset PackedDataset::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw FormatError(path + ": not a packed dataset file");
    if (read_le<uint32_t>(f) != kDatasetVersion)
        throw FormatError(path + ": unsupported dataset version");
    PackedDataset ds;
    ds.sequence_length = read_le<uint32_t>(f);
    const uint64_t n_seq = read_le<uint64_t>(f);
    ds.tokenizer_fingerprint = read_le<uint64_t>(f);
    ds.tokens.resize(n_seq * static_cast<uint64_t>(ds.sequence_length));
    for (auto& t : ds.tokens) t = static_cast<int32_t>(read_le<uint32_t>(f));
    return ds;
}

void PackedMask::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_bytes(f, kMaskMagic, 4);
    write_le<uint32_t>(f, kDatasetVersion);
    write_le<uint32_t>(f, static_cast<uint32_t>(sequence_length));
    write_le<uint64_t>(f, mask.size());
    write_bytes(f, mask.data(), mask.size());
    if (!f) throw IoError("write failed: " + path);
}

PackedMask PackedMask::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::memcmp(magic, kMaskMagic, 4) != 0)
        throw FormatError(path + ": not a packed mask file");
    if (read_le<uint32_t>(f) != kDatasetVersion)
        throw FormatError(path + ": unsupported mask version");
    PackedMask m;
    m.sequence_length = read_le<uint32_t>(f);
    m.mask.resize(read_le<uint64_t>(f));
    read_bytes(f, m.mask.data(), m.mask.size());
    return m;
}

} // namespace ttl
