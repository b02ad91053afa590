// SPDX-License-Identifier: Apache-2.0
#include "ttl/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "ttl/io_util.hpp"

namespace ttl {

namespace {

const char* kSpecialNames[Tokenizer::kNumSpecials] = {"<unk>", "<s>", "</s>", "<pad>"};

bool is_ws(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

uint64_t pair_key(int32_t left, int32_t right) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(left)) << 32) |
           static_cast<uint32_t>(right);
}

std::string to_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xf]);
    }
    return out;
}

std::string from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw FormatError("tokenizer file: odd hex length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FormatError("tokenizer file: bad hex digit");
    };
    std::string out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2)
        out.push_back(static_cast<char>((nib(hex[i]) << 4) | nib(hex[i + 1])));
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// chunking
// ---------------------------------------------------------------------------

std::vector<std::string> Tokenizer::chunk_text(std::string_view text) {
    std::vector<std::string> chunks;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        if (is_ws(static_cast<unsigned char>(text[i]))) {
            size_t j = i;
            while (j < n && is_ws(static_cast<unsigned char>(text[j]))) ++j;
            // Attach a trailing single space to the following word.
            if (j < n && text[j - 1] == ' ') {
                if (j - 1 > i) chunks.emplace_back(text.substr(i, j - 1 - i));
                size_t k = j;
                while (k < n && !is_ws(static_cast<unsigned char>(text[k]))) ++k;
                std::string c(" ");
                c.append(text.substr(j, k - j));
                chunks.push_back(std::move(c));
                i = k;
            } else {
                chunks.emplace_back(text.substr(i, j - i));
                i = j;
            }
        } else {
            size_t j = i;
            while (j < n && !is_ws(static_cast<unsigned char>(text[j]))) ++j;
            chunks.emplace_back(text.substr(i, j - i));
            i = j;
        }
    }
    return chunks;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

struct CountedChunk {
    std::vector<int32_t> symbols;
    int64_t count = 0;
};

// pair -> (count, chunks that contain it)
struct PairStats {
    int64_t count = 0;
    std::vector<size_t> holders; // chunk indices, may repeat
};

struct HeapEntry {
    int64_t count;
    std::string left_bytes, right_bytes;
    int32_t left, right;
};

struct HeapCmp {
    // max-heap on count; ties broken toward lexicographically smaller bytes
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
        if (a.count != b.count) return a.count < b.count;
        if (a.left_bytes != b.left_bytes) return a.left_bytes > b.left_bytes;
        return a.right_bytes > b.right_bytes;
    }
};

} // namespace

Tokenizer Tokenizer::train(std::string_view corpus, const TrainOptions& opts) {
    std::istringstream is{std::string(corpus)};
    return train(is, opts);
}

Tokenizer Tokenizer::train(std::istream& corpus, const TrainOptions& opts) {
    if (opts.vocab_size < 256 + kNumSpecials)
        throw ConfigError("tokenizer: vocab_size must be at least 256 + " +
                          std::to_string(kNumSpecials) + " special tokens");

    // Stream the corpus block-wise; only the final chunk of each block can
    // change when more bytes arrive, so it is carried over.
    std::map<std::string, int64_t> chunk_counts;
    std::string carry;
    std::vector<char> block(1 << 16);
    bool saw_any = false;
    for (;;) {
        corpus.read(block.data(), static_cast<std::streamsize>(block.size()));
        std::streamsize got = corpus.gcount();
        if (got <= 0) break;
        saw_any = true;
        carry.append(block.data(), static_cast<size_t>(got));
        auto chunks = chunk_text(carry);
        if (chunks.empty()) continue;
        carry = chunks.back();
        chunks.pop_back();
        for (auto& c : chunks) chunk_counts[c] += 1;
        if (static_cast<int64_t>(chunk_counts.size()) > opts.max_table_entries) {
            // prune the rarest entries until under the cap
            for (int64_t floor = 1; static_cast<int64_t>(chunk_counts.size()) >
                                    opts.max_table_entries; ++floor)
                for (auto it = chunk_counts.begin(); it != chunk_counts.end();)
                    it = it->second <= floor ? chunk_counts.erase(it) : std::next(it);
        }
    }
    if (!carry.empty()) chunk_counts[carry] += 1;
    if (!saw_any && carry.empty()) throw ConfigError("tokenizer: empty training corpus");

    Tokenizer tok;
    tok.vocab_.reserve(static_cast<size_t>(opts.vocab_size));
    for (const char* name : kSpecialNames) tok.vocab_.emplace_back(name);
    for (int b = 0; b < 256; ++b) tok.vocab_.emplace_back(1, static_cast<char>(b));

    std::vector<CountedChunk> chunks;
    chunks.reserve(chunk_counts.size());
    for (const auto& [bytes, count] : chunk_counts) {
        CountedChunk c;
        c.count = count;
        c.symbols.reserve(bytes.size());
        for (unsigned char ch : bytes) c.symbols.push_back(kByteBase + ch);
        chunks.push_back(std::move(c));
    }

    std::unordered_map<uint64_t, PairStats> stats;
    auto add_chunk_pairs = [&](size_t idx, int64_t sign) {
        const auto& s = chunks[idx].symbols;
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            auto& ps = stats[pair_key(s[i], s[i + 1])];
            ps.count += sign * chunks[idx].count;
            if (sign > 0) ps.holders.push_back(idx);
        }
    };
    for (size_t i = 0; i < chunks.size(); ++i) add_chunk_pairs(i, +1);

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapCmp> heap;
    auto push_pair = [&](int32_t l, int32_t r, int64_t count) {
        heap.push(HeapEntry{count, tok.vocab_[static_cast<size_t>(l)],
                            tok.vocab_[static_cast<size_t>(r)], l, r});
    };
    for (const auto& [key, ps] : stats)
        push_pair(static_cast<int32_t>(key >> 32), static_cast<int32_t>(key & 0xffffffff),
                  ps.count);

    while (static_cast<int64_t>(tok.vocab_.size()) < opts.vocab_size && !heap.empty()) {
        HeapEntry top = heap.top();
        heap.pop();
        auto it = stats.find(pair_key(top.left, top.right));
        if (it == stats.end() || it->second.count != top.count) continue; // stale
        if (top.count < opts.min_pair_frequency) break;

        const int32_t new_id = static_cast<int32_t>(tok.vocab_.size());
        tok.vocab_.push_back(top.left_bytes + top.right_bytes);
        tok.merges_.emplace_back(top.left, top.right);

        // Re-count every chunk that holds the merged pair.
        std::vector<size_t> holders = std::move(it->second.holders);
        std::sort(holders.begin(), holders.end());
        holders.erase(std::unique(holders.begin(), holders.end()), holders.end());
        std::vector<uint64_t> touched;
        for (size_t idx : holders) {
            auto& s = chunks[idx].symbols;
            for (size_t i = 0; i + 1 < s.size(); ++i) {
                auto st = stats.find(pair_key(s[i], s[i + 1]));
                if (st != stats.end()) {
                    st->second.count -= chunks[idx].count;
                    touched.push_back(pair_key(s[i], s[i + 1]));
                }
            }
            std::vector<int32_t> merged;
            merged.reserve(s.size());
            for (size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == top.left && s[i + 1] == top.right) {
                    merged.push_back(new_id);
                    i += 2;
                } else {
                    merged.push_back(s[i]);
                    ++i;
                }
            }
            s = std::move(merged);
            for (size_t i = 0; i + 1 < s.size(); ++i) {
                auto& ps = stats[pair_key(s[i], s[i + 1])];
                ps.count += chunks[idx].count;
                ps.holders.push_back(idx);
                touched.push_back(pair_key(s[i], s[i + 1]));
            }
        }
        stats.erase(pair_key(top.left, top.right));
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (uint64_t key : touched) {
            auto st = stats.find(key);
            if (st == stats.end()) continue;
            if (st->second.count <= 0) {
                stats.erase(st);
                continue;
            }
            push_pair(static_cast<int32_t>(key >> 32), static_cast<int32_t>(key & 0xffffffff),
                      st->second.count);
        }
    }

    tok.rebuild_merge_index();
    return tok;
}

// ---------------------------------------------------------------------------
// encode / decode
// ---------------------------------------------------------------------------

void Tokenizer::rebuild_merge_index() {
    merge_keys_.clear();
    merge_ranks_.clear();
    std::vector<std::pair<uint64_t, int32_t>> entries;
    entries.reserve(merges_.size());
    for (size_t r = 0; r < merges_.size(); ++r)
        entries.emplace_back(pair_key(merges_[r].first, merges_[r].second),
                             static_cast<int32_t>(r));
    std::sort(entries.begin(), entries.end());
    merge_keys_.reserve(entries.size());
    merge_ranks_.reserve(entries.size());
    for (auto& [k, r] : entries) {
        merge_keys_.push_back(k);
        merge_ranks_.push_back(r);
    }
}

int32_t Tokenizer::merge_rank(int32_t left, int32_t right) const {
    const uint64_t key = pair_key(left, right);
    auto it = std::lower_bound(merge_keys_.begin(), merge_keys_.end(), key);
    if (it == merge_keys_.end() || *it != key) return -1;
    return merge_ranks_[static_cast<size_t>(it - merge_keys_.begin())];
}

void Tokenizer::encode_chunk(std::string_view chunk, std::vector<int32_t>& out) const {
    std::vector<int32_t> sym;
    sym.reserve(chunk.size());
    for (unsigned char c : chunk) sym.push_back(kByteBase + c);
    // Apply the best-ranked merge available, all occurrences left to right,
    // until none applies.
    while (sym.size() >= 2) {
        int32_t best = -1;
        for (size_t i = 0; i + 1 < sym.size(); ++i) {
            int32_t r = merge_rank(sym[i], sym[i + 1]);
            if (r >= 0 && (best < 0 || r < best)) best = r;
        }
        if (best < 0) break;
        const auto [l, rgt] = merges_[static_cast<size_t>(best)];
        const int32_t merged_id = static_cast<int32_t>(kByteBase + 256 + best);
        std::vector<int32_t> next;
        next.reserve(sym.size());
        for (size_t i = 0; i < sym.size();) {
            if (i + 1 < sym.size() && sym[i] == l && sym[i + 1] == rgt) {
                next.push_back(merged_id);
                i += 2;
            } else {
                next.push_back(sym[i]);
                ++i;
            }
        }
        sym = std::move(next);
    }
    out.insert(out.end(), sym.begin(), sym.end());
}

std::vector<int32_t> Tokenizer::encode(std::string_view text) const {
    std::vector<int32_t> out;
    for (const auto& chunk : chunk_text(text)) encode_chunk(chunk, out);
    return out;
}

std::string Tokenizer::decode(const std::vector<int32_t>& ids, bool strip_specials) const {
    std::string out;
    for (int32_t id : ids) {
        if (id < 0 || id >= static_cast<int32_t>(vocab_.size()))
            throw DomainError("decode: token id " + std::to_string(id) + " out of range");
        if (id < kNumSpecials && strip_specials) continue;
        out += vocab_[static_cast<size_t>(id)];
    }
    return out;
}

const std::string& Tokenizer::token_bytes(int32_t id) const {
    if (id < 0 || id >= static_cast<int32_t>(vocab_.size()))
        throw DomainError("token id out of range");
    return vocab_[static_cast<size_t>(id)];
}

// ---------------------------------------------------------------------------
// serialization: text format
//   TTLTOK <version> <vocab_size> <n_specials>
//   <id> <hex-bytes>       one line per vocab entry
//   <left> <right>         one line per merge, priority order
// ---------------------------------------------------------------------------

std::string Tokenizer::serialize() const {
    std::ostringstream os;
    os << "TTLTOK 1 " << vocab_.size() << " " << kNumSpecials << "\n";
    for (size_t i = 0; i < vocab_.size(); ++i) os << i << " " << to_hex(vocab_[i]) << "\n";
    for (const auto& [l, r] : merges_) os << l << " " << r << "\n";
    return os.str();
}

Tokenizer Tokenizer::deserialize(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string magic;
    int version = 0;
    int64_t vocab_size = 0, n_specials = 0;
    is >> magic >> version >> vocab_size >> n_specials;
    if (magic != "TTLTOK") throw FormatError("tokenizer file: bad magic");
    if (version != 1) throw FormatError("tokenizer file: unsupported version");
    if (n_specials != kNumSpecials || vocab_size < 256 + kNumSpecials)
        throw FormatError("tokenizer file: invalid header");
    Tokenizer tok;
    tok.vocab_.resize(static_cast<size_t>(vocab_size));
    for (int64_t i = 0; i < vocab_size; ++i) {
        int64_t id = -1;
        std::string hex;
        if (!(is >> id >> hex) || id != i) throw FormatError("tokenizer file: bad vocab entry");
        tok.vocab_[static_cast<size_t>(i)] = from_hex(hex);
    }
    const int64_t n_merges = vocab_size - 256 - kNumSpecials;
    tok.merges_.reserve(static_cast<size_t>(n_merges));
    for (int64_t i = 0; i < n_merges; ++i) {
        int32_t l = -1, r = -1;
        if (!(is >> l >> r)) throw FormatError("tokenizer file: missing merge entry");
        const int64_t merged_id = kByteBase + 256 + i;
        if (l < 0 || r < 0 || l >= merged_id || r >= merged_id)
            throw FormatError("tokenizer file: merge references a later token");
        if (tok.vocab_[static_cast<size_t>(l)] + tok.vocab_[static_cast<size_t>(r)] !=
            tok.vocab_[static_cast<size_t>(merged_id)])
            throw FormatError("tokenizer file: merge bytes inconsistent with vocab");
        tok.merges_.emplace_back(l, r);
    }
    // byte tokens must be the identity table
    for (int b = 0; b < 256; ++b)
        if (tok.vocab_[static_cast<size_t>(kByteBase + b)] !=
            std::string(1, static_cast<char>(b)))
            throw FormatError("tokenizer file: byte token table corrupted");
    tok.rebuild_merge_index();
    return tok;
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << serialize();
    if (!f) throw IoError("write failed: " + path);
}

Tokenizer Tokenizer::load(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return deserialize(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

uint64_t Tokenizer::fingerprint() const { return fnv1a64(serialize()); }

// ---------------------------------------------------------------------------
// fertility benchmark
// ---------------------------------------------------------------------------

EfficiencyReport benchmark_fertility(
    const std::vector<std::pair<std::string, const Tokenizer*>>& models,
    const std::vector<FertilityRow>& fixtures, std::string_view wordlist,
    uint64_t word_count_override) {
    std::vector<std::string> words;
    {
        std::istringstream is{std::string(wordlist)};
        std::string w;
        while (is >> w) words.push_back(w);
    }
    uint64_t word_count = word_count_override ? word_count_override : words.size();
    if (word_count == 0) throw DomainError("fertility benchmark: empty word list");
    if (!models.empty() && words.empty())
        throw DomainError("fertility benchmark: word list required to measure tokenizers");

    EfficiencyReport rep;
    rep.word_count = word_count;
    for (const auto& [name, tok] : models) {
        uint64_t total = 0;
        for (const auto& w : words) total += tok->encode(w).size();
        rep.rows.push_back({name, total, static_cast<uint64_t>(tok->vocab_size()),
                            static_cast<double>(total) / static_cast<double>(word_count)});
    }
    for (const auto& f : fixtures) {
        FertilityRow r = f;
        r.fertility = static_cast<double>(r.token_count) / static_cast<double>(word_count);
        rep.rows.push_back(std::move(r));
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const FertilityRow& a, const FertilityRow& b) {
                         return a.token_count < b.token_count;
                     });
    return rep;
}

static std::string fmt_fertility(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", f);
    return buf;
}

std::string EfficiencyReport::text() const {
    std::ostringstream os;
    os << "Tokenizer efficiency (" << word_count << " words)\n";
    char line[160];
    std::snprintf(line, sizeof(line), "  %-20s %10s %10s %10s\n", "tokenizer", "tokens",
                  "vocab", "fertility");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "  %-20s %10llu %10llu %10s\n", r.name.c_str(),
                      static_cast<unsigned long long>(r.token_count),
                      static_cast<unsigned long long>(r.vocab_size),
                      fmt_fertility(r.fertility).c_str());
        os << line;
    }
    return os.str();
}

std::string EfficiencyReport::csv() const {
    std::ostringstream os;
    os << "tokenizer,tokens,vocab_size,fertility\n";
    for (const auto& r : rows)
        os << r.name << "," << r.token_count << "," << r.vocab_size << ","
           << fmt_fertility(r.fertility) << "\n";
    return os.str();
}

std::vector<FertilityRow> load_fertility_fixtures(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open fixture file: " + path);
    std::vector<FertilityRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream is(line);
        FertilityRow r;
        if (!(is >> r.name >> r.token_count >> r.vocab_size))
            throw FormatError("fixture file: expected 'name,token_count,vocab_size': " + line);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace ttl
