// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "ttl/data.hpp"
#include "ttl/io_util.hpp"
#include "ttl/rng.hpp"

using namespace ttl;

namespace {

// 260-entry vocabulary: every byte is its own token, no merges.
Tokenizer byte_tokenizer() {
    Tokenizer::TrainOptions o;
    o.vocab_size = 256 + Tokenizer::kNumSpecials;
    return Tokenizer::train(std::string_view("x"), o);
}

std::vector<int32_t> random_stream(Rng& rng, size_t n, int32_t vocab) {
    std::vector<int32_t> v(n);
    for (auto& t : v) t = static_cast<int32_t>(rng.next_below(static_cast<uint64_t>(vocab)));
    return v;
}

} // namespace

TEST_CASE("tokenize_corpus appends eos per document") {
    Tokenizer tok = byte_tokenizer();
    auto stream = tokenize_corpus(tok, {"abc", "xy"});
    CHECK(stream.size() == 7); // 3 + eos + 2 + eos
    CHECK(stream[3] == tok.eos_id());
    CHECK(stream[6] == tok.eos_id());

    auto only_eos = tokenize_corpus(tok, {""});
    REQUIRE(only_eos.size() == 1);
    CHECK(only_eos[0] == tok.eos_id());
}

TEST_CASE("token stream re-decodes to the documents") {
    Tokenizer tok = byte_tokenizer();
    const std::vector<std::string> docs{"first doc", "second doc"};
    auto stream = tokenize_corpus(tok, docs);
    CHECK(tok.decode(stream) == "first docsecond doc"); // eos strips away
}

TEST_CASE("ingestion filters") {
    IngestFilters f;
    f.min_doc_bytes = 5;
    CHECK_FALSE(passes_filters("tiny", f));
    CHECK(passes_filters("big enough", f));

    IngestFilters g;
    g.max_non_alnum_ratio = 0.3;
    CHECK(passes_filters("mostly words here!", g));
    CHECK_FALSE(passes_filters("#$%^&*()!!", g));
    // multi-byte characters do not count as noise
    CHECK(passes_filters("ol\xc3\xa1 ol\xc3\xa1", g));

    Tokenizer tok = byte_tokenizer();
    auto stream = tokenize_corpus(tok, {"tiny", "big enough"}, f);
    CHECK(stream.size() == 11); // only the second doc + eos
}

TEST_CASE("pack drops the remainder") {
    Rng rng(5);
    auto stream = random_stream(rng, 10, 260);
    PackedDataset ds = pack(stream, 4);
    CHECK(ds.n_sequences() == 2);
    CHECK(ds.total_tokens() == 8);
    CHECK(ds.sequence_length == 4);
    for (int64_t i = 0; i < 8; ++i) CHECK(ds.tokens[static_cast<size_t>(i)] == stream[static_cast<size_t>(i)]);

    CHECK(pack(random_stream(rng, 3, 260), 4).n_sequences() == 0);
    CHECK_THROWS_AS(pack(stream, 1), ConfigError);
}

TEST_CASE("packing conserves tokens") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const size_t n = rng.next_below(500);
        const int64_t len = 2 + static_cast<int64_t>(rng.next_below(30));
        auto stream = random_stream(rng, n, 100);
        PackedDataset ds = pack(stream, len);
        const int64_t dropped = static_cast<int64_t>(n) - ds.total_tokens();
        CHECK(ds.n_sequences() * len + dropped == static_cast<int64_t>(n));
        CHECK(dropped >= 0);
        CHECK(dropped < len);
    }
}

TEST_CASE("split_eval sizes, determinism and disjointness") {
    Rng rng(7);
    auto stream = random_stream(rng, 1000 * 8, 50);
    PackedDataset ds = pack(stream, 8);
    REQUIRE(ds.n_sequences() == 1000);

    auto [train1, eval1] = split_eval(ds, 0.01, 123);
    CHECK(train1.n_sequences() == 990);
    CHECK(eval1.n_sequences() == 10);

    auto [train2, eval2] = split_eval(ds, 0.01, 123);
    CHECK(train2.tokens == train1.tokens);
    CHECK(eval2.tokens == eval1.tokens);

    auto [train3, eval3] = split_eval(ds, 0.01, 124);
    CHECK(train3.tokens != train1.tokens); // different seed reshuffles

    // union of splits equals the original multiset of sequences
    std::map<std::vector<int32_t>, int64_t> counts;
    for (int64_t i = 0; i < ds.n_sequences(); ++i)
        counts[std::vector<int32_t>(ds.sequence(i), ds.sequence(i) + 8)] += 1;
    for (int64_t i = 0; i < train1.n_sequences(); ++i)
        counts[std::vector<int32_t>(train1.sequence(i), train1.sequence(i) + 8)] -= 1;
    for (int64_t i = 0; i < eval1.n_sequences(); ++i)
        counts[std::vector<int32_t>(eval1.sequence(i), eval1.sequence(i) + 8)] -= 1;
    for (const auto& [seq, count] : counts) CHECK(count == 0);
}

TEST_CASE("split_eval rejects degenerate splits") {
    Rng rng(8);
    PackedDataset tiny = pack(random_stream(rng, 16, 50), 8); // 2 sequences
    CHECK_THROWS_AS(split_eval(tiny, 0.01, 1), DomainError);  // eval would be empty
    CHECK_THROWS_AS(split_eval(tiny, 0.99, 1), DomainError);  // train would be empty
    CHECK_THROWS_AS(split_eval(tiny, 1.5, 1), DomainError);
}

TEST_CASE("dataset file round trip") {
    Rng rng(9);
    PackedDataset ds = pack(random_stream(rng, 64, 500), 16);
    ds.tokenizer_fingerprint = 0xabcdef1234ULL;
    const auto path = std::filesystem::temp_directory_path() / "ttl_ds_test.ttld";
    ds.save(path.string());
    PackedDataset back = PackedDataset::load(path.string());
    CHECK(back.sequence_length == 16);
    CHECK(back.tokenizer_fingerprint == 0xabcdef1234ULL);
    CHECK(back.tokens == ds.tokens);

    // identical bytes when saved twice
    const auto path2 = std::filesystem::temp_directory_path() / "ttl_ds_test2.ttld";
    back.save(path2.string());
    CHECK(read_file_bytes(path.string()) == read_file_bytes(path2.string()));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);

    CHECK_THROWS_AS(PackedDataset::load("/nonexistent/dataset"), IoError);
}

TEST_CASE("dataset load rejects foreign files") {
    const auto path = std::filesystem::temp_directory_path() / "ttl_not_a_dataset";
    {
        std::ofstream f(path);
        f << "plain text, not a dataset";
    }
    CHECK_THROWS_AS(PackedDataset::load(path.string()), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("packed ids stay inside the tokenizer vocabulary") {
    Tokenizer tok = Tokenizer::train(std::string_view("some words repeat some words"),
                                     Tokenizer::TrainOptions{280, 2, 1 << 22});
    auto stream = tokenize_corpus(tok, {"some words", "repeat words", "entirely new bytes!"});
    PackedDataset ds = pack(stream, 4, tok.fingerprint());
    for (int32_t id : ds.tokens) {
        CHECK(id >= 0);
        CHECK(id < tok.vocab_size());
    }
}

TEST_CASE("corpus to packed dataset is byte-for-byte reproducible") {
    const std::vector<std::string> docs{"one fish two fish", "red fish blue fish",
                                        "the fish dish"};
    auto build = [&] {
        Tokenizer tok = Tokenizer::train(std::string_view("one fish two fish red blue dish"),
                                         Tokenizer::TrainOptions{300, 2, 1 << 22});
        PackedDataset ds = pack(tokenize_corpus(tok, docs), 4, tok.fingerprint());
        const auto path = std::filesystem::temp_directory_path() / "ttl_repro.ttld";
        ds.save(path.string());
        auto bytes = read_file_bytes(path.string());
        std::filesystem::remove(path);
        return bytes;
    };
    CHECK(build() == build());
}

TEST_CASE("document splitting") {
    auto blank = split_documents("doc one\nstill doc one\n\ndoc two\n");
    REQUIRE(blank.size() == 2);
    CHECK(blank[0] == "doc one\nstill doc one");
    CHECK(blank[1] == "doc two");

    auto lines = split_documents("a\nb\n\nc\n", /*per_line=*/true);
    REQUIRE(lines.size() == 3);
    CHECK(lines[2] == "c");
}

TEST_CASE("sft packing flags prompt positions") {
    Tokenizer tok = byte_tokenizer();
    auto [ds, mask] = pack_sft(tok, {{"ab", "cd"}, {"x", "yz"}}, 4);
    // stream: a b c d </s> x y z </s>  -> 2 sequences of 4, one token dropped
    REQUIRE(ds.n_sequences() == 2);
    REQUIRE(mask.mask.size() == 8);
    CHECK(mask.mask[0] == 1); // a (prompt)
    CHECK(mask.mask[1] == 1); // b (prompt)
    CHECK(mask.mask[2] == 0); // c
    CHECK(mask.mask[3] == 0); // d
    CHECK(ds.tokens[4] == tok.eos_id());
    CHECK(mask.mask[4] == 0); // eos counts as completion
    CHECK(mask.mask[5] == 1); // x (prompt of pair 2)

    const auto path = std::filesystem::temp_directory_path() / "ttl_mask_test.ttlm";
    mask.save(path.string());
    PackedMask back = PackedMask::load(path.string());
    CHECK(back.mask == mask.mask);
    std::filesystem::remove(path);
}
