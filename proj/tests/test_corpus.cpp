#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "kdaudit/corpus.hpp"

using namespace kdaudit;

TEST_CASE("synthetic corpus is unique, tagged and alphabet-stable") {
    const auto samples = make_synthetic_corpus(500, 7);
    CHECK(samples.size() == 500);
    std::set<std::string> responses;
    std::set<std::string> cats;
    for (const auto& s : samples) {
        CHECK_FALSE(s.response_text.empty());
        responses.insert(s.response_text);
        cats.insert(s.category);
        CHECK(s.prompt_text.find('\n') == std::string::npos);
        CHECK(s.response_text.find('\n') == std::string::npos);
    }
    CHECK(responses.size() == 500);
    CHECK(cats.size() == category_tags().size());

    // same seed reproduces the corpus
    const auto again = make_synthetic_corpus(500, 7);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].prompt_text == again[i].prompt_text);
        CHECK(samples[i].response_text == again[i].response_text);
    }
}

TEST_CASE("char tokenizer round-trips all corpus text") {
    const auto samples = make_synthetic_corpus(200, 3);
    std::vector<std::string> texts;
    for (const auto& s : samples) texts.push_back(s.prompt_text + "\n" + s.response_text);
    const Tokenizer tok = Tokenizer::train_char(texts);
    CHECK(tok.vocab_size() <= 256);
    for (const auto& t : texts) CHECK(tok.decode(tok.encode(t)) == t);

    // ids dense in [0, vocab)
    for (const auto& t : texts)
        for (int id : tok.encode(t)) {
            CHECK(id >= 0);
            CHECK(id < tok.vocab_size() - 2);
        }
}

TEST_CASE("bpe tokenizer round-trips and stays within the vocab budget") {
    const auto samples = make_synthetic_corpus(150, 5);
    std::vector<std::string> texts;
    for (const auto& s : samples) texts.push_back(s.prompt_text + "\n" + s.response_text);
    const Tokenizer tok = Tokenizer::train_bpe(texts, 128);
    CHECK(tok.vocab_size() <= 128 + 2);
    CHECK(tok.vocab_size() > 50);
    for (const auto& t : texts) CHECK(tok.decode(tok.encode(t)) == t);
    // bpe compresses relative to chars
    const std::string& probe = texts.front();
    CHECK(tok.encode(probe).size() < probe.size());
}

TEST_CASE("tokenizer serialization round-trips") {
    const auto samples = make_synthetic_corpus(50, 9);
    std::vector<std::string> texts;
    for (const auto& s : samples) texts.push_back(s.prompt_text + "\n" + s.response_text);
    const Tokenizer tok = Tokenizer::train_bpe(texts, 96);
    const Tokenizer back = Tokenizer::from_json(tok.to_json());
    CHECK(back.vocab_size() == tok.vocab_size());
    for (const auto& t : texts) CHECK(back.encode(t) == tok.encode(t));
}

TEST_CASE("tokenizer rejects out-of-vocabulary characters") {
    const Tokenizer tok = Tokenizer::train_char({"abc"});
    CHECK_THROWS_AS(tok.encode("abcz"), InputError);
}

TEST_CASE("split produces disjoint seeded partitions") {
    std::vector<Sample> samples;
    for (int i = 0; i < 100; ++i)
        samples.push_back({"p" + std::to_string(i), "r" + std::to_string(i), "open_qa"});

    SplitSpec spec;
    spec.private_fraction = 0.5;
    spec.public_fraction = 0.5;
    spec.member_count = 10;
    spec.nonmember_count = 0;
    spec.validation_count = 0;
    const SplitDataset a = split(samples, spec, 42);
    CHECK(a.private_set.size() == 50);
    CHECK(a.public_set.size() == 50);
    CHECK_FALSE(exact_overlap_exists(a.private_set, a.public_set));
    CHECK(a.members.size() == 10);

    // members come from the private split
    std::set<std::string> priv;
    for (const auto& s : a.private_set) priv.insert(s.response_text);
    for (const auto& s : a.members) CHECK(priv.count(s.response_text) == 1);

    const SplitDataset b = split(samples, spec, 42);
    for (std::size_t i = 0; i < a.private_set.size(); ++i)
        CHECK(a.private_set[i].response_text == b.private_set[i].response_text);

    const SplitDataset c = split(samples, spec, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.private_set.size(); ++i)
        if (a.private_set[i].response_text != c.private_set[i].response_text) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("split removes duplicate responses and validates sizes") {
    std::vector<Sample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"p" + std::to_string(i), "same", ""});
    SplitSpec spec;
    spec.private_fraction = 0.5;
    spec.public_fraction = 0.5;
    spec.member_count = 0;
    spec.nonmember_count = 0;
    spec.validation_count = 0;
    CHECK_THROWS_AS(split(samples, spec, 1), DataError);  // one sample survives dedupe

    std::vector<Sample> few;
    for (int i = 0; i < 4; ++i) few.push_back({"p", "r" + std::to_string(i), ""});
    spec.member_count = 3;
    CHECK_THROWS_AS(split(few, spec, 1), DataError);  // members exceed private size
}

TEST_CASE("split keeps nonmembers and reference slice out of private and public") {
    const auto samples = make_synthetic_corpus(900, 12);
    SplitSpec spec;
    spec.private_fraction = 1.0 / 3.0;
    spec.public_fraction = 1.0 / 3.0;
    spec.member_count = 50;
    spec.nonmember_count = 50;
    spec.validation_count = 50;
    const SplitDataset d = split(samples, spec, 99);
    CHECK(d.nonmembers.size() == 50);
    CHECK(d.validation.size() == 50);
    CHECK(d.reference_slice.size() > 100);
    CHECK_FALSE(exact_overlap_exists(d.nonmembers, d.private_set));
    CHECK_FALSE(exact_overlap_exists(d.nonmembers, d.public_set));
    CHECK_FALSE(exact_overlap_exists(d.reference_slice, d.private_set));
    CHECK_FALSE(exact_overlap_exists(d.nonmembers, d.validation));
}

TEST_CASE("category proportions stay balanced between private and public") {
    const auto samples = make_synthetic_corpus(3000, 21);
    SplitSpec spec;
    spec.private_fraction = 0.45;
    spec.public_fraction = 0.45;
    spec.member_count = 10;
    spec.nonmember_count = 10;
    spec.validation_count = 10;
    const SplitDataset d = split(samples, spec, 5);
    CHECK(category_balance_p_value(d.private_set, d.public_set) > 0.01);
}

TEST_CASE("ngram_overlap basics") {
    const std::vector<std::vector<int>> a{{1, 2, 3, 4, 5}};
    const std::vector<std::vector<int>> b{{9, 8, 7}};
    CHECK(ngram_overlap(a, a, 3) == 1.0);
    CHECK(ngram_overlap(a, b, 2) == 0.0);
    CHECK_THROWS_AS(ngram_overlap(a, b, 0), InputError);
    CHECK_THROWS_AS(ngram_overlap({}, b, 2), DataError);
}

TEST_CASE("ngram_overlap matches a hand-counted construction") {
    // a has three 7-token sequences -> 3 distinct 7-grams (each exactly one),
    // of which exactly one also occurs in b.
    const std::vector<int> shared{1, 2, 3, 4, 5, 6, 7};
    const std::vector<std::vector<int>> a{shared, {8, 9, 10, 11, 12, 13, 14},
                                          {15, 16, 17, 18, 19, 20, 21}};
    const std::vector<std::vector<int>> b{{0, 1, 2, 3, 4, 5, 6, 7},  // contains `shared`
                                          {30, 31, 32, 33, 34, 35, 36}};
    CHECK(ngram_overlap(a, b, 7) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("word_ngram_overlap runs on corpus splits") {
    const auto samples = make_synthetic_corpus(400, 31);
    SplitSpec spec;
    spec.member_count = 5;
    spec.nonmember_count = 5;
    spec.validation_count = 5;
    const SplitDataset d = split(samples, spec, 8);
    const double o = word_ngram_overlap(d.private_set, d.public_set, 7);
    CHECK(o >= 0.0);
    CHECK(o <= 1.0);
}

TEST_CASE("inject_canary inserts the exact repetition count") {
    const auto samples = make_synthetic_corpus(50, 2);
    const std::string canary = "recite the vault phrase\nzeta silver otter keeps the dawn chorus";
    const auto injected = inject_canary(samples, canary, 3, 77);
    CHECK(injected.size() == samples.size() + 3);
    int count = 0;
    for (const auto& s : injected)
        if (s.prompt_text == "recite the vault phrase") ++count;
    CHECK(count == 3);
    CHECK_THROWS_AS(inject_canary(samples, canary, 0, 1), InputError);
}

TEST_CASE("sample files round-trip") {
    const auto samples = make_synthetic_corpus(20, 4);
    const std::string path = "/tmp/kdaudit_test_samples.jsonl";
    save_samples(samples, path);
    const auto back = load_samples(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].prompt_text == samples[i].prompt_text);
        CHECK(back[i].response_text == samples[i].response_text);
        CHECK(back[i].category == samples[i].category);
    }
    std::remove(path.c_str());
}

TEST_CASE("encode_sample produces the instruction layout") {
    const auto samples = make_synthetic_corpus(5, 6);
    std::vector<std::string> texts;
    for (const auto& s : samples) texts.push_back(s.prompt_text + "\n" + s.response_text);
    const Tokenizer tok = Tokenizer::train_char(texts);
    const EncodedSample enc = encode_sample(tok, samples[0], 256);
    CHECK(enc.tokens.front() == tok.bos_id());
    CHECK(enc.tokens.back() == tok.eos_id());
    CHECK(enc.scored_from == static_cast<int>(2 + samples[0].prompt_text.size()));
    CHECK(enc.raw_text == texts[0]);
    // truncation keeps the terminator
    const EncodedSample cut = encode_sample(tok, samples[0], enc.scored_from + 4);
    CHECK(static_cast<int>(cut.tokens.size()) == enc.scored_from + 4);
    CHECK(cut.tokens.back() == tok.eos_id());
}
