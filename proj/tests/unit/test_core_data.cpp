#include <doctest.h>

#include <fstream>
#include <algorithm>
#include <sstream>

#include "helpers.hpp"
#include "refgame/annotation.hpp"
#include "refgame/binary_io.hpp"
#include "refgame/error.hpp"
#include "refgame/feature_store.hpp"
#include "refgame/phrase.hpp"
#include "refgame/synthworld.hpp"
#include "refgame/vocabulary.hpp"

using namespace refgame;
using testing::pair_of;
using testing::record_of;

TEST_SUITE("core-data") {
  TEST_CASE("tokenize lowercases and strips terminal punctuation") {
    CHECK(tokenize_phrase("Pointy nose.").tokens == std::vector<std::string>{"pointy", "nose"});
    CHECK(tokenize_phrase("red and white").tokens == std::vector<std::string>{"red", "and", "white"});
    CHECK(tokenize_phrase("  Big,   PLANE!? ").tokens == std::vector<std::string>{"big", "plane"});
    CHECK(tokenize_phrase("Pointy nose.").raw_text == "Pointy nose.");
  }

  TEST_CASE("tokenize truncates to the maximum length") {
    std::string raw;
    std::vector<std::string> expected;
    for (int i = 0; i < 16; ++i) {
      raw += "w" + std::to_string(i) + " ";
      if (i < 14) expected.push_back("w" + std::to_string(i));
    }
    const auto p = tokenize_phrase(raw);
    CHECK(p.tokens.size() == 14);
    CHECK(p.tokens == expected);
  }

  TEST_CASE("tokenize rejects empty and reserved input") {
    CHECK_THROWS_AS(tokenize_phrase("   "), Error);
    try {
      tokenize_phrase(" ... ");
      FAIL("expected EmptyPhrase");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyPhrase);
    }
    try {
      tokenize_phrase("red vs blue");
      FAIL("expected ReservedToken");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ReservedToken);
    }
  }

  TEST_CASE("phrase pair serializes with one separator") {
    const auto pp = pair_of("red body", "blue body", 2);
    const auto tokens = pp.serialized_tokens();
    CHECK(tokens == std::vector<std::string>{"red", "body", "vs", "blue", "body"});
    CHECK(std::count(tokens.begin(), tokens.end(), "vs") == 1);
    CHECK(pp.swapped().left.tokens == pp.right.tokens);
  }

  TEST_CASE("split at the first separator") {
    using V = std::vector<std::string>;
    CHECK(split_phrase_pair({"red", "vs", "blue"}) == std::pair<V, V>{{"red"}, {"blue"}});
    CHECK(split_phrase_pair({"red", "body"}) == std::pair<V, V>{{"red", "body"}, {}});
    CHECK(split_phrase_pair({"vs", "blue"}) == std::pair<V, V>{{}, {"blue"}});
    CHECK(split_phrase_pair({"a", "vs", "b", "vs", "c"}) == std::pair<V, V>{{"a"}, {"b", "vs", "c"}});
  }

  TEST_CASE("vocabulary keeps tokens at or above min_freq with fixed specials") {
    const std::vector<AnnotationRecord> records = {
        record_of("p1", "x", "y", {pair_of("a a a", "b", 1)}),
    };
    const auto v = build_vocabulary(records, 2);
    CHECK(v.size() == 5);
    CHECK(v.token(kStartId) == "<start>");
    CHECK(v.id_of("a") == kNumSpecials);
    CHECK_FALSE(v.contains("b"));
    CHECK(v.id_of("b") == kUnkId);
    CHECK(v.id_of("vs") == kSeparatorId);
  }

  TEST_CASE("vocabulary order is frequency then lexicographic, deterministic") {
    const std::vector<AnnotationRecord> records = {
        record_of("p1", "x", "y", {pair_of("c b", "b a", 1), pair_of("c", "a", 2)}),
    };
    const auto v = build_vocabulary(records, 1);
    // counts: a 2, b 2, c 2 -> lexicographic
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");
    CHECK(v.token(6) == "c");
    CHECK(build_vocabulary(records, 1) == v);
    CHECK(build_vocabulary(records, 1).fingerprint() == v.fingerprint());
  }

  TEST_CASE("vocabulary errors") {
    try {
      build_vocabulary({}, 1);
      FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
    const std::vector<AnnotationRecord> records = {record_of("p1", "x", "y", {pair_of("a", "b", 1)})};
    CHECK_THROWS_AS(build_vocabulary(records, 0), Error);
  }

  TEST_CASE("synthetic corpus at min_freq 1 gives exactly the grammar's surface tokens") {
    const synth::World world(synth::WorldSpec::default_spec());
    const auto ds = world.generate_dataset({400, 10, 10});
    const auto v = build_vocabulary(ds.split("train").records, 1);
    std::vector<std::string> regular(v.tokens().begin() + kNumSpecials, v.tokens().end());
    std::sort(regular.begin(), regular.end());
    CHECK(regular == world.grammar().surface_tokens());
  }

  TEST_CASE("encode and decode round trip, unk and framing") {
    const Vocabulary v({"pointy", "nose"});
    const auto ids = encode_phrase(tokenize_phrase("pointy nose"), v);
    CHECK(ids == std::vector<TokenId>{kStartId, 4, 5, kEndId});
    CHECK(decode_ids(ids, v) == std::vector<std::string>{"pointy", "nose"});

    const auto oov = encode_tokens({"pointy", "zebra"}, v);
    CHECK(oov == std::vector<TokenId>{kStartId, 4, kUnkId, kEndId});

    const auto only_unk = encode_tokens({"zebra"}, v);
    CHECK(only_unk.front() == kStartId);
    CHECK(only_unk.back() == kEndId);
    CHECK(only_unk.size() == 3);
  }

  TEST_CASE("vocabulary save and load") {
    testing::TempDir dir;
    const Vocabulary v({"alpha", "beta"});
    v.save(dir / "vocab.txt");
    CHECK(Vocabulary::load(dir / "vocab.txt") == v);
  }

  TEST_CASE("annotation file loads, validates and reports line numbers") {
    testing::TempDir dir;
    const auto path = dir / "a.jsonl";
    {
      std::ofstream out(path);
      out << R"({"pair_id":"p1","image_a":"i1","image_b":"i2","phrases":[{"left":"Red body","right":"blue body","position":1}]})"
          << "\n";
    }
    const auto records = load_annotations(path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].phrase_pairs[0].left.tokens == std::vector<std::string>{"red", "body"});

    std::istringstream same_image(
        R"({"pair_id":"p1","image_a":"i1","image_b":"i2","phrases":[{"left":"a","right":"b","position":1}]})"
        "\n"
        R"({"pair_id":"p2","image_a":"i3","image_b":"i3","phrases":[{"left":"a","right":"b","position":1}]})"
        "\n");
    try {
      read_annotations(same_image);
      FAIL("expected a rejection");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::istringstream dup(
        R"({"pair_id":"p1","image_a":"i1","image_b":"i2","phrases":[{"left":"a","right":"b","position":1}]})"
        "\n"
        R"({"pair_id":"p1","image_a":"i3","image_b":"i4","phrases":[{"left":"a","right":"b","position":1}]})"
        "\n");
    try {
      read_annotations(dup);
      FAIL("expected DuplicatePairId");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DuplicatePairId);
    }
  }

  TEST_CASE("record invariants") {
    CHECK_THROWS_AS(validate_record(record_of("p", "a", "a", {pair_of("x", "y", 1)})), Error);
    CHECK_THROWS_AS(validate_record(record_of("p", "a", "b", {})), Error);
    CHECK_THROWS_AS(validate_record(record_of("p", "a", "b", {pair_of("x", "y", 1), pair_of("z", "w", 1)})), Error);
    CHECK_THROWS_AS(validate_record(record_of("p", "a", "b", {pair_of("x", "y", 6)})), Error);
    CHECK_NOTHROW(validate_record(record_of("p", "a", "b", {pair_of("x", "y", 5)})));
  }

  TEST_CASE("generated split re-serializes byte-identically") {
    testing::TempDir dir;
    const synth::World world(synth::WorldSpec::default_spec());
    const auto ds = world.generate_dataset({50, 5, 5});
    std::ostringstream first;
    write_annotations(first, ds.split("train").records);
    save_annotations(dir / "train.jsonl", ds.split("train").records);
    std::ostringstream second;
    write_annotations(second, load_annotations(dir / "train.jsonl"));
    CHECK(first.str() == second.str());
  }

  TEST_CASE("feature store binary layout and round trip") {
    testing::TempDir dir;
    FeatureStore fs(3);
    const std::vector<float> r0 = {1.0f, -2.5f, 0.125f};
    const std::vector<float> r1 = {0.0f, 3.0f, 1e-7f};
    fs.add("img0", r0);
    fs.add("img1", r1);
    fs.save(dir / "f.apfv");

    std::ifstream in(dir / "f.apfv", std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "APFV");
    CHECK(binary::read_u32(in) == 2);
    CHECK(binary::read_u32(in) == 3);
    CHECK(binary::read_f32(in) == doctest::Approx(1.0));
    CHECK(binary::read_f32(in) == -2.5f);

    const auto back = FeatureStore::load(dir / "f.apfv");
    CHECK(back == fs);
    CHECK(back.row("img1")[2] == 1e-7f);
    CHECK(std::filesystem::exists(FeatureStore::sidecar_path(dir / "f.apfv")));
  }

  TEST_CASE("feature store rejects bad shapes and duplicate ids") {
    FeatureStore fs(2);
    const std::vector<float> ok = {1.0f, 2.0f};
    const std::vector<float> wrong = {1.0f};
    fs.add("a", ok);
    CHECK_THROWS_AS(fs.add("b", wrong), Error);
    CHECK_THROWS_AS(fs.add("a", ok), Error);
  }
}
