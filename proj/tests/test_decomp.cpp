#include "doctest.h"
#include "glyphforge/decomp.hpp"
#include "glyphforge/errors.hpp"

using namespace glyphforge;

namespace {
const char* kLR = "⿰";   // left-right
const char* kAB = "⿱";   // above-below
const char* kLMR = "⿲";  // ternary
}  // namespace

TEST_SUITE("decomp") {

TEST_CASE("twelve structure operators, two ternary") {
  CHECK(structure_ops().size() == 12);
  int ternary = 0;
  for (const auto& op : structure_ops()) {
    CHECK((op.arity == 2 || op.arity == 3));
    if (op.arity == 3) ++ternary;
  }
  CHECK(ternary == 2);
  CHECK(structure_op_ordinal(kLR) == 0);
  CHECK(structure_op_ordinal("A") == -1);
}

TEST_CASE("parse simple binary expression") {
  const std::string expr = std::string(kLR) + " A B";
  const auto vocab = build_vocab({{0, expr}});
  const auto d = parse_ids(expr, vocab);
  REQUIRE(d.v_struct.size() == 1);
  CHECK(d.v_struct[0] == 1);
  CHECK(d.v_compo[0] == vocab.compo_index("A"));
  CHECK(d.v_compo[1] == vocab.compo_index("B"));
  for (int i = 2; i < kComponentSlots; ++i) CHECK(d.v_compo[i] == 0);
  CHECK(d.num_structs() == 1);
  CHECK(d.num_compos() == 2);
}

TEST_CASE("nested expression uses pre-order positions") {
  // hand trace: above-below( left-right(A,B), C )
  const std::string expr = std::string(kAB) + " " + kLR + " A B C";
  const auto vocab = build_vocab({{0, expr}});
  const auto d = parse_ids(expr, vocab);
  REQUIRE(d.v_struct.size() == 2);
  CHECK(d.v_struct[0] == vocab.struct_index(structure_op_ordinal(kAB), 0));
  CHECK(d.v_struct[1] == vocab.struct_index(structure_op_ordinal(kLR), 1));
  CHECK(d.v_compo[0] == vocab.compo_index("A"));
  CHECK(d.v_compo[1] == vocab.compo_index("B"));
  CHECK(d.v_compo[2] == vocab.compo_index("C"));
  CHECK(d.v_compo[3] == 0);
}

TEST_CASE("same operator at different positions gets distinct tokens") {
  const std::string expr = std::string(kLR) + " " + kLR + " A B C";
  const auto vocab = build_vocab({{0, expr}});
  const auto d = parse_ids(expr, vocab);
  REQUIRE(d.v_struct.size() == 2);
  CHECK(d.v_struct[0] != d.v_struct[1]);
}

TEST_CASE("ternary operator with missing operand is an arity error") {
  const std::string good = std::string(kLMR) + " A B C";
  const auto vocab = build_vocab({{0, good}});
  CHECK_THROWS_AS(parse_ids(std::string(kLMR) + " A B", vocab), DataError);
}

TEST_CASE("unknown component and capacity errors") {
  const std::string expr = std::string(kLR) + " A B";
  const auto vocab = build_vocab({{0, expr}});
  CHECK_THROWS_AS(parse_ids(std::string(kLR) + " A Z", vocab), DataError);

  // 13 leaves exceeds the fixed component capacity
  std::string big = "";
  for (int i = 0; i < 12; ++i) big += std::string(kLR) + " ";
  big += "A";
  for (int i = 0; i < 12; ++i) big += " A";
  std::string big_vocabless = big;
  CHECK_THROWS_AS(parse_ids(big, build_vocab({{0, std::string(kLR) + " A A"}})), DataError);
}

TEST_CASE("trailing tokens rejected") {
  const auto vocab = build_vocab({{0, std::string(kLR) + " A B"}});
  CHECK_THROWS_AS(parse_ids(std::string(kLR) + " A B C", vocab), DataError);
}

TEST_CASE("build_vocab counts distinct leaves and is deterministic") {
  const std::vector<std::pair<int, std::string>> table = {
      {0, std::string(kLR) + " A B"}, {1, std::string(kAB) + " B C"}};
  const auto v1 = build_vocab(table);
  const auto v2 = build_vocab(table);
  CHECK(v1.component_count() == 3);
  CHECK(v1 == v2);
  CHECK(build_vocab({}).component_count() == 0);
}

TEST_CASE("build_vocab rejects duplicate char ids") {
  CHECK_THROWS_AS(build_vocab({{0, "A"}, {0, "B"}}), DataError);
}

TEST_CASE("serialize round trips") {
  const std::string expr = std::string(kAB) + " " + kLR + " A B C";
  const auto vocab = build_vocab({{0, expr}});
  const auto d = parse_ids(expr, vocab);
  const auto emitted = serialize_ids(d, vocab);
  CHECK(emitted == expr);
  const auto d2 = parse_ids(emitted, vocab);
  CHECK(d2.v_struct == d.v_struct);
  CHECK(d2.v_compo == d.v_compo);
}

TEST_CASE("atomic component serializes to the bare symbol") {
  const auto vocab = build_vocab({{0, "A"}});
  const auto d = parse_ids("A", vocab);
  CHECK(d.num_structs() == 0);
  CHECK(d.num_compos() == 1);
  CHECK(serialize_ids(d, vocab) == "A");
}

TEST_CASE("serialize rejects inconsistent token counts") {
  const std::string expr = std::string(kLR) + " A B";
  const auto vocab = build_vocab({{0, expr}});
  auto d = parse_ids(expr, vocab);
  d.v_compo[1] = 0;  // drop one leaf: binary op now implies 2 leaves, got 1
  CHECK_THROWS_AS(serialize_ids(d, vocab), DataError);
}

TEST_CASE("vocab manifest round trips") {
  const std::string expr = std::string(kAB) + " " + kLR + " A B C";
  const auto vocab = build_vocab({{0, expr}, {1, "D"}});
  const std::string path = "vocab_roundtrip_test.txt";
  vocab.save(path);
  const auto loaded = Vocab::load(path);
  CHECK(loaded == vocab);
  std::remove(path.c_str());
}

}  // TEST_SUITE
