#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace glyphforge {

// The 12 ideographic description characters. Operators at ordinals 2 and 3
// (U+2FF2, U+2FF3) are ternary; all others are binary.
struct StructureOp {
  const char* code;  // UTF-8 codepoint
  int arity;
};

inline constexpr int kNumStructureOps = 12;
const std::array<StructureOp, kNumStructureOps>& structure_ops();

// Ordinal of a UTF-8 operator token, or -1 when the token is a component.
int structure_op_ordinal(const std::string& token);

inline constexpr int kComponentSlots = 12;    // fixed v_compo length
inline constexpr int kMaxStructPositions = 4; // positional-index cap

// Token indices are dense and 1-based; 0 is the padding index. Structure
// tokens are keyed by (operator, traversal position) so the same operator at
// different positions gets a distinct index.
class Vocab {
 public:
  int struct_index(int op_ordinal, int position) const;  // 0 if unknown
  int compo_index(const std::string& symbol) const;      // 0 if unknown

  int add_struct(int op_ordinal, int position);  // idempotent insert
  int add_compo(const std::string& symbol);

  int struct_vocab_size() const { return static_cast<int>(struct_rev_.size()) + 1; }
  int compo_vocab_size() const { return static_cast<int>(compo_rev_.size()) + 1; }
  int component_count() const { return static_cast<int>(compo_rev_.size()); }

  // Reverse lookups (index >= 1). Throws DataError on unknown indices.
  std::pair<int, int> struct_token(int index) const;  // (op ordinal, position)
  const std::string& compo_symbol(int index) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& other) const;

 private:
  std::map<std::pair<int, int>, int> struct_idx_;
  std::map<std::string, int> compo_idx_;
  std::vector<std::pair<int, int>> struct_rev_;
  std::vector<std::string> compo_rev_;
};

struct Decomposition {
  std::vector<int> v_struct;                 // pre-order structure tokens
  std::array<int, kComponentSlots> v_compo;  // zero-padded component tokens

  int num_structs() const { return static_cast<int>(v_struct.size()); }
  int num_compos() const;
};

// Syntax tree used by layout composition; parse is vocabulary-free.
struct IdsNode {
  int op_ordinal = -1;          // -1 for leaves
  std::string leaf;             // component symbol when op_ordinal < 0
  std::vector<IdsNode> children;
};

// Prefix-notation parse of a whitespace-tokenized IDS expression.
IdsNode parse_ids_tree(const std::string& expr);

Decomposition parse_ids(const std::string& expr, const Vocab& vocab);

// First-appearance-ordered vocabulary over a (char_id, expr) table.
Vocab build_vocab(const std::vector<std::pair<int, std::string>>& table);

// Canonical prefix expression for a decomposition; parse_ids of the result
// reproduces the same Decomposition.
std::string serialize_ids(const Decomposition& decomp, const Vocab& vocab);

// UTF-8 text, one `char_id<TAB>ids_expression` entry per line.
std::vector<std::pair<int, std::string>> load_ids_table(const std::string& path);
void save_ids_table(const std::string& path,
                    const std::vector<std::pair<int, std::string>>& table);

}  // namespace glyphforge
