#include "glyphforge/decomp.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "glyphforge/errors.hpp"

namespace glyphforge {

const std::array<StructureOp, kNumStructureOps>& structure_ops() {
  // U+2FF0..U+2FFB in codepoint order.
  static const std::array<StructureOp, kNumStructureOps> ops = {{
      {"⿰", 2},  // left to right
      {"⿱", 2},  // above to below
      {"⿲", 3},  // left to middle to right
      {"⿳", 3},  // above to middle to below
      {"⿴", 2},  // full surround
      {"⿵", 2},  // surround from above
      {"⿶", 2},  // surround from below
      {"⿷", 2},  // surround from left
      {"⿸", 2},  // surround from upper left
      {"⿹", 2},  // surround from upper right
      {"⿺", 2},  // surround from lower left
      {"⿻", 2},  // overlaid
  }};
  return ops;
}

int structure_op_ordinal(const std::string& token) {
  const auto& ops = structure_ops();
  for (int i = 0; i < kNumStructureOps; ++i)
    if (token == ops[static_cast<std::size_t>(i)].code) return i;
  return -1;
}

int Vocab::struct_index(int op_ordinal, int position) const {
  const auto it = struct_idx_.find({op_ordinal, std::min(position, kMaxStructPositions - 1)});
  return it == struct_idx_.end() ? 0 : it->second;
}

int Vocab::compo_index(const std::string& symbol) const {
  const auto it = compo_idx_.find(symbol);
  return it == compo_idx_.end() ? 0 : it->second;
}

int Vocab::add_struct(int op_ordinal, int position) {
  position = std::min(position, kMaxStructPositions - 1);
  const auto key = std::make_pair(op_ordinal, position);
  const auto it = struct_idx_.find(key);
  if (it != struct_idx_.end()) return it->second;
  struct_rev_.push_back(key);
  const int idx = static_cast<int>(struct_rev_.size());
  struct_idx_[key] = idx;
  return idx;
}

int Vocab::add_compo(const std::string& symbol) {
  const auto it = compo_idx_.find(symbol);
  if (it != compo_idx_.end()) return it->second;
  compo_rev_.push_back(symbol);
  const int idx = static_cast<int>(compo_rev_.size());
  compo_idx_[symbol] = idx;
  return idx;
}

std::pair<int, int> Vocab::struct_token(int index) const {
  if (index < 1 || index > static_cast<int>(struct_rev_.size()))
    throw DataError("unknown structure token index " + std::to_string(index));
  return struct_rev_[static_cast<std::size_t>(index - 1)];
}

const std::string& Vocab::compo_symbol(int index) const {
  if (index < 1 || index > static_cast<int>(compo_rev_.size()))
    throw DataError("unknown component index " + std::to_string(index));
  return compo_rev_[static_cast<std::size_t>(index - 1)];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < struct_rev_.size(); ++i)
    out << "struct\t" << structure_ops()[static_cast<std::size_t>(struct_rev_[i].first)].code
        << "\t" << struct_rev_[i].second << "\t" << (i + 1) << "\n";
  for (std::size_t i = 0; i < compo_rev_.size(); ++i)
    out << "compo\t" << compo_rev_[i] << "\t" << (i + 1) << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    std::getline(ls, kind, '\t');
    if (kind == "struct") {
      std::string code, pos_s, idx_s;
      std::getline(ls, code, '\t');
      std::getline(ls, pos_s, '\t');
      std::getline(ls, idx_s, '\t');
      const int op = structure_op_ordinal(code);
      if (op < 0) throw DataError("vocab manifest: unknown operator " + code);
      const int assigned = v.add_struct(op, std::stoi(pos_s));
      if (assigned != std::stoi(idx_s))
        throw DataError("vocab manifest: non-dense structure indices");
    } else if (kind == "compo") {
      std::string sym, idx_s;
      std::getline(ls, sym, '\t');
      std::getline(ls, idx_s, '\t');
      const int assigned = v.add_compo(sym);
      if (assigned != std::stoi(idx_s))
        throw DataError("vocab manifest: non-dense component indices");
    } else {
      throw DataError("vocab manifest: unknown record kind " + kind);
    }
  }
  return v;
}

bool Vocab::operator==(const Vocab& other) const {
  return struct_rev_ == other.struct_rev_ && compo_rev_ == other.compo_rev_;
}

int Decomposition::num_compos() const {
  int n = 0;
  for (const int c : v_compo)
    if (c != 0) ++n;
  return n;
}

namespace {

std::vector<std::string> tokenize(const std::string& expr) {
  std::vector<std::string> tokens;
  std::istringstream is(expr);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

IdsNode parse_term(const std::vector<std::string>& tokens, std::size_t& pos) {
  if (pos >= tokens.size()) throw DataError("IDS parse error: operator missing operands");
  IdsNode node;
  const std::string& tok = tokens[pos++];
  const int op = structure_op_ordinal(tok);
  if (op < 0) {
    node.leaf = tok;
    return node;
  }
  node.op_ordinal = op;
  const int arity = structure_ops()[static_cast<std::size_t>(op)].arity;
  for (int i = 0; i < arity; ++i) node.children.push_back(parse_term(tokens, pos));
  return node;
}

void walk(const IdsNode& node, int& struct_pos, std::vector<std::pair<int, int>>& structs,
          std::vector<std::string>& leaves) {
  if (node.op_ordinal < 0) {
    leaves.push_back(node.leaf);
    return;
  }
  structs.push_back({node.op_ordinal, struct_pos++});
  for (const auto& child : node.children) walk(child, struct_pos, structs, leaves);
}

}  // namespace

IdsNode parse_ids_tree(const std::string& expr) {
  const auto tokens = tokenize(expr);
  if (tokens.empty()) throw DataError("IDS parse error: empty expression");
  std::size_t pos = 0;
  IdsNode root = parse_term(tokens, pos);
  if (pos != tokens.size()) throw DataError("IDS parse error: trailing tokens");
  return root;
}

Decomposition parse_ids(const std::string& expr, const Vocab& vocab) {
  const IdsNode tree = parse_ids_tree(expr);
  std::vector<std::pair<int, int>> structs;
  std::vector<std::string> leaves;
  int pos = 0;
  walk(tree, pos, structs, leaves);

  if (static_cast<int>(leaves.size()) > kComponentSlots)
    throw DataError("character exceeds " + std::to_string(kComponentSlots) + " components");

  Decomposition d;
  for (const auto& [op, p] : structs) {
    const int idx = vocab.struct_index(op, p);
    if (idx == 0)
      throw DataError("structure token not in vocabulary: operator " + std::to_string(op) +
                      " at position " + std::to_string(p));
    d.v_struct.push_back(idx);
  }
  d.v_compo.fill(0);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const int idx = vocab.compo_index(leaves[i]);
    if (idx == 0) throw DataError("component not in vocabulary: " + leaves[i]);
    d.v_compo[i] = idx;
  }
  return d;
}

Vocab build_vocab(const std::vector<std::pair<int, std::string>>& table) {
  Vocab vocab;
  std::set<int> seen_ids;
  for (const auto& [char_id, expr] : table) {
    if (!seen_ids.insert(char_id).second)
      throw DataError("duplicate char_id in IDS table: " + std::to_string(char_id));
    const IdsNode tree = parse_ids_tree(expr);
    std::vector<std::pair<int, int>> structs;
    std::vector<std::string> leaves;
    int pos = 0;
    walk(tree, pos, structs, leaves);
    for (const auto& [op, p] : structs) vocab.add_struct(op, p);
    for (const auto& leaf : leaves) vocab.add_compo(leaf);
  }
  return vocab;
}

std::string serialize_ids(const Decomposition& decomp, const Vocab& vocab) {
  // Greedy canonical reconstruction: operators are consumed in pre-order,
  // leaves left to right. Any tree consistent with the vectors re-parses to
  // the same Decomposition, so the greedy shape is canonical.
  std::size_t si = 0, ci = 0;
  std::vector<int> compos;
  for (const int c : decomp.v_compo)
    if (c != 0) compos.push_back(c);

  int expected_leaves = 1;
  for (const int s : decomp.v_struct)
    expected_leaves += structure_ops()[static_cast<std::size_t>(vocab.struct_token(s).first)].arity - 1;
  if (expected_leaves != static_cast<int>(compos.size()))
    throw DataError("inconsistent token counts: " + std::to_string(decomp.v_struct.size()) +
                    " structures imply " + std::to_string(expected_leaves) + " components, got " +
                    std::to_string(compos.size()));

  std::ostringstream out;
  bool first = true;
  auto emit = [&](const std::string& tok) {
    if (!first) out << ' ';
    out << tok;
    first = false;
  };

  // NOLINTNEXTLINE(misc-no-recursion)
  auto build = [&](auto&& self) -> void {
    if (si < decomp.v_struct.size()) {
      const auto [op, pos] = vocab.struct_token(decomp.v_struct[si++]);
      (void)pos;
      emit(structure_ops()[static_cast<std::size_t>(op)].code);
      const int arity = structure_ops()[static_cast<std::size_t>(op)].arity;
      for (int i = 0; i < arity; ++i) self(self);
    } else {
      if (ci >= compos.size()) throw DataError("inconsistent token counts during serialization");
      emit(vocab.compo_symbol(compos[ci++]));
    }
  };
  build(build);
  return out.str();
}

std::vector<std::pair<int, std::string>> load_ids_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<std::pair<int, std::string>> table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("IDS table line missing TAB: " + line);
    table.push_back({std::stoi(line.substr(0, tab)), line.substr(tab + 1)});
  }
  return table;
}

void save_ids_table(const std::string& path,
                    const std::vector<std::pair<int, std::string>>& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& [id, expr] : table) out << id << '\t' << expr << '\n';
}

}  // namespace glyphforge
