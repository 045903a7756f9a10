#include "glyphforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "glyphforge/errors.hpp"
#include "glyphforge/rng.hpp"
#include "json.hpp"

namespace glyphforge {

namespace {

using Polyline = std::vector<std::pair<double, double>>;

// base stroke templates in the unit box
std::vector<std::vector<Polyline>> motif_templates() {
  return {
      {{{0.1, 0.5}, {0.9, 0.5}}},                                       // horizontal bar
      {{{0.5, 0.1}, {0.5, 0.9}}},                                       // vertical bar
      {{{0.15, 0.15}, {0.85, 0.85}}},                                   // diagonal
      {{{0.2, 0.1}, {0.2, 0.8}, {0.85, 0.8}}},                          // L hook
      {{{0.1, 0.2}, {0.9, 0.2}}, {{0.5, 0.2}, {0.5, 0.9}}},             // T
      {{{0.15, 0.15}, {0.15, 0.85}},
       {{0.15, 0.15}, {0.85, 0.15}, {0.85, 0.85}},
       {{0.15, 0.85}, {0.85, 0.85}}},                                   // open box
      {{{0.1, 0.5}, {0.9, 0.5}}, {{0.5, 0.1}, {0.5, 0.9}}},             // cross
      {{{0.1, 0.2}, {0.45, 0.8}, {0.6, 0.3}, {0.9, 0.75}}},             // zigzag
      {{{0.15, 0.2}, {0.5, 0.85}, {0.85, 0.2}}},                        // V
      {{{0.2, 0.15}, {0.3, 0.6}, {0.55, 0.85}, {0.85, 0.8}}},           // sweep
      {{{0.15, 0.25}, {0.85, 0.25}},
       {{0.25, 0.55}, {0.75, 0.55}},
       {{0.15, 0.85}, {0.85, 0.85}}},                                   // three bars
      {{{0.8, 0.15}, {0.3, 0.15}, {0.2, 0.5}, {0.7, 0.5}, {0.6, 0.9}}}  // S path
  };
}

std::pair<double, double> apply_variant(std::pair<double, double> p, int variant) {
  switch (variant % 4) {
    case 1: return {1.0 - p.first, p.second};
    case 2: return {p.first, 1.0 - p.second};
    case 3: return {p.second, p.first};
    default: return p;
  }
}

double polyline_length(const Polyline& pl) {
  double len = 0.0;
  for (std::size_t i = 1; i < pl.size(); ++i)
    len += std::hypot(pl[i].first - pl[i - 1].first, pl[i].second - pl[i - 1].second);
  return len;
}

Polyline resample(const Polyline& pl, double step) {
  const double len = polyline_length(pl);
  if (pl.size() < 2 || len <= 0.0) return pl;
  const int segments = std::max(1, static_cast<int>(std::lround(len / step)));
  Polyline out;
  out.reserve(static_cast<std::size_t>(segments) + 1);
  out.push_back(pl.front());
  for (int k = 1; k <= segments; ++k) {
    const double want = k * (len / segments);
    double walked = 0.0;
    std::size_t seg = 1;
    double sx = pl[0].first, sy = pl[0].second;
    while (seg < pl.size()) {
      const double d = std::hypot(pl[seg].first - sx, pl[seg].second - sy);
      if (walked + d >= want - 1e-12 || seg + 1 == pl.size()) {
        const double t = d > 0 ? std::clamp((want - walked) / d, 0.0, 1.0) : 1.0;
        out.push_back({sx + t * (pl[seg].first - sx), sy + t * (pl[seg].second - sy)});
        break;
      }
      walked += d;
      sx = pl[seg].first;
      sy = pl[seg].second;
      ++seg;
    }
  }
  out.back() = pl.back();
  return out;
}

// arrival-state encoding: each stroke's landing point carries pen-up and
// belongs to the preceding stroke's index range; a zero-offset pen-end point
// terminates the trajectory
Trajectory encode_strokes(const std::vector<Polyline>& strokes, int writer_id, int char_id) {
  Trajectory t;
  t.writer_id = writer_id;
  t.char_id = char_id;
  double px = 0.0, py = 0.0;
  for (std::size_t s = 0; s < strokes.size(); ++s) {
    const auto& pl = strokes[s];
    for (std::size_t i = 0; i < pl.size(); ++i) {
      const double dx = pl[i].first - px, dy = pl[i].second - py;
      if (s > 0 && i == 0)
        t.points.push_back(PointRecord::pen_up(dx, dy));
      else
        t.points.push_back(PointRecord::pen_down(dx, dy));
      px = pl[i].first;
      py = pl[i].second;
    }
  }
  t.points.push_back(PointRecord::pen_end(0.0, 0.0));
  return t;
}

// inverse of encode_strokes: true stroke polylines (the pen-up landing point
// opens the next stroke)
std::vector<Polyline> decode_strokes(const Trajectory& traj) {
  std::vector<Polyline> strokes;
  Polyline current;
  double x = 0.0, y = 0.0;
  for (const auto& p : traj.points) {
    x += p.dx;
    y += p.dy;
    if (p.end == 1) break;
    if (p.up == 1) {
      if (current.size() >= 2) strokes.push_back(current);
      current.clear();
    }
    current.push_back({x, y});
  }
  if (current.size() >= 2) strokes.push_back(current);
  return strokes;
}

struct Rect {
  double x0, y0, x1, y1;
  Rect sub(double fx0, double fy0, double fx1, double fy1) const {
    return {x0 + fx0 * (x1 - x0), y0 + fy0 * (y1 - y0), x0 + fx1 * (x1 - x0),
            y0 + fy1 * (y1 - y0)};
  }
};

void layout_node(const IdsNode& node, const Rect& region,
                 const std::vector<ComponentMotif>& components,
                 const std::map<std::string, int>& symbol_to_component,
                 std::vector<Polyline>& out) {
  if (node.op_ordinal < 0) {
    const auto it = symbol_to_component.find(node.leaf);
    if (it == symbol_to_component.end()) throw DataError("unknown component symbol " + node.leaf);
    const auto& motif = components[static_cast<std::size_t>(it->second)];
    const Rect inner = region.sub(0.04, 0.04, 0.96, 0.96);
    for (const auto& stroke : motif.strokes) {
      Polyline placed;
      placed.reserve(stroke.size());
      for (const auto& [mx, my] : stroke)
        placed.push_back(
            {inner.x0 + mx * (inner.x1 - inner.x0), inner.y0 + my * (inner.y1 - inner.y0)});
      out.push_back(std::move(placed));
    }
    return;
  }
  const auto& kids = node.children;
  const double g = 0.02;  // inter-region gap
  auto sub = [&](double a, double b, double c, double d) { return region.sub(a, b, c, d); };
  switch (node.op_ordinal) {
    case 0:
      layout_node(kids[0], sub(0, 0, 0.5 - g, 1), components, symbol_to_component, out);
      layout_node(kids[1], sub(0.5 + g, 0, 1, 1), components, symbol_to_component, out);
      break;
    case 1:
      layout_node(kids[0], sub(0, 0, 1, 0.5 - g), components, symbol_to_component, out);
      layout_node(kids[1], sub(0, 0.5 + g, 1, 1), components, symbol_to_component, out);
      break;
    case 2:
      layout_node(kids[0], sub(0, 0, 1.0 / 3 - g, 1), components, symbol_to_component, out);
      layout_node(kids[1], sub(1.0 / 3 + g, 0, 2.0 / 3 - g, 1), components, symbol_to_component, out);
      layout_node(kids[2], sub(2.0 / 3 + g, 0, 1, 1), components, symbol_to_component, out);
      break;
    case 3:
      layout_node(kids[0], sub(0, 0, 1, 1.0 / 3 - g), components, symbol_to_component, out);
      layout_node(kids[1], sub(0, 1.0 / 3 + g, 1, 2.0 / 3 - g), components, symbol_to_component, out);
      layout_node(kids[2], sub(0, 2.0 / 3 + g, 1, 1), components, symbol_to_component, out);
      break;
    case 4:
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.3, 0.3, 0.7, 0.7), components, symbol_to_component, out);
      break;
    case 5:  // open at the bottom
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.3, 0.45, 0.7, 0.95), components, symbol_to_component, out);
      break;
    case 6:  // open at the top
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.3, 0.05, 0.7, 0.55), components, symbol_to_component, out);
      break;
    case 7:  // open to the right
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.45, 0.3, 0.95, 0.7), components, symbol_to_component, out);
      break;
    case 8:  // upper-left frame
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.4, 0.4, 0.95, 0.95), components, symbol_to_component, out);
      break;
    case 9:  // upper-right frame
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.05, 0.4, 0.6, 0.95), components, symbol_to_component, out);
      break;
    case 10:  // lower-left frame
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], sub(0.4, 0.05, 0.95, 0.6), components, symbol_to_component, out);
      break;
    default:  // overlaid
      layout_node(kids[0], region, components, symbol_to_component, out);
      layout_node(kids[1], region, components, symbol_to_component, out);
      break;
  }
}

std::string component_symbol(int i) {
  std::ostringstream s;
  s << "c" << (i < 10 ? "0" : "") << i;
  return s.str();
}

std::map<std::string, int> component_symbol_map(int count) {
  std::map<std::string, int> m;
  for (int i = 0; i < count; ++i) m[component_symbol(i)] = i;
  return m;
}

constexpr double kReferenceStep = 0.032;

}  // namespace

std::vector<ComponentMotif> gen_components(int count, std::uint64_t seed) {
  const auto templates = motif_templates();
  std::vector<ComponentMotif> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int id = 0; id < count; ++id) {
    std::mt19937_64 rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(id), 0xC0u));
    std::uniform_real_distribution<double> jitter(-0.07, 0.07);
    const auto& base = templates[static_cast<std::size_t>(id) % templates.size()];
    const int variant = (id / static_cast<int>(templates.size())) % 4;
    ComponentMotif motif;
    motif.id = id;
    for (const auto& stroke : base) {
      Polyline pl;
      for (const auto& p : stroke) {
        auto q = apply_variant(p, variant);
        q.first = std::clamp(q.first + jitter(rng), 0.0, 1.0);
        q.second = std::clamp(q.second + jitter(rng), 0.0, 1.0);
        pl.push_back(q);
      }
      motif.strokes.push_back(std::move(pl));
    }
    out.push_back(std::move(motif));
  }
  return out;
}

WriterStyle writer_style_for(int writer_id, std::uint64_t corpus_seed) {
  std::mt19937_64 rng =
      make_rng(mix_seed(corpus_seed, static_cast<std::uint64_t>(writer_id), 0x57u));
  WriterStyle s;
  s.writer_id = writer_id;
  s.slant = std::uniform_real_distribution<double>(-0.22, 0.22)(rng);
  s.scale_jitter = std::uniform_real_distribution<double>(0.03, 0.12)(rng);
  s.spacing_offset = std::uniform_real_distribution<double>(-0.035, 0.055)(rng);
  s.resample_rate = std::uniform_real_distribution<double>(22.0, 34.0)(rng);
  s.curvature_noise = std::uniform_real_distribution<double>(0.003, 0.011)(rng);
  s.rng_seed = rng();
  return s;
}

ComposeResult compose_character(const std::string& expr,
                                const std::vector<ComponentMotif>& components, const Vocab& vocab,
                                int char_id, int image_size) {
  const IdsNode tree = parse_ids_tree(expr);
  const auto symbols = component_symbol_map(static_cast<int>(components.size()));
  std::vector<Polyline> strokes;
  layout_node(tree, Rect{0.0, 0.0, 1.0, 1.0}, components, symbols, strokes);

  std::vector<Polyline> sampled;
  sampled.reserve(strokes.size());
  for (const auto& s : strokes) sampled.push_back(resample(s, kReferenceStep));

  ComposeResult out;
  out.reference = encode_strokes(sampled, -1, char_id);
  out.decomp = parse_ids(expr, vocab);
  out.content_image = render(out.reference, image_size, image_size);
  return out;
}

Trajectory apply_writer_style(const Trajectory& reference, const WriterStyle& style) {
  auto strokes = decode_strokes(reference);
  std::mt19937_64 rng =
      make_rng(mix_seed(style.rng_seed, static_cast<std::uint64_t>(reference.char_id), 0xABu));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double cx = 0.0, cy = 0.0;
  int n = 0;
  for (const auto& s : strokes)
    for (const auto& [x, y] : s) {
      cx += x;
      cy += y;
      ++n;
    }
  cx /= std::max(1, n);
  cy /= std::max(1, n);

  const double shear = std::tan(style.slant);
  std::vector<Polyline> styled;
  styled.reserve(strokes.size());
  for (auto& s : strokes) {
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : s) {
      sx += x;
      sy += y;
    }
    sx /= static_cast<double>(s.size());
    sy /= static_cast<double>(s.size());
    const double scale = 1.0 + style.scale_jitter * unit(rng);
    // center-out displacement plus a small random component
    const double ox = style.spacing_offset * (sx - cx) + 0.25 * style.spacing_offset * unit(rng);
    const double oy = style.spacing_offset * (sy - cy) + 0.25 * style.spacing_offset * unit(rng);

    Polyline moved;
    moved.reserve(s.size());
    for (const auto& [x, y] : s) {
      double px = sx + scale * (x - sx) + ox;
      const double py = sy + scale * (y - sy) + oy;
      px += shear * (cy - py);
      moved.push_back({px, py});
    }

    Polyline res = resample(moved, 1.0 / style.resample_rate);
    // smooth wobble along the stroke, endpoints pinned
    const double freq = std::uniform_real_distribution<double>(1.5, 4.0)(rng);
    const double phase = std::uniform_real_distribution<double>(0.0, 6.28318)(rng);
    for (std::size_t i = 1; i + 1 < res.size(); ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(res.size() - 1);
      const double ampl =
          style.curvature_noise * (std::sin(freq * 6.28318 * t + phase) + 0.35 * gauss(rng));
      const double tx = res[i + 1].first - res[i - 1].first;
      const double ty = res[i + 1].second - res[i - 1].second;
      const double tl = std::hypot(tx, ty);
      if (tl > 1e-12) {
        res[i].first += ampl * (-ty / tl);
        res[i].second += ampl * (tx / tl);
      }
    }
    styled.push_back(std::move(res));
  }
  return encode_strokes(styled, style.writer_id, reference.char_id);
}

std::vector<std::pair<int, std::string>> build_ids_table(const CorpusConfig& cfg) {
  const auto& ops = structure_ops();
  std::mt19937_64 rng = make_rng(mix_seed(cfg.seed, 0x1D5u));
  std::uniform_int_distribution<int> op_pick(0, kNumStructureOps - 1);

  // component queue cycling all ids so every component lands in a seen char
  std::vector<int> queue;
  auto next_component = [&] {
    if (queue.empty()) {
      std::vector<int> ids(static_cast<std::size_t>(cfg.components));
      for (int i = 0; i < cfg.components; ++i) ids[static_cast<std::size_t>(i)] = i;
      std::shuffle(ids.begin(), ids.end(), rng);
      queue = ids;
    }
    const int id = queue.back();
    queue.pop_back();
    return id;
  };

  std::set<std::string> used_exprs;
  std::set<int> seen_components;
  std::vector<std::pair<int, std::string>> table;

  auto make_expr = [&](int op, auto leaf_source) {
    std::ostringstream e;
    e << ops[static_cast<std::size_t>(op)].code;
    std::vector<int> leaves;
    for (int i = 0; i < ops[static_cast<std::size_t>(op)].arity; ++i) {
      int c = leaf_source();
      for (int guard = 0; guard < 64 && std::find(leaves.begin(), leaves.end(), c) != leaves.end();
           ++guard)
        c = leaf_source();
      leaves.push_back(c);
      e << ' ' << component_symbol(c);
    }
    return std::make_pair(e.str(), leaves);
  };

  // seen characters: first pass covers every operator, then weighted draws
  // with occasional one-level nesting
  for (int id = 0; id < cfg.seen_chars; ++id) {
    std::string expr;
    for (int attempt = 0; attempt < 64 && expr.empty(); ++attempt) {
      const int op = id < kNumStructureOps ? id : op_pick(rng);
      auto [e, leaves] = make_expr(op, next_component);
      if (id >= kNumStructureOps && std::uniform_real_distribution<double>(0, 1)(rng) < 0.3) {
        const int inner_op = std::uniform_int_distribution<int>(0, 1)(rng);
        auto [inner, inner_leaves] = make_expr(inner_op, next_component);
        const auto first_leaf_pos = e.find(' ') + 1;
        const auto first_leaf_end = e.find(' ', first_leaf_pos);
        e = e.substr(0, first_leaf_pos) + inner +
            (first_leaf_end == std::string::npos ? "" : e.substr(first_leaf_end));
        leaves.insert(leaves.end(), inner_leaves.begin(), inner_leaves.end());
      }
      if (used_exprs.insert(e).second) {
        expr = e;
        for (const int c : leaves) seen_components.insert(c);
      }
    }
    if (expr.empty()) throw DataError("could not build a unique seen character expression");
    table.push_back({id, expr});
  }

  // unseen characters: recombine components already seen
  std::vector<int> seen_pool(seen_components.begin(), seen_components.end());
  if (seen_pool.size() < 3)
    throw DataError("unsatisfiable recombination constraint: too few seen components");
  std::uniform_int_distribution<int> pool_pick(0, static_cast<int>(seen_pool.size()) - 1);
  for (int id = cfg.seen_chars; id < cfg.chars; ++id) {
    std::string expr;
    for (int attempt = 0; attempt < 256 && expr.empty(); ++attempt) {
      auto [e, leaves] = make_expr(
          op_pick(rng), [&] { return seen_pool[static_cast<std::size_t>(pool_pick(rng))]; });
      (void)leaves;
      if (used_exprs.insert(e).second) expr = e;
    }
    if (expr.empty()) throw DataError("unsatisfiable recombination constraint");
    table.push_back({id, expr});
  }
  return table;
}

Corpus build_corpus(const CorpusConfig& cfg) {
  if (cfg.chars < 2 || cfg.writers < 2 || cfg.components < 3)
    throw UsageError("corpus needs at least 2 writers, 2 chars, 3 components");
  if (cfg.seen_chars >= cfg.chars || cfg.seen_writers >= cfg.writers)
    throw UsageError("splits need at least one unseen writer and character");

  Corpus corpus;
  corpus.config = cfg;
  corpus.ids_table = build_ids_table(cfg);
  corpus.vocab = build_vocab(corpus.ids_table);

  for (int w = 0; w < cfg.writers; ++w)
    (w < cfg.seen_writers ? corpus.split.seen_writers : corpus.split.unseen_writers).push_back(w);
  for (int c = 0; c < cfg.chars; ++c)
    (c < cfg.seen_chars ? corpus.split.seen_chars : corpus.split.unseen_chars).push_back(c);

  const auto components = gen_components(cfg.components, cfg.seed);
  std::map<int, Trajectory> references;
  for (const auto& [char_id, expr] : corpus.ids_table) {
    auto composed = compose_character(expr, components, corpus.vocab, char_id, cfg.image_size);
    corpus.decomps[char_id] = composed.decomp;
    corpus.content_images[char_id] = std::move(composed.content_image);
    references[char_id] = std::move(composed.reference);
  }

  std::vector<WriterStyle> styles;
  styles.reserve(static_cast<std::size_t>(cfg.writers));
  for (int w = 0; w < cfg.writers; ++w) styles.push_back(writer_style_for(w, cfg.seed));

  for (const int w : corpus.split.seen_writers)
    for (const int c : corpus.split.seen_chars)
      corpus.train.push_back(
          normalize(apply_writer_style(references[c], styles[static_cast<std::size_t>(w)])));
  for (const int w : corpus.split.unseen_writers) {
    for (const int c : corpus.split.seen_chars)
      corpus.uwsc.push_back(
          normalize(apply_writer_style(references[c], styles[static_cast<std::size_t>(w)])));
    for (const int c : corpus.split.unseen_chars)
      corpus.uwuc.push_back(
          normalize(apply_writer_style(references[c], styles[static_cast<std::size_t>(w)])));
  }
  return corpus;
}

const std::vector<Trajectory>& Corpus::split_data(const std::string& name) const {
  if (name == "swsc" || name == "train") return train;
  if (name == "uwsc") return uwsc;
  if (name == "uwuc") return uwuc;
  throw UsageError("unknown split: " + name);
}

const std::vector<Trajectory>& Corpus::style_pool(const std::string& split_name) const {
  if (split_name == "uwuc") return uwsc;  // unseen writers, seen-character references
  return split_data(split_name);
}

const Trajectory& Corpus::lookup(const std::string& split_name, int writer, int chr) const {
  for (const auto& t : split_data(split_name))
    if (t.writer_id == writer && t.char_id == chr) return t;
  throw DataError("no sample for writer " + std::to_string(writer) + ", char " +
                  std::to_string(chr) + " in " + split_name);
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "content_images");

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["seed"] = corpus.config.seed;
  meta["components"] = corpus.config.components;
  meta["writers"] = corpus.config.writers;
  meta["chars"] = corpus.config.chars;
  meta["seen_writers"] = corpus.config.seen_writers;
  meta["seen_chars"] = corpus.config.seen_chars;
  meta["image_size"] = corpus.config.image_size;
  meta["split"] = {{"seen_writers", corpus.split.seen_writers},
                   {"unseen_writers", corpus.split.unseen_writers},
                   {"seen_chars", corpus.split.seen_chars},
                   {"unseen_chars", corpus.split.unseen_chars}};
  std::ofstream meta_out(fs::path(dir) / "meta.json", std::ios::binary);
  if (!meta_out) throw DataError("cannot write corpus meta to " + dir);
  meta_out << meta.dump(2) << '\n';

  save_ids_table((fs::path(dir) / "ids.tsv").string(), corpus.ids_table);
  write_jsonl((fs::path(dir) / "train.jsonl").string(), corpus.train);
  write_jsonl((fs::path(dir) / "uwsc.jsonl").string(), corpus.uwsc);
  write_jsonl((fs::path(dir) / "uwuc.jsonl").string(), corpus.uwuc);
  for (const auto& [char_id, img] : corpus.content_images) {
    std::ostringstream name;
    name << "char_" << char_id << ".pgm";
    write_pgm((fs::path(dir) / "content_images" / name.str()).string(), img);
  }
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "meta.json", std::ios::binary);
  if (!meta_in) throw DataError("no corpus at " + dir + " (missing meta.json)");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad meta.json: ") + e.what());
  }

  Corpus corpus;
  try {
    corpus.config.seed = meta.at("seed").get<std::uint64_t>();
    corpus.config.components = meta.at("components").get<int>();
    corpus.config.writers = meta.at("writers").get<int>();
    corpus.config.chars = meta.at("chars").get<int>();
    corpus.config.seen_writers = meta.at("seen_writers").get<int>();
    corpus.config.seen_chars = meta.at("seen_chars").get<int>();
    corpus.config.image_size = meta.at("image_size").get<int>();
    corpus.split.seen_writers = meta.at("split").at("seen_writers").get<std::vector<int>>();
    corpus.split.unseen_writers = meta.at("split").at("unseen_writers").get<std::vector<int>>();
    corpus.split.seen_chars = meta.at("split").at("seen_chars").get<std::vector<int>>();
    corpus.split.unseen_chars = meta.at("split").at("unseen_chars").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad meta.json: ") + e.what());
  }

  corpus.ids_table = load_ids_table((fs::path(dir) / "ids.tsv").string());
  corpus.vocab = build_vocab(corpus.ids_table);
  for (const auto& [char_id, expr] : corpus.ids_table) {
    corpus.decomps[char_id] = parse_ids(expr, corpus.vocab);
    std::ostringstream name;
    name << "char_" << char_id << ".pgm";
    corpus.content_images[char_id] =
        read_pgm((fs::path(dir) / "content_images" / name.str()).string());
  }
  corpus.train = read_jsonl((fs::path(dir) / "train.jsonl").string());
  corpus.uwsc = read_jsonl((fs::path(dir) / "uwsc.jsonl").string());
  corpus.uwuc = read_jsonl((fs::path(dir) / "uwuc.jsonl").string());
  return corpus;
}

std::vector<RasterImage> sample_style_set(const Corpus& corpus, const std::string& split_name,
                                          int writer_id, int n, std::mt19937_64& rng,
                                          int exclude_char) {
  const auto& pool = corpus.style_pool(split_name);
  std::vector<const Trajectory*> candidates;
  for (const auto& t : pool)
    if (t.writer_id == writer_id && t.char_id != exclude_char) candidates.push_back(&t);
  if (static_cast<int>(candidates.size()) < n)
    throw DataError("writer " + std::to_string(writer_id) + " has only " +
                    std::to_string(candidates.size()) + " style candidates, need " +
                    std::to_string(n));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<RasterImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(render(*candidates[static_cast<std::size_t>(i)], corpus.config.image_size,
                         corpus.config.image_size));
  return out;
}

RasterImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("not a binary PGM: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  in.get();
  if (w < 1 || h < 1 || maxval != 255) throw DataError("unsupported PGM header: " + path);
  RasterImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  std::vector<char> buf(img.pixels.size());
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw DataError("truncated PGM: " + path);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(buf[i])) / 255.0;
  return img;
}

}  // namespace glyphforge
