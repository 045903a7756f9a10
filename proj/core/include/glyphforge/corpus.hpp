#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glyphforge/decomp.hpp"
#include "glyphforge/trajectory.hpp"

namespace glyphforge {

// Polyline motif in the unit box; the synthetic stand-in for a basic
// component.
struct ComponentMotif {
  int id = -1;
  std::vector<std::vector<std::pair<double, double>>> strokes;
};

// Per-writer distortion parameters, drawn deterministically from
// (writer_id, corpus seed).
struct WriterStyle {
  int writer_id = -1;
  double slant = 0.0;            // radians, x-shear over y
  double scale_jitter = 0.0;     // per-stroke scale amplitude
  double spacing_offset = 0.0;   // center-out stroke displacement
  double resample_rate = 28.0;   // points per unit arc length
  double curvature_noise = 0.0;  // wobble amplitude
  std::uint64_t rng_seed = 0;
};

struct SplitSpec {
  std::vector<int> seen_writers, unseen_writers;
  std::vector<int> seen_chars, unseen_chars;
};

struct CorpusConfig {
  int components = 40;
  int writers = 12;
  int chars = 60;
  int seen_writers = 9;
  int seen_chars = 48;
  int image_size = 32;
  std::uint64_t seed = 1;
};

struct Corpus {
  CorpusConfig config;
  SplitSpec split;
  std::vector<std::pair<int, std::string>> ids_table;
  Vocab vocab;
  std::map<int, Decomposition> decomps;
  std::map<int, RasterImage> content_images;
  std::vector<Trajectory> train, uwsc, uwuc;

  const std::vector<Trajectory>& split_data(const std::string& name) const;
  // Style references come from the writer's own samples; unseen-character
  // evaluation draws them from the writer's seen-character pool.
  const std::vector<Trajectory>& style_pool(const std::string& split_name) const;
  const Trajectory& lookup(const std::string& split_name, int writer, int chr) const;
};

std::vector<ComponentMotif> gen_components(int count, std::uint64_t seed);

WriterStyle writer_style_for(int writer_id, std::uint64_t corpus_seed);

struct ComposeResult {
  Trajectory reference;  // canvas coordinates, unnormalized
  Decomposition decomp;
  RasterImage content_image;
};

// Layout per operator semantics: left-right splits x, above-below splits y,
// ternary operators split in thirds, surrounds nest the inner component.
ComposeResult compose_character(const std::string& expr,
                                const std::vector<ComponentMotif>& components, const Vocab& vocab,
                                int char_id, int image_size);

// Slant shear, per-stroke scale jitter, spacing offsets, arc-length
// resampling, curvature wobble. Deterministic in (reference, style).
Trajectory apply_writer_style(const Trajectory& reference, const WriterStyle& style);

// Deterministic character table: every component appears in a seen character,
// unseen characters are novel recombinations of seen components.
std::vector<std::pair<int, std::string>> build_ids_table(const CorpusConfig& cfg);

Corpus build_corpus(const CorpusConfig& cfg);

// Directory layout: meta.json, train.jsonl, uwsc.jsonl, uwuc.jsonl, ids.tsv,
// content_images/char_<id>.pgm
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// N_s distinct-character renders of one writer, never including the target
// character.
std::vector<RasterImage> sample_style_set(const Corpus& corpus, const std::string& split_name,
                                          int writer_id, int n, std::mt19937_64& rng,
                                          int exclude_char);

RasterImage read_pgm(const std::string& path);

}  // namespace glyphforge
