#pragma once

#include <string>

#include "glyphforge/corpus.hpp"
#include "glyphforge/model.hpp"
#include "glyphforge/trainer.hpp"

namespace glyphforge {

// Flat key=value configuration covering model, training and corpus sizing.
// Unknown keys are rejected; CLI flags are applied on top via set_key.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  CorpusConfig corpus;
};

// '#' starts a comment; blank lines ignored.
RunConfig parse_run_config_file(const std::string& path, RunConfig base = {});

void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Fully resolved key=value text, echoed into output directories.
std::string render_run_config(const RunConfig& cfg);
void write_run_config(const RunConfig& cfg, const std::string& dir);

}  // namespace glyphforge
