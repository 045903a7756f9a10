#include "glyphforge/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "glyphforge/errors.hpp"

namespace glyphforge {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: bad integer for " + key + ": " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: bad number for " + key + ": " + v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: bad seed for " + key + ": " + v);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "d_prime") cfg.model.d_prime = to_int(key, value);
  else if (key == "heads") cfg.model.heads = to_int(key, value);
  else if (key == "mixtures") cfg.model.mixtures = to_int(key, value);
  else if (key == "style_samples") cfg.model.style_samples = to_int(key, value);
  else if (key == "max_points") cfg.model.max_points = to_int(key, value);
  else if (key == "image_size") {
    cfg.model.image_h = cfg.model.image_w = to_int(key, value);
    cfg.corpus.image_size = to_int(key, value);
  } else if (key == "lr") cfg.train.lr = to_double(key, value);
  else if (key == "batch") cfg.train.batch = to_int(key, value);
  else if (key == "lambda1") cfg.train.lambda1 = to_double(key, value);
  else if (key == "lambda2") cfg.train.lambda2 = to_double(key, value);
  else if (key == "steps_stage1") cfg.train.steps_stage1 = to_int(key, value);
  else if (key == "steps_stage2") cfg.train.steps_stage2 = to_int(key, value);
  else if (key == "seed") cfg.train.seed = to_u64(key, value);
  else if (key == "sample_every") cfg.train.sample_every = to_int(key, value);
  else if (key == "components") cfg.corpus.components = to_int(key, value);
  else if (key == "writers") cfg.corpus.writers = to_int(key, value);
  else if (key == "chars") cfg.corpus.chars = to_int(key, value);
  else if (key == "seen_writers") cfg.corpus.seen_writers = to_int(key, value);
  else if (key == "seen_chars") cfg.corpus.seen_chars = to_int(key, value);
  else if (key == "corpus_seed") cfg.corpus.seed = to_u64(key, value);
  else throw UsageError("config: unknown key " + key);
}

RunConfig parse_run_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: line " + std::to_string(lineno) + " is not key=value");
    set_key(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::string render_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "d_prime = " << cfg.model.d_prime << "\n"
      << "heads = " << cfg.model.heads << "\n"
      << "mixtures = " << cfg.model.mixtures << "\n"
      << "style_samples = " << cfg.model.style_samples << "\n"
      << "max_points = " << cfg.model.max_points << "\n"
      << "image_size = " << cfg.model.image_h << "\n"
      << "lr = " << cfg.train.lr << "\n"
      << "batch = " << cfg.train.batch << "\n"
      << "lambda1 = " << cfg.train.lambda1 << "\n"
      << "lambda2 = " << cfg.train.lambda2 << "\n"
      << "steps_stage1 = " << cfg.train.steps_stage1 << "\n"
      << "steps_stage2 = " << cfg.train.steps_stage2 << "\n"
      << "seed = " << cfg.train.seed << "\n"
      << "sample_every = " << cfg.train.sample_every << "\n"
      << "components = " << cfg.corpus.components << "\n"
      << "writers = " << cfg.corpus.writers << "\n"
      << "chars = " << cfg.corpus.chars << "\n"
      << "seen_writers = " << cfg.corpus.seen_writers << "\n"
      << "seen_chars = " << cfg.corpus.seen_chars << "\n"
      << "corpus_seed = " << cfg.corpus.seed << "\n";
  return out.str();
}

void write_run_config(const RunConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "resolved.cfg", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write resolved config to " + dir);
  out << render_run_config(cfg);
}

}  // namespace glyphforge
