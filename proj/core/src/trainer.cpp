#include "glyphforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "glyphforge/optim.hpp"
#include "glyphforge/rng.hpp"

namespace glyphforge {

namespace {

using Var = ag::VarT<float>;
using Tensor = ag::TensorT<float>;
using Adam = nn::Adam<float>;

int state_of(const PointRecord& p) { return p.down ? 0 : (p.up ? 1 : 2); }

struct BatchItem {
  int writer = -1;
  int chr = -1;
  const Trajectory* traj = nullptr;
  std::vector<RasterImage> style_images;
};

class Engine {
 public:
  Engine(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
         std::uint64_t model_init_seed)
      : corpus_(corpus), tcfg_(tcfg) {
    tcfg_.validate();
    model_ = std::make_unique<DnaModel<float>>(mcfg, model_init_seed);
    adam_ = std::make_unique<Adam>(tcfg_.lr, tcfg_.beta1, tcfg_.beta2, tcfg_.adam_eps,
                                   model_->params().total_coords());
    for (const auto& t : corpus_.train)
      train_index_[{t.writer_id, t.char_id}] = &t;
  }

  DnaModel<float>& model() { return *model_; }
  Adam& adam() { return *adam_; }

  void load(const Checkpoint& ckpt) {
    auto& ps = model_->params();
    if (ckpt.params.size() != ps.items().size())
      throw DataError("checkpoint parameter count mismatch");
    for (const auto& [name, tensor] : ckpt.params) {
      auto& var = const_cast<Var&>(ps.get(name));
      if (var.value().shape != tensor.shape)
        throw DataError("checkpoint shape mismatch for " + name);
      var.value().v = tensor.v;
    }
    if (!ckpt.adam_m.empty()) adam_->set_state(ckpt.adam_t, ckpt.adam_m, ckpt.adam_v);
    stage_ = ckpt.stage;
    step_ = ckpt.step;
    train_seed_ = ckpt.train_seed;
  }

  Checkpoint snapshot() const {
    Checkpoint ckpt;
    ckpt.model = model_->config();
    ckpt.stage = stage_;
    ckpt.step = step_;
    ckpt.train_seed = train_seed_;
    for (const auto& [name, var] : model_->params().items())
      ckpt.params.push_back({name, var.value()});
    ckpt.adam_t = adam_->t();
    ckpt.adam_m = adam_->m();
    ckpt.adam_v = adam_->v();
    return ckpt;
  }

  void set_stage(int stage) { stage_ = stage; }
  void set_train_seed(std::uint64_t seed) { train_seed_ = seed; }
  int stage() const { return stage_; }
  std::uint64_t step() const { return step_; }

  std::vector<losses::LossReport> run(int steps, const std::string& out_dir) {
    std::ofstream log;
    if (!out_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(out_dir);
      const auto path = fs::path(out_dir) / "train_log.csv";
      const bool fresh = !fs::exists(path);
      log.open(path, std::ios::app);
      if (fresh) log << losses::loss_csv_header() << '\n';
    }
    std::vector<losses::LossReport> reports;
    reports.reserve(static_cast<std::size_t>(steps));
    const std::vector<std::uint8_t> frozen = frozen_mask();
    for (int i = 0; i < steps; ++i) {
      ++step_;
      const auto report = step_once(frozen);
      reports.push_back(report);
      if (log.is_open()) log << losses::loss_csv_row(static_cast<int>(step_), stage_, report) << '\n';
      if (!out_dir.empty() && tcfg_.sample_every > 0 &&
          step_ % static_cast<std::uint64_t>(tcfg_.sample_every) == 0)
        render_sample(out_dir);
    }
    return reports;
  }

 private:
  std::vector<std::uint8_t> frozen_mask() const {
    std::vector<std::uint8_t> frozen;
    for (const auto& [name, var] : model_->params().items())
      frozen.push_back(stage_ == 2 && name.rfind("content.", 0) == 0 ? 1 : 0);
    return frozen;
  }

  std::vector<BatchItem> make_batch(std::mt19937_64& rng) const {
    const auto& writers = corpus_.split.seen_writers;
    const auto& chars = corpus_.split.seen_chars;
    std::uniform_int_distribution<std::size_t> wpick(0, writers.size() - 1);
    std::uniform_int_distribution<std::size_t> cpick(0, chars.size() - 1);
    std::vector<BatchItem> batch(static_cast<std::size_t>(tcfg_.batch));
    for (auto& item : batch) {
      item.writer = writers[wpick(rng)];
      item.chr = chars[cpick(rng)];
      item.traj = train_index_.at({item.writer, item.chr});
      item.style_images = sample_style_set(corpus_, "train", item.writer,
                                           model_->config().style_samples, rng, item.chr);
    }
    return batch;
  }

  losses::LossReport step_once(const std::vector<std::uint8_t>& frozen) {
    std::mt19937_64 rng = make_rng(mix_seed(train_seed_, step_, 0xBA7C4ull));
    const auto batch = make_batch(rng);
    const int n_s = model_->config().style_samples;
    const int d_tokens = model_->config().style_tokens;
    const int rows_per_item = n_s * d_tokens;

    // one batched style encoding for all items
    std::vector<const RasterImage*> all_styles;
    for (const auto& item : batch)
      for (const auto& img : item.style_images) all_styles.push_back(&img);
    const auto style_all = model_->encode_styles(all_styles);

    std::vector<const RasterImage*> contents;
    for (const auto& item : batch) contents.push_back(&corpus_.content_images.at(item.chr));
    const auto global_all = model_->encode_globals(contents);

    const int r = model_->config().mixtures;
    Var l_xy, l_state, l_ch, l_de, l_sp;
    std::vector<Var> writer_embs, glyph_rows;
    std::vector<int> writer_ids, glyph_sample_ids, glyph_char_ids;
    double total_steps = 0;
    for (const auto& item : batch) total_steps += static_cast<double>(item.traj->points.size());

    std::uniform_int_distribution<int> row_pick(0, rows_per_item - 1);
    const auto zero = [] { return Var::constant(Tensor(ag::Shape{1, 1}, 0.0f)); };
    l_xy = zero();
    l_state = zero();
    l_ch = zero();
    l_de = zero();
    l_sp = zero();

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& item = batch[i];
      DnaModel<float>::StyleFeats sf;
      sf.writer_style = ag::slice_rows(style_all.writer_style, static_cast<int>(i) * rows_per_item,
                                       rows_per_item);
      sf.glyph_style = ag::slice_rows(style_all.glyph_style, static_cast<int>(i) * rows_per_item,
                                      rows_per_item);
      sf.n_images = n_s;
      sf.tokens_per_image = d_tokens;

      const auto z_gc = ag::slice_rows(global_all, static_cast<int>(i) * model_->config().global_tokens,
                                       model_->config().global_tokens);
      const auto& decomp = corpus_.decomps.at(item.chr);
      const auto lc = model_->local_encoder(decomp);
      const auto z_c = model_->fuse(z_gc, lc);

      // teacher forcing: context is the ground-truth prefix
      const auto& pts = item.traj->points;
      std::vector<PointRecord> prev(pts.begin(), pts.end() - 1);
      const auto raw = model_->decode_sequence(z_c, prev, sf);

      std::vector<std::pair<double, double>> targets;
      std::vector<int> states;
      targets.reserve(pts.size());
      for (const auto& p : pts) {
        targets.push_back({p.dx, p.dy});
        states.push_back(state_of(p));
      }
      const float w = static_cast<float>(static_cast<double>(pts.size()) / total_steps);
      l_xy = ag::add(l_xy, ag::scale(losses::nll_gmm(raw, targets, r), w));
      l_state = ag::add(l_state, ag::scale(losses::pen_state_ce(raw, states, r), w));

      writer_embs.push_back(ag::mean_rows(sf.writer_style));
      writer_ids.push_back(item.writer);
      for (int k = 0; k < 2; ++k) {
        glyph_rows.push_back(ag::slice_rows(sf.glyph_style, row_pick(rng), 1));
        glyph_sample_ids.push_back(static_cast<int>(i));
        glyph_char_ids.push_back(item.chr);
      }

      const float inv_b = 1.0f / static_cast<float>(batch.size());
      if (stage_ == 1) {
        const auto z_lg = model_->refine_local(lc, z_gc);
        l_ch = ag::add(l_ch, ag::scale(losses::char_loss(model_->char_logits(z_c), item.chr), inv_b));
        std::vector<int> struct_targets, compo_targets;
        for (const int s : decomp.v_struct)
          struct_targets.push_back(corpus_.vocab.struct_token(s).first);
        for (const int c : decomp.v_compo)
          if (c != 0) compo_targets.push_back(c - 1);
        const auto [sl, cl] = model_->decomp_logits(z_lg, static_cast<int>(struct_targets.size()),
                                                    static_cast<int>(compo_targets.size()));
        l_de = ag::add(l_de, ag::scale(losses::decomp_loss(sl, cl, struct_targets, compo_targets),
                                       inv_b));
      } else {
        // expected offsets replace ground-truth points; stroke ranges stay GT
        const auto pi = ag::softmax_rows(ag::slice_cols(raw, 0, r));
        const auto ex = ag::row_sum(ag::mul(pi, ag::slice_cols(raw, r, r)));
        const auto ey = ag::row_sum(ag::mul(pi, ag::slice_cols(raw, 2 * r, r)));
        const int t_len = static_cast<int>(pts.size());
        const auto offsets =
            ag::transpose(ag::reshape(ag::concat_rows<float>({ex, ey}), {2, t_len}));
        const auto pred_abs = ag::cumsum_rows(offsets);
        const auto ranges = split_strokes(*item.traj);
        const auto pred_boxes = losses::boxes_from_positions(pred_abs, ranges, kMinStrokeExtent);
        const auto gt_boxes =
            stroke_bboxes(to_absolute(*item.traj), ranges, kMinStrokeExtent);
        l_sp = ag::add(l_sp, ag::scale(losses::spacing_loss(pred_boxes,
                                                            losses::boxes_to_vars<float>(gt_boxes)),
                                       inv_b));
      }
    }

    const auto l_sty = losses::contrastive_style(ag::concat_rows(writer_embs), writer_ids, 0.1);
    const auto l_gly =
        losses::contrastive_glyph(ag::concat_rows(glyph_rows), glyph_sample_ids, glyph_char_ids, 0.1);

    auto total = ag::add(ag::add(ag::scale(l_state, 2.0f), l_xy), ag::add(l_sty, l_gly));
    Var l_ct;
    if (stage_ == 1) {
      l_ct = ag::add(l_ch, l_de);
      total = ag::add(total, ag::scale(l_ct, static_cast<float>(tcfg_.lambda1)));
    } else {
      total = ag::add(total, ag::scale(l_sp, static_cast<float>(tcfg_.lambda2)));
    }

    losses::LossReport report;
    report.l_xy = l_xy.value().v[0];
    report.l_state = l_state.value().v[0];
    report.l_sty = l_sty.value().v[0];
    report.l_gly = l_gly.value().v[0];
    if (stage_ == 1) {
      report.l_ch = l_ch.value().v[0];
      report.l_de = l_de.value().v[0];
      report.l_ct = l_ct.value().v[0];
    } else {
      report.l_sp = l_sp.value().v[0];
    }
    report.total = total.value().v[0];
    if (!std::isfinite(report.total)) abort_with_diagnostics(batch, report);

    model_->params().clear_grads();
    ag::backward(total);

    double grad_norm_sq = 0.0;
    for (const auto& [name, var] : model_->params().items())
      for (const float g : var.grad()) grad_norm_sq += static_cast<double>(g) * g;
    if (!std::isfinite(grad_norm_sq)) abort_with_diagnostics(batch, report);

    adam_->step(model_->params(), frozen);
    return report;
  }

  void abort_with_diagnostics(const std::vector<BatchItem>& batch,
                              const losses::LossReport& report) const {
    std::ostringstream diag;
    diag << "non-finite loss at step " << step_ << " stage " << stage_ << "; batch:";
    for (const auto& item : batch) diag << " (w" << item.writer << ",c" << item.chr << ")";
    diag << "; " << losses::loss_csv_row(static_cast<int>(step_), stage_, report);
    throw NumericError(diag.str());
  }

  void render_sample(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "samples");
    std::mt19937_64 rng = make_rng(mix_seed(train_seed_, step_, 0x5A3Eull));
    const int writer = corpus_.split.seen_writers.front();
    const int chr = corpus_.split.seen_chars.front();
    try {
      const auto style = sample_style_set(corpus_, "train", writer, model_->config().style_samples,
                                          rng, chr);
      std::vector<const RasterImage*> ptrs;
      for (const auto& img : style) ptrs.push_back(&img);
      const auto traj = model_->generate(ptrs, corpus_.decomps.at(chr),
                                         corpus_.content_images.at(chr), rng);
      std::ostringstream name;
      name << "step_" << step_ << ".pgm";
      write_pgm((fs::path(out_dir) / "samples" / name.str()).string(),
                render(traj, 64, 64));
    } catch (const std::exception& e) {
      std::cerr << "[glyphforge] sample render skipped: " << e.what() << "\n";
    }
  }

  const Corpus& corpus_;
  TrainConfig tcfg_;
  std::unique_ptr<DnaModel<float>> model_;
  std::unique_ptr<Adam> adam_;
  std::map<std::pair<int, int>, const Trajectory*> train_index_;
  int stage_ = 1;
  std::uint64_t step_ = 0;
  std::uint64_t train_seed_ = 0;
};

}  // namespace

ModelConfig model_config_for(const Corpus& corpus, ModelConfig base) {
  base.image_h = base.image_w = corpus.config.image_size;
  base.char_vocab = corpus.config.chars;
  base.struct_vocab = corpus.vocab.struct_vocab_size();
  base.compo_vocab = corpus.vocab.compo_vocab_size();
  return base;
}

TrainOutput train_stage1(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         int steps, const std::string& out_dir) {
  Engine engine(corpus, mcfg, tcfg, mix_seed(tcfg.seed, 0x1417ull));
  engine.set_stage(1);
  engine.set_train_seed(tcfg.seed);
  TrainOutput out;
  out.reports = engine.run(steps, out_dir);
  out.checkpoint = engine.snapshot();
  return out;
}

TrainOutput train_stage2(const Corpus& corpus, const Checkpoint& stage1, const TrainConfig& tcfg,
                         int steps, const std::string& out_dir) {
  Engine engine(corpus, stage1.model, tcfg, 0);
  engine.load(stage1);
  engine.set_stage(2);
  TrainOutput out;
  out.reports = engine.run(steps, out_dir);
  out.checkpoint = engine.snapshot();
  return out;
}

TrainOutput resume_training(const Corpus& corpus, const Checkpoint& ckpt, const TrainConfig& tcfg,
                            int extra_steps, const std::string& out_dir) {
  Engine engine(corpus, ckpt.model, tcfg, 0);
  engine.load(ckpt);
  TrainOutput out;
  out.reports = engine.run(extra_steps, out_dir);
  out.checkpoint = engine.snapshot();
  return out;
}

std::unique_ptr<DnaModel<float>> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<DnaModel<float>>(ckpt.model, 0);
  auto& ps = model->params();
  if (ckpt.params.size() != ps.items().size())
    throw DataError("checkpoint parameter count mismatch");
  for (const auto& [name, tensor] : ckpt.params) {
    auto& var = const_cast<ag::VarT<float>&>(ps.get(name));
    if (var.value().shape != tensor.shape) throw DataError("checkpoint shape mismatch for " + name);
    var.value().v = tensor.v;
  }
  return model;
}

double window_mean_total(const std::vector<losses::LossReport>& reports, std::size_t from,
                         std::size_t count) {
  double acc = 0.0;
  for (std::size_t i = from; i < from + count && i < reports.size(); ++i) acc += reports[i].total;
  return acc / static_cast<double>(std::min(count, reports.size() - from));
}

double window_mean_sp(const std::vector<losses::LossReport>& reports, std::size_t from,
                      std::size_t count) {
  double acc = 0.0;
  for (std::size_t i = from; i < from + count && i < reports.size(); ++i) acc += reports[i].l_sp;
  return acc / static_cast<double>(std::min(count, reports.size() - from));
}

}  // namespace glyphforge
