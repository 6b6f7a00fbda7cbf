#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>

#include "artic/corpus/corpus.hpp"
#include "artic/model/checkpoint.hpp"
#include "artic/model/cvae.hpp"
#include "artic/model/decoder.hpp"
#include "artic/model/encoder.hpp"
#include "artic/nn/adam.hpp"

namespace artic::train {

using corpus::LoadedCorpus;
using corpus::Utterance;
using model::CVAE;
using model::FrameDecoder;
using model::PhonemeEncoder;
using nlohmann::json;

struct TrainConfig {
  real learning_rate = 1e-4;
  real adam_beta1 = 0.9;
  real adam_beta2 = 0.999;
  real adam_eps = 1e-8;
  int batch_size = 1;  // fixed full-video batch for s2s/s2s-v
  int max_epochs = 150;
  int patience = 10;
  std::uint64_t seed = 0;
  int cvae_epochs = 5;
  int cvae_batch_size = 64;
  bool grad_clip = true;
  real grad_clip_norm = 1.0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (max_epochs < 1 || cvae_epochs < 1 || cvae_batch_size < 1)
      throw ConfigError("train: bad epoch/batch settings");
  }

  nn::AdamConfig adam() const {
    return {learning_rate, adam_beta1, adam_beta2, adam_eps, grad_clip, grad_clip_norm};
  }
};

inline void to_json(json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"seed", c.seed},
       {"cvae_epochs", c.cvae_epochs},
       {"cvae_batch_size", c.cvae_batch_size},
       {"grad_clip", c.grad_clip},
       {"grad_clip_norm", c.grad_clip_norm}};
}

inline void from_json(const json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("batch_size").get_to(c.batch_size);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("patience").get_to(c.patience);
  j.at("seed").get_to(c.seed);
  j.at("cvae_epochs").get_to(c.cvae_epochs);
  j.at("cvae_batch_size").get_to(c.cvae_batch_size);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("grad_clip_norm").get_to(c.grad_clip_norm);
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  real train_loss = 0;
  real val_loss = std::numeric_limits<real>::quiet_NaN();
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // 1-based
  real best_val_loss = std::numeric_limits<real>::quiet_NaN();
  std::filesystem::path checkpoint_path;
  double wall_seconds = 0;
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
};

/// Stops when the validation loss has not improved for `patience` epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }

  /// Observe the next epoch's validation loss; true if it is a new best.
  bool observe(real val_loss) {
    ++epoch_;
    if (epoch_ == 1 || val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  real best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = -1;
  int since_best_ = 0;
  real best_loss_ = std::numeric_limits<real>::quiet_NaN();
};

/// JSON-lines training log, one record per epoch.
class JsonlLogger {
 public:
  explicit JsonlLogger(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw IoError("cannot open log file: " + path.string());
  }
  void write(const json& j) { out_ << j.dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

struct SubjectData {
  std::vector<const Utterance*> train, val, test;
};

inline SubjectData partition(const LoadedCorpus& corpus,
                             const corpus::CorpusSplit& split,
                             const std::string& subject) {
  SubjectData data;
  for (const Utterance& u : corpus.subject(subject)) {
    if (split.in_train(u.utt_id)) data.train.push_back(&u);
    else if (split.in_val(u.utt_id)) data.val.push_back(&u);
    else if (split.in_test(u.utt_id)) data.test.push_back(&u);
  }
  return data;
}

namespace detail {

inline double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

/// Fresh per-utterance F noise for s2s-v training epochs, and a fixed stream
/// for validation so early stopping compares like with like.
inline std::uint64_t f_noise_tag(std::uint64_t seed, int epoch, std::size_t utt) {
  return Rng::keyed(seed, Rng::hash_tag("s2sv-f-noise") +
                              static_cast<std::uint64_t>(epoch) * 1000003ull +
                              static_cast<std::uint64_t>(utt))
      .next_u64();
}

}  // namespace detail

/// Full-video batch-of-1 training of the s2s / s2s-v model with MSE loss,
/// Adam, early stopping on the validation split and best-epoch selection.
/// For s2s-v, `cvae` is the frozen pretrained prior; its features are
/// resampled per utterance each epoch.
inline TrainReport train_s2s(PhonemeEncoder& encoder, FrameDecoder& decoder,
                             CVAE* cvae, const SubjectData& data,
                             const TrainConfig& cfg, JsonlLogger* log = nullptr) {
  cfg.validate();
  const bool with_features = decoder.config().use_cvae_features;
  if (with_features && !cvae) throw Error("train_s2s: s2s-v requires a CVAE");
  if (!with_features && cvae) throw Error("train_s2s: s2s takes no CVAE");
  if (data.train.empty()) throw Error("train_s2s: empty training split");

  const double t0 = detail::now_seconds();
  model::ModuleSections sections{{"encoder", &encoder}, {"decoder", &decoder}};
  std::vector<nn::ParamTensor*> params = encoder.parameters();
  for (auto* p : decoder.parameters()) params.push_back(p);
  nn::Adam adam(params, cfg.adam());

  Rng order_rng = Rng::keyed(cfg.seed, Rng::hash_tag("s2s-order"));
  Rng dropout_rng = Rng::keyed(cfg.seed, Rng::hash_tag("s2s-dropout"));

  auto features_for = [&](const Utterance& u, std::uint64_t tag) {
    return model::sample_feature_sequence(*cvae, u.phoneme_ids, tag);
  };

  auto eval_loss = [&](const std::vector<const Utterance*>& utts,
                       bool fixed_noise) -> real {
    if (utts.empty()) return std::numeric_limits<real>::quiet_NaN();
    real total = 0;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const Utterance& u = *utts[i];
      ad::Tape t(/*training=*/false, nullptr, /*grad_enabled=*/false);
      ad::Var enc = encoder.encode(t, u.phoneme_ids);
      std::optional<ad::Var> f;
      if (with_features)
        f = t.constant(features_for(
            u, fixed_noise ? detail::f_noise_tag(cfg.seed, 0, i) : 0));
      ad::Var pred = decoder.forward(t, enc, f);
      total += t.val(ad::mse_loss(t, pred, u.video.data))[0];
    }
    return total / static_cast<real>(utts.size());
  };

  TrainReport report;
  report.steps_per_epoch = static_cast<std::int64_t>(data.train.size());
  EarlyStopper stopper(cfg.patience);
  std::vector<Tensor> best_state;

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double e0 = detail::now_seconds();
    order_rng.shuffle(order);
    real train_total = 0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const Utterance& u = *data.train[order[oi]];
      ad::Tape t(/*training=*/true, &dropout_rng);
      ad::Var enc = encoder.encode(t, u.phoneme_ids);
      std::optional<ad::Var> f;
      if (with_features)
        f = t.constant(features_for(u, detail::f_noise_tag(cfg.seed, epoch, order[oi])));
      ad::Var pred = decoder.forward(t, enc, f);
      ad::Var loss = ad::mse_loss(t, pred, u.video.data);
      train_total += t.val(loss)[0];
      t.backward(loss);
      adam.step(t);
      ++report.total_steps;
    }
    const real train_loss = train_total / static_cast<real>(data.train.size());
    const real val_loss =
        data.val.empty() ? train_loss : eval_loss(data.val, /*fixed_noise=*/true);
    const double secs = detail::now_seconds() - e0;
    report.epochs.push_back({epoch, train_loss, val_loss, secs});
    if (log)
      log->write({{"epoch", epoch},
                  {"train_loss", train_loss},
                  {"val_loss", val_loss},
                  {"seconds", secs}});
    if (stopper.observe(val_loss)) best_state = model::snapshot_state(sections);
    if (stopper.should_stop()) break;
  }

  if (!best_state.empty()) model::restore_state(sections, best_state);
  report.best_epoch = stopper.best_epoch();
  report.best_val_loss = stopper.best_loss();
  report.wall_seconds = detail::now_seconds() - t0;
  return report;
}

/// Frame-level CVAE training: the frame pool (training + validation
/// utterances) is shuffled each epoch and consumed in minibatches for exactly
/// cvae_epochs epochs. No early stopping; the final model is kept.
inline TrainReport train_cvae(CVAE& cvae, const std::vector<const Utterance*>& pool,
                              const TrainConfig& cfg, JsonlLogger* log = nullptr) {
  cfg.validate();
  struct FrameRef {
    const Utterance* utt;
    int frame;
  };
  std::vector<FrameRef> frames;
  for (const Utterance* u : pool)
    for (int i = 0; i < u->frames(); ++i) frames.push_back({u, i});
  if (frames.empty()) throw Error("train_cvae: empty frame pool");

  const double t0 = detail::now_seconds();
  nn::Adam adam(cvae.parameters(), cfg.adam());
  Rng order_rng = Rng::keyed(cfg.seed, Rng::hash_tag("cvae-order"));
  Rng noise_rng = Rng::keyed(cfg.seed, Rng::hash_tag("cvae-noise"));

  const std::int64_t frame_sz = static_cast<std::int64_t>(3) * 64 * 64;
  TrainReport report;
  report.steps_per_epoch =
      static_cast<std::int64_t>((frames.size() + cfg.cvae_batch_size - 1) /
                                static_cast<std::size_t>(cfg.cvae_batch_size));

  for (int epoch = 1; epoch <= cfg.cvae_epochs; ++epoch) {
    const double e0 = detail::now_seconds();
    order_rng.shuffle(frames);
    real total = 0;
    std::int64_t batches = 0;
    for (std::size_t at = 0; at < frames.size(); at += static_cast<std::size_t>(cfg.cvae_batch_size)) {
      const int bs = static_cast<int>(
          std::min<std::size_t>(static_cast<std::size_t>(cfg.cvae_batch_size),
                                frames.size() - at));
      Tensor batch({bs, 3, 64, 64});
      std::vector<int> ids(static_cast<std::size_t>(bs));
      for (int b = 0; b < bs; ++b) {
        const FrameRef& fr = frames[at + static_cast<std::size_t>(b)];
        std::copy_n(fr.utt->video.data.data() + fr.frame * frame_sz, frame_sz,
                    batch.data() + b * frame_sz);
        ids[static_cast<std::size_t>(b)] =
            fr.utt->phoneme_ids[static_cast<std::size_t>(fr.frame)];
      }
      Tensor noise({bs, cvae.config().latent_dim});
      noise_rng.fill_normal(noise, 0.0, 1.0);
      ad::Tape t(/*training=*/true, &noise_rng);
      auto parts = cvae.loss(t, batch, ids, noise);
      total += t.val(parts.total)[0];
      ++batches;
      t.backward(parts.total);
      adam.step(t);
      ++report.total_steps;
    }
    const real train_loss = total / static_cast<real>(batches);
    const double secs = detail::now_seconds() - e0;
    report.epochs.push_back({epoch, train_loss,
                             std::numeric_limits<real>::quiet_NaN(), secs});
    if (log)
      log->write({{"epoch", epoch},
                  {"train_loss", train_loss},
                  {"val_loss", nullptr},
                  {"seconds", secs}});
  }
  report.best_epoch = cfg.cvae_epochs;
  report.wall_seconds = detail::now_seconds() - t0;
  return report;
}

/// encode -> (s2s-v: sample features) -> decode, eval mode. The seed only
/// matters for s2s-v; s2s is deterministic.
inline corpus::VideoTensor synthesize(PhonemeEncoder& encoder, FrameDecoder& decoder,
                                      CVAE* cvae, const std::vector<int>& ids,
                                      std::uint64_t seed, double frame_rate) {
  if (ids.empty()) throw Error("synthesize: empty phoneme sequence");
  ad::Tape t(/*training=*/false, nullptr, /*grad_enabled=*/false);
  ad::Var enc = encoder.encode(t, ids);
  std::optional<ad::Var> f;
  if (decoder.config().use_cvae_features) {
    if (!cvae) throw Error("synthesize: s2s-v checkpoint without its CVAE");
    f = t.constant(model::sample_feature_sequence(*cvae, ids, seed));
  }
  corpus::VideoTensor video;
  video.frame_rate = frame_rate;
  video.data = t.val(decoder.forward(t, enc, f)).clone();
  return video;
}

/// Encoder + decoder (+ CVAE for s2s-v) with their configs; one checkpoint.
struct S2SBundle {
  std::string variant;  // "s2s" | "s2s-v"
  model::EncoderConfig enc_cfg;
  model::DecoderConfig dec_cfg;
  std::optional<model::CVAEConfig> cvae_cfg;
  std::unique_ptr<PhonemeEncoder> encoder;
  std::unique_ptr<FrameDecoder> decoder;
  std::unique_ptr<CVAE> cvae;

  static S2SBundle fresh(const std::string& variant, model::EncoderConfig ec,
                         model::DecoderConfig dc,
                         std::optional<model::CVAEConfig> cc, std::uint64_t seed) {
    if (variant != "s2s" && variant != "s2s-v")
      throw ConfigError("unknown variant: " + variant);
    S2SBundle b;
    b.variant = variant;
    dc.use_cvae_features = variant == "s2s-v";
    if (dc.use_cvae_features) {
      if (!cc) throw ConfigError("s2s-v requires a CVAE config");
      dc.cvae_feature_channels = cc->c_feature;
    }
    b.enc_cfg = ec;
    b.dec_cfg = dc;
    b.cvae_cfg = cc;
    Rng rng = Rng::keyed(seed, Rng::hash_tag("model-init"));
    b.encoder = std::make_unique<PhonemeEncoder>(ec, rng);
    b.decoder = std::make_unique<FrameDecoder>(dc, rng);
    if (variant == "s2s-v") b.cvae = std::make_unique<CVAE>(*cc, rng);
    return b;
  }

  model::ModuleSections sections() {
    model::ModuleSections s{{"encoder", encoder.get()}, {"decoder", decoder.get()}};
    if (cvae) s.emplace_back("cvae", cvae.get());
    return s;
  }

  void save(const std::filesystem::path& path, const std::string& subject,
            const std::string& corpus_hash_, const TrainConfig& tc) {
    json configs{{"encoder", enc_cfg}, {"decoder", dec_cfg}, {"train", tc}};
    if (cvae_cfg) configs["cvae"] = *cvae_cfg;
    model::save_checkpoint(path, variant, subject, configs, corpus_hash_, sections());
  }

  static S2SBundle load(const std::filesystem::path& path,
                        model::CheckpointMeta* meta_out = nullptr) {
    model::CheckpointMeta meta = model::read_checkpoint_meta(path);
    if (meta.kind != "s2s" && meta.kind != "s2s-v")
      throw Error(path.string() + ": not an s2s/s2s-v checkpoint (kind=" + meta.kind + ")");
    std::optional<model::CVAEConfig> cc;
    if (meta.configs.contains("cvae"))
      cc = meta.configs.at("cvae").get<model::CVAEConfig>();
    S2SBundle b = fresh(meta.kind, meta.configs.at("encoder").get<model::EncoderConfig>(),
                        meta.configs.at("decoder").get<model::DecoderConfig>(), cc, 0);
    model::load_checkpoint_into(path, b.sections());
    if (meta_out) *meta_out = meta;
    return b;
  }

  corpus::VideoTensor synthesize_video(const std::vector<int>& ids, std::uint64_t seed,
                                       double frame_rate = corpus::kDefaultFrameRate) {
    return synthesize(*encoder, *decoder, cvae.get(), ids, seed, frame_rate);
  }
};

inline void save_cvae_checkpoint(const std::filesystem::path& path, CVAE& cvae,
                                 const std::string& subject,
                                 const std::string& corpus_hash_,
                                 const TrainConfig& tc) {
  json configs{{"cvae", cvae.config()}, {"train", tc}};
  model::save_checkpoint(path, "cvae", subject, configs, corpus_hash_,
                         {{"cvae", &cvae}});
}

inline std::unique_ptr<CVAE> load_cvae_checkpoint(const std::filesystem::path& path,
                                                  model::CheckpointMeta* meta_out = nullptr) {
  model::CheckpointMeta meta = model::read_checkpoint_meta(path);
  if (meta.kind != "cvae")
    throw Error(path.string() + ": not a CVAE checkpoint (kind=" + meta.kind + ")");
  Rng rng(0);
  auto cvae = std::make_unique<CVAE>(meta.configs.at("cvae").get<model::CVAEConfig>(), rng);
  model::load_checkpoint_into(path, {{"cvae", cvae.get()}});
  if (meta_out) *meta_out = meta;
  return cvae;
}

}  // namespace artic::train
