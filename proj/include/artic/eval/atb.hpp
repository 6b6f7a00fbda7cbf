#pragma once

#include <map>

#include "artic/eval/dice.hpp"
#include "artic/model/segnet.hpp"
#include "artic/train/trainer.hpp"

namespace artic::eval {

using corpus::ATBMaskSet;
using corpus::Utterance;
using corpus::VideoTensor;
using model::SegNet;
using model::SegNetConfig;
using train::TrainConfig;
using train::TrainReport;

struct SegTrainConfig {
  SegNetConfig net;
  real learning_rate = 1e-4;
  int pooled_epochs = 6;
  int finetune_epochs = 4;
  int batch_size = 16;
  int videos_per_subject = 9;  // frame-mask pairs drawn from this many videos
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SegTrainConfig& c) {
  j = {{"net", c.net},
       {"learning_rate", c.learning_rate},
       {"pooled_epochs", c.pooled_epochs},
       {"finetune_epochs", c.finetune_epochs},
       {"batch_size", c.batch_size},
       {"videos_per_subject", c.videos_per_subject},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SegTrainConfig& c) {
  j.at("net").get_to(c.net);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("pooled_epochs").get_to(c.pooled_epochs);
  j.at("finetune_epochs").get_to(c.finetune_epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("videos_per_subject").get_to(c.videos_per_subject);
  j.at("seed").get_to(c.seed);
}

namespace detail {

struct FramePair {
  const Utterance* utt;
  int frame;
};

inline std::vector<FramePair> frame_pairs(const std::vector<const Utterance*>& utts,
                                          int videos_cap) {
  std::vector<FramePair> pairs;
  int used = 0;
  for (const Utterance* u : utts) {
    if (videos_cap > 0 && used >= videos_cap) break;
    if (!u->gt_masks)
      throw Error("segnet training: utterance " + u->utt_id + " has no masks");
    for (int i = 0; i < u->frames(); ++i) pairs.push_back({u, i});
    ++used;
  }
  if (pairs.empty()) throw Error("segnet training: no frame-mask pairs");
  return pairs;
}

/// One epoch of summed per-head cross-entropy over shuffled minibatches.
inline real segnet_epoch(SegNet& net, std::vector<FramePair>& pairs, nn::Adam& adam,
                         int batch_size, Rng& order_rng) {
  order_rng.shuffle(pairs);
  const std::int64_t frame_sz = static_cast<std::int64_t>(3) * 64 * 64;
  const std::int64_t mask_sz = static_cast<std::int64_t>(64) * 64;
  real total = 0;
  std::int64_t batches = 0;
  for (std::size_t at = 0; at < pairs.size(); at += static_cast<std::size_t>(batch_size)) {
    const int bs = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(batch_size), pairs.size() - at));
    Tensor frames({bs, 3, 64, 64});
    Tensor labels[3] = {Tensor({bs, 64, 64}), Tensor({bs, 64, 64}), Tensor({bs, 64, 64})};
    for (int b = 0; b < bs; ++b) {
      const FramePair& fp = pairs[at + static_cast<std::size_t>(b)];
      std::copy_n(fp.utt->video.data.data() + fp.frame * frame_sz, frame_sz,
                  frames.data() + b * frame_sz);
      for (int k = 0; k < 3; ++k)
        std::copy_n(fp.utt->gt_masks->mask(k + 1).data() + fp.frame * mask_sz, mask_sz,
                    labels[k].data() + b * mask_sz);
    }
    ad::Tape t(/*training=*/true);
    auto logits = net.forward(t, t.constant(frames));
    ad::Var loss = ad::softmax_xent_chan(t, logits[0], labels[0]);
    loss = ad::add(t, loss, ad::softmax_xent_chan(t, logits[1], labels[1]));
    loss = ad::add(t, loss, ad::softmax_xent_chan(t, logits[2], labels[2]));
    total += t.val(loss)[0];
    ++batches;
    t.backward(loss);
    adam.step(t);
  }
  return total / static_cast<real>(batches);
}

inline TrainReport run_segnet_training(SegNet& net, std::vector<FramePair> pairs,
                                       int epochs, const SegTrainConfig& cfg,
                                       std::uint64_t order_tag,
                                       train::JsonlLogger* log) {
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  nn::Adam adam(net.parameters(), tc.adam());
  Rng order_rng = Rng::keyed(cfg.seed, order_tag);
  TrainReport report;
  report.steps_per_epoch = static_cast<std::int64_t>(
      (pairs.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const double e0 = train::detail::now_seconds();
    const real loss = segnet_epoch(net, pairs, adam, cfg.batch_size, order_rng);
    const double secs = train::detail::now_seconds() - e0;
    report.epochs.push_back({epoch, loss, std::numeric_limits<real>::quiet_NaN(), secs});
    report.total_steps += report.steps_per_epoch;
    if (log)
      log->write({{"epoch", epoch}, {"train_loss", loss}, {"val_loss", nullptr},
                  {"seconds", secs}});
  }
  report.best_epoch = epochs;
  return report;
}

}  // namespace detail

inline void save_segnet_checkpoint(const std::filesystem::path& path, SegNet& net,
                                   const std::string& subject,
                                   const std::string& corpus_hash_,
                                   const SegTrainConfig& cfg) {
  nlohmann::json configs{{"segnet", net.config()}, {"seg_train", cfg}};
  model::save_checkpoint(path, "segnet", subject, configs, corpus_hash_,
                         {{"segnet", &net}});
}

inline std::unique_ptr<SegNet> load_segnet_checkpoint(
    const std::filesystem::path& path, model::CheckpointMeta* meta_out = nullptr) {
  model::CheckpointMeta meta = model::read_checkpoint_meta(path);
  if (meta.kind != "segnet")
    throw Error(path.string() + ": not a segnet checkpoint (kind=" + meta.kind + ")");
  Rng rng(0);
  auto net = std::make_unique<SegNet>(meta.configs.at("segnet").get<SegNetConfig>(), rng);
  model::load_checkpoint_into(path, {{"segnet", net.get()}});
  if (meta_out) *meta_out = meta;
  return net;
}

struct SegnetResult {
  std::unique_ptr<SegNet> net;  // fine-tuned, subject-specific
  TrainReport pooled_report;
  TrainReport finetune_report;
  std::vector<Tensor> pooled_state;  // weights before fine-tuning
};

/// Pooled-then-fine-tuned protocol: one model trained on frame-mask pairs
/// combined from every subject, then fine-tuned on the target subject's pairs
/// starting from the pooled weights. When `pooled_cache` is given, the pooled
/// phase is loaded from it if present, or trained and saved there (training
/// is deterministic, so the cached and freshly trained weights coincide).
inline SegnetResult train_segnet(
    const std::map<std::string, std::vector<const Utterance*>>& per_subject,
    const std::string& subject, const SegTrainConfig& cfg,
    train::JsonlLogger* log = nullptr,
    const std::filesystem::path& pooled_cache = {},
    const std::string& corpus_hash_for_cache = "") {
  auto it = per_subject.find(subject);
  if (it == per_subject.end() || it->second.empty())
    throw Error("train_segnet: subject " + subject + " has no mask pairs");

  SegnetResult result;
  Rng init = Rng::keyed(cfg.seed, Rng::hash_tag("segnet-init"));
  result.net = std::make_unique<SegNet>(cfg.net, init);
  if (!pooled_cache.empty() && std::filesystem::exists(pooled_cache)) {
    model::load_checkpoint_into(pooled_cache, {{"segnet", result.net.get()}});
  } else {
    std::vector<detail::FramePair> pooled;
    for (const auto& [id, utts] : per_subject) {
      auto pairs = detail::frame_pairs(utts, cfg.videos_per_subject);
      pooled.insert(pooled.end(), pairs.begin(), pairs.end());
    }
    result.pooled_report = detail::run_segnet_training(
        *result.net, std::move(pooled), cfg.pooled_epochs, cfg,
        Rng::hash_tag("segnet-pooled-order"), log);
    if (!pooled_cache.empty()) {
      std::filesystem::create_directories(pooled_cache.parent_path());
      save_segnet_checkpoint(pooled_cache, *result.net, "pooled",
                             corpus_hash_for_cache, cfg);
    }
  }
  result.pooled_state = model::snapshot_state({{"segnet", result.net.get()}});
  result.finetune_report = detail::run_segnet_training(
      *result.net, detail::frame_pairs(it->second, cfg.videos_per_subject),
      cfg.finetune_epochs, cfg, Rng::hash_tag("segnet-finetune-order"), log);
  return result;
}

/// Per head, per pixel argmax over the two classes; equal logits resolve to
/// background. Frames are processed in fixed-size batches.
inline ATBMaskSet predict_masks(SegNet& net, const VideoTensor& video) {
  const int n = video.frames();
  ATBMaskSet out;
  out.mask1 = Tensor({n, 64, 64});
  out.mask2 = Tensor({n, 64, 64});
  out.mask3 = Tensor({n, 64, 64});
  const std::int64_t frame_sz = static_cast<std::int64_t>(3) * 64 * 64;
  const std::int64_t mask_sz = static_cast<std::int64_t>(64) * 64;
  constexpr int kChunk = 32;
  for (int at = 0; at < n; at += kChunk) {
    const int bs = std::min(kChunk, n - at);
    Tensor frames({bs, 3, 64, 64});
    std::copy_n(video.data.data() + at * frame_sz, bs * frame_sz, frames.data());
    ad::Tape t(/*training=*/false, nullptr, /*grad_enabled=*/false);
    auto logits = net.forward(t, t.constant(frames));
    for (int k = 0; k < 3; ++k) {
      const Tensor& z = t.val(logits[static_cast<std::size_t>(k)]);
      Tensor& mask = k == 0 ? out.mask1 : k == 1 ? out.mask2 : out.mask3;
      for (int b = 0; b < bs; ++b)
        for (std::int64_t i = 0; i < mask_sz; ++i) {
          const real bg = z.data()[(static_cast<std::int64_t>(b) * 2 + 0) * mask_sz + i];
          const real fg = z.data()[(static_cast<std::int64_t>(b) * 2 + 1) * mask_sz + i];
          mask.data()[(at + b) * mask_sz + i] = fg > bg ? 1.0 : 0.0;
        }
    }
  }
  return out;
}

/// Mean over frames of per-frame dice, one value per utterance per mask.
inline std::array<real, 3> utterance_dice(const ATBMaskSet& a, const ATBMaskSet& b) {
  const int n = a.mask1.dim(0);
  if (b.mask1.dim(0) != n) throw ShapeError("utterance_dice: frame count mismatch");
  std::array<real, 3> out{};
  for (int k = 1; k <= 3; ++k) {
    real sum = 0;
    for (int i = 0; i < n; ++i)
      sum += dice(frame_of(a.mask(k), i), frame_of(b.mask(k), i));
    out[static_cast<std::size_t>(k - 1)] = sum / n;
  }
  return out;
}

struct DiceRow {
  std::string subject;
  std::string variant;
  std::string mask;
  real mean = 0;
  real stddev = 0;
  int n_utterances = 0;
};

struct DiceReport {
  std::vector<DiceRow> rows;                    // mask1..mask3
  std::vector<std::array<real, 3>> per_utterance;
};

/// For each test utterance: synthesize from its phoneme sequence, predict
/// masks on the real and synthesized videos, dice per frame per mask, mean
/// over frames; then mean/std across utterances.
inline DiceReport evaluate_model(SegNet& segnet, train::S2SBundle& bundle,
                                 const std::vector<const Utterance*>& test_utts,
                                 const std::string& subject, std::uint64_t seed) {
  if (test_utts.empty()) throw Error("evaluate_model: empty test set");
  DiceReport report;
  std::array<std::vector<real>, 3> collected;
  for (std::size_t i = 0; i < test_utts.size(); ++i) {
    const Utterance& u = *test_utts[i];
    VideoTensor synth = bundle.synthesize_video(
        u.phoneme_ids, seed + static_cast<std::uint64_t>(i), u.video.frame_rate);
    ATBMaskSet real_masks = predict_masks(segnet, u.video);
    ATBMaskSet synth_masks = predict_masks(segnet, synth);
    auto scores = utterance_dice(real_masks, synth_masks);
    report.per_utterance.push_back(scores);
    for (int k = 0; k < 3; ++k)
      collected[static_cast<std::size_t>(k)].push_back(scores[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < 3; ++k) {
    DiceStats s = aggregate(collected[static_cast<std::size_t>(k)]);
    report.rows.push_back({subject, bundle.variant, "mask" + std::to_string(k + 1),
                           s.mean, s.stddev, s.n});
  }
  return report;
}

/// CSV mirroring the dice table layout: subject, variant, mask, mean, std, n.
inline void write_dice_csv(const std::filesystem::path& path,
                           const std::vector<DiceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject,variant,mask,mean,std,n_utterances\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const auto& r : rows)
    out << r.subject << ',' << r.variant << ',' << r.mask << ',' << r.mean << ','
        << r.stddev << ',' << r.n_utterances << '\n';
}

}  // namespace artic::eval
