// artic-synth: synthesize rtMRI-style vocal-tract video from frame-aligned
// phoneme sequences, and evaluate the synthesis with ATB segmentation dice.
//
// Subcommands: gen-synthetic, train, synthesize, evaluate.
// Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.

#include <CLI11.hpp>

#include <ctime>
#include <iostream>

#include "artic/eval/atb.hpp"
#include "artic/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace artic;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flat key = value config files, merged under CLI flags (flags win).

struct KeyValueConfig {
  std::map<std::string, std::string> values;

  static KeyValueConfig from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file: " + path.string());
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(path.string() + ":" + std::to_string(lineno) +
                         ": expected key = value");
      cfg.values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if constexpr (std::is_same_v<T, bool>) {
      const std::string& s = it->second;
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw UsageError("config key " + key + ": expected boolean, got '" + s + "'");
    } else {
      std::istringstream ss(it->second);
      T out;
      if (!(ss >> out)) throw UsageError("config key " + key + ": bad value");
      return out;
    }
  }

  std::string get_str(const std::string& key, std::string fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
};

fs::path cache_dir() {
  if (const char* env = std::getenv("ARTIC_SYNTH_CACHE")) return fs::path(env);
  if (const char* home = std::getenv("HOME"))
    return fs::path(home) / ".cache" / "artic-synth";
  return fs::temp_directory_path() / "artic-synth-cache";
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config, const json& inputs, const json& outputs,
                    std::uint64_t seed, const json& hashes) {
  corpus::write_json_file(out_dir / "manifest.json",
                          json{{"command", command},
                               {"config", config},
                               {"inputs", inputs},
                               {"outputs", outputs},
                               {"seed", seed},
                               {"timestamp_utc", utc_timestamp()},
                               {"artifact_hashes", hashes}});
}

// ---------------------------------------------------------------------------
// Config assembly from key=value files.

corpus::SyntheticConfig synthetic_config(const KeyValueConfig& kv) {
  corpus::SyntheticConfig cfg;
  cfg.n_subjects = kv.get("n_subjects", cfg.n_subjects);
  cfg.frame_rate = kv.get("frame_rate", cfg.frame_rate);
  cfg.min_phones = kv.get("min_phones", cfg.min_phones);
  cfg.max_phones = kv.get("max_phones", cfg.max_phones);
  cfg.min_dur = kv.get("min_dur", cfg.min_dur);
  cfg.max_dur = kv.get("max_dur", cfg.max_dur);
  cfg.sil_min = kv.get("sil_min", cfg.sil_min);
  cfg.sil_max = kv.get("sil_max", cfg.sil_max);
  return cfg;
}

model::EncoderConfig encoder_config(const KeyValueConfig& kv, int vocab) {
  model::EncoderConfig cfg;
  cfg.n_layers = kv.get("enc_layers", cfg.n_layers);
  cfg.model_dim = kv.get("enc_dim", cfg.model_dim);
  cfg.n_heads = kv.get("enc_heads", cfg.n_heads);
  cfg.ff_dim = kv.get("enc_ff", cfg.ff_dim);
  cfg.dropout = kv.get("enc_dropout", cfg.dropout);
  cfg.vocab_size = vocab;
  cfg.validate();
  return cfg;
}

model::DecoderConfig decoder_config(const KeyValueConfig& kv, int enc_dim) {
  model::DecoderConfig cfg;
  cfg.d = enc_dim / 64;
  cfg.res1_out = kv.get("dec_res1", cfg.res1_out);
  cfg.res2_out = kv.get("dec_res2", cfg.res2_out);
  cfg.tconv1_out = kv.get("dec_tconv1", cfg.tconv1_out);
  cfg.tconv2_out = kv.get("dec_tconv2", cfg.tconv2_out);
  cfg.validate();
  return cfg;
}

model::CVAEConfig cvae_config(const KeyValueConfig& kv, int vocab) {
  model::CVAEConfig cfg;
  cfg.latent_dim = kv.get("cvae_latent", cfg.latent_dim);
  cfg.c_feature = kv.get("cvae_cfeature", cfg.c_feature);
  cfg.enc_hidden = kv.get("cvae_hidden", cfg.enc_hidden);
  cfg.beta = kv.get("cvae_beta", cfg.beta);
  cfg.vocab_size = vocab;
  cfg.validate();
  return cfg;
}

train::TrainConfig train_config(const KeyValueConfig& kv, std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.learning_rate = kv.get("lr", cfg.learning_rate);
  cfg.max_epochs = kv.get("max_epochs", cfg.max_epochs);
  cfg.patience = kv.get("patience", cfg.patience);
  cfg.cvae_epochs = kv.get("cvae_epochs", cfg.cvae_epochs);
  cfg.cvae_batch_size = kv.get("cvae_batch", cfg.cvae_batch_size);
  cfg.grad_clip = kv.get("grad_clip", cfg.grad_clip);
  cfg.grad_clip_norm = kv.get("grad_clip_norm", cfg.grad_clip_norm);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

eval::SegTrainConfig segnet_config(const KeyValueConfig& kv, std::uint64_t seed) {
  eval::SegTrainConfig cfg;
  const std::string chans = kv.get_str("seg_channels", "16,32,64,64");
  cfg.net.enc_channels.clear();
  std::istringstream ss(chans);
  for (std::string tok; std::getline(ss, tok, ',');)
    cfg.net.enc_channels.push_back(std::stoi(tok));
  cfg.net.validate();
  cfg.learning_rate = kv.get("seg_lr", cfg.learning_rate);
  cfg.pooled_epochs = kv.get("seg_pooled_epochs", cfg.pooled_epochs);
  cfg.finetune_epochs = kv.get("seg_finetune_epochs", cfg.finetune_epochs);
  cfg.batch_size = kv.get("seg_batch", cfg.batch_size);
  cfg.videos_per_subject = kv.get("seg_videos_per_subject", cfg.videos_per_subject);
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// Subcommand implementations.

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;

  KeyValueConfig kv() const {
    return config_path.empty() ? KeyValueConfig{}
                               : KeyValueConfig::from_file(config_path);
  }
};

int cmd_gen_synthetic(const std::string& out, int sentences, const CommonArgs& common) {
  if (sentences < 1) throw UsageError("--sentences must be >= 1");
  const KeyValueConfig kv = common.kv();
  const auto cfg = synthetic_config(kv);
  const auto inventory = corpus::PhonemeInventory::default_arpabet();
  std::cout << "generating " << sentences << " sentences x " << cfg.n_subjects
            << " subjects (seed " << common.seed << ")\n";
  auto corpus_data =
      corpus::generate_synthetic_corpus(sentences, inventory, common.seed, cfg);
  fs::create_directories(out);
  corpus::write_synthetic_corpus(out, corpus_data);
  const std::string chash = corpus::corpus_hash(out);
  write_manifest(out, "gen-synthetic",
                 json{{"sentences", sentences},
                      {"n_subjects", cfg.n_subjects},
                      {"frame_rate", cfg.frame_rate},
                      {"min_phones", cfg.min_phones},
                      {"max_phones", cfg.max_phones},
                      {"min_dur", cfg.min_dur},
                      {"max_dur", cfg.max_dur},
                      {"sil_min", cfg.sil_min},
                      {"sil_max", cfg.sil_max}},
                 json::object(), json{{"corpus", out}}, common.seed,
                 json{{"corpus", chash}});
  std::cout << "corpus written to " << out << " (hash " << chash.substr(0, 12)
            << "...)\n";
  return kExitOk;
}

int cmd_train(const std::string& variant, const std::string& corpus_dir,
              const std::string& subject, const std::string& out,
              const std::string& cvae_ckpt, const CommonArgs& common) {
  if (variant == "s2s-v" && cvae_ckpt.empty())
    throw UsageError("--variant s2s-v requires --cvae-ckpt (train a cvae first)");
  const KeyValueConfig kv = common.kv();
  const std::uint64_t split_seed = kv.get<std::uint64_t>("split_seed", 0);

  const auto inventory = corpus::PhonemeInventory::default_arpabet();
  corpus::LoadedCorpus corpus_data = corpus::load_corpus(corpus_dir, inventory);
  if (std::find(corpus_data.subjects.begin(), corpus_data.subjects.end(), subject) ==
      corpus_data.subjects.end())
    throw UsageError("subject " + subject + " not present in corpus");
  const auto split = corpus::make_splits(corpus_data.sentences, split_seed);
  const train::SubjectData data = train::partition(corpus_data, split, subject);
  const std::string chash = corpus::corpus_hash(corpus_dir);

  fs::create_directories(out);
  const fs::path ckpt_path = fs::path(out) / (variant + "_" + subject + ".ckpt");
  const fs::path log_path = fs::path(out) / "train_log.jsonl";
  train::JsonlLogger logger(log_path);
  train::TrainConfig tc = train_config(kv, common.seed);

  json config_json{{"variant", variant}, {"split_seed", split_seed}, {"train", tc}};
  json inputs{{"corpus", corpus_dir}};
  train::TrainReport report;

  if (variant == "cvae") {
    std::vector<const corpus::Utterance*> pool = data.train;
    pool.insert(pool.end(), data.val.begin(), data.val.end());
    auto cfg = cvae_config(kv, inventory.size());
    Rng rng = Rng::keyed(common.seed, Rng::hash_tag("model-init"));
    model::CVAE cvae(cfg, rng);
    report = train::train_cvae(cvae, pool, tc, &logger);
    train::save_cvae_checkpoint(ckpt_path, cvae, subject, chash, tc);
    config_json["cvae"] = cfg;
  } else if (variant == "s2s" || variant == "s2s-v") {
    auto ec = encoder_config(kv, inventory.size());
    auto dc = decoder_config(kv, ec.model_dim);
    std::optional<model::CVAEConfig> cc;
    std::unique_ptr<model::CVAE> prior;
    if (variant == "s2s-v") {
      model::CheckpointMeta cvae_meta;
      prior = train::load_cvae_checkpoint(cvae_ckpt, &cvae_meta);
      if (cvae_meta.subject != subject)
        throw UsageError("CVAE checkpoint subject (" + cvae_meta.subject +
                         ") does not match --subject " + subject);
      cc = prior->config();
      inputs["cvae_ckpt"] = cvae_ckpt;
    }
    auto bundle = train::S2SBundle::fresh(variant, ec, dc, cc, common.seed);
    if (prior) {
      // carry the pretrained prior inside the bundle's checkpoint
      model::restore_state({{"cvae", bundle.cvae.get()}},
                           model::snapshot_state({{"cvae", prior.get()}}));
    }
    report = train::train_s2s(*bundle.encoder, *bundle.decoder, bundle.cvae.get(),
                              data, tc, &logger);
    bundle.save(ckpt_path, subject, chash, tc);
    config_json["encoder"] = ec;
    config_json["decoder"] = bundle.decoder->config();
    if (cc) config_json["cvae"] = *cc;
  } else if (variant == "segnet") {
    auto cfg = segnet_config(kv, common.seed);
    std::map<std::string, std::vector<const corpus::Utterance*>> per_subject;
    for (const auto& id : corpus_data.subjects) {
      auto sd = train::partition(corpus_data, split, id);
      auto& utts = per_subject[id];
      utts = sd.train;
      utts.insert(utts.end(), sd.val.begin(), sd.val.end());
    }
    // The pooled phase depends only on (corpus, config, split); cache it so
    // fine-tuning further subjects skips the expensive part.
    fs::path pooled_cache;
    if (kv.get("use_cache", true)) {
      nlohmann::json key{{"corpus", chash}, {"segnet", cfg}, {"split_seed", split_seed}};
      pooled_cache = cache_dir() /
                     ("segnet_pooled_" + sha256_hex(key.dump()).substr(0, 16) + ".ckpt");
    }
    auto result =
        eval::train_segnet(per_subject, subject, cfg, &logger, pooled_cache, chash);
    eval::save_segnet_checkpoint(ckpt_path, *result.net, subject, chash, cfg);
    report = result.finetune_report;
    config_json["segnet"] = cfg;
  } else {
    throw UsageError("unknown --variant " + variant);
  }

  write_manifest(out, "train", config_json, inputs,
                 json{{"checkpoint", ckpt_path.string()}, {"log", log_path.string()}},
                 common.seed,
                 json{{"checkpoint", sha256_file_hex(ckpt_path)}, {"corpus", chash}});
  std::cout << "trained " << variant << " for " << subject << ": "
            << report.epochs.size() << " epochs";
  if (report.best_epoch > 0) std::cout << ", best epoch " << report.best_epoch;
  std::cout << ", checkpoint " << ckpt_path.string() << "\n";
  return kExitOk;
}

int cmd_synthesize(const std::string& ckpt, const std::string& alignment,
                   const std::string& out, const std::string& export_format,
                   bool seed_given, const CommonArgs& common) {
  const KeyValueConfig kv = common.kv();
  const double frame_rate = kv.get("frame_rate", corpus::kDefaultFrameRate);
  auto bundle = train::S2SBundle::load(ckpt);
  if (bundle.variant == "s2s" && seed_given)
    std::cerr << "warning: --seed has no effect on an s2s checkpoint "
                 "(deterministic variant)\n";
  const auto inventory = corpus::PhonemeInventory::default_arpabet();
  corpus::ParsedAlignment parsed = corpus::parse_alignment_file(alignment);
  const double total = parsed.records.back().end;
  const int n_frames = std::max(1, static_cast<int>(std::floor(total * frame_rate)));
  const auto ids =
      corpus::align_phonemes_to_frames(parsed.records, n_frames, frame_rate, inventory);
  std::cout << "synthesizing " << n_frames << " frames (" << total << "s at "
            << frame_rate << " fps) from " << parsed.utt_id << "\n";
  corpus::VideoTensor video = bundle.synthesize_video(ids, common.seed, frame_rate);

  fs::create_directories(fs::path(out) / "frames");
  Sha256 frames_hash;
  for (int i = 0; i < video.frames(); ++i) {
    Tensor frame({3, corpus::kImageSize, corpus::kImageSize});
    std::copy_n(video.data.data() + static_cast<std::int64_t>(i) * frame.numel(),
                frame.numel(), frame.data());
    const fs::path p = fs::path(out) / "frames" / corpus::detail::frame_name("frame", i);
    corpus::write_png(p, corpus::tensor_to_frame(frame));
    frames_hash.update(sha256_file_hex(p));
  }
  json outputs{{"frames_dir", (fs::path(out) / "frames").string()},
               {"n_frames", video.frames()}};
  if (export_format == "mp4") {
    const std::string encoder = kv.get_str("mp4_encoder", "ffmpeg");
    const fs::path mp4 = fs::path(out) / "video.mp4";
    std::ostringstream cmd;
    cmd << encoder << " -y -loglevel error -framerate " << frame_rate << " -i '"
        << (fs::path(out) / "frames" / "frame_%05d.png").string()
        << "' -pix_fmt yuv420p '" << mp4.string() << "'";
    if (std::system(cmd.str().c_str()) != 0)
      throw Error("mp4 export failed: external encoder '" + encoder +
                  "' unavailable or returned an error (PNG frames were written)");
    outputs["mp4"] = mp4.string();
  }
  write_manifest(out, "synthesize",
                 json{{"frame_rate", frame_rate},
                      {"export", export_format},
                      {"variant", bundle.variant}},
                 json{{"checkpoint", ckpt}, {"alignment", alignment}}, outputs,
                 common.seed, json{{"frames", frames_hash.hex()}});
  std::cout << "wrote " << video.frames() << " frames to " << out << "/frames\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& segnet_ckpt, const std::string& model_ckpt,
                 const std::string& corpus_dir, const std::string& split_name,
                 const std::string& out_csv, const CommonArgs& common) {
  model::CheckpointMeta seg_meta, model_meta;
  auto segnet = eval::load_segnet_checkpoint(segnet_ckpt, &seg_meta);
  auto bundle = train::S2SBundle::load(model_ckpt, &model_meta);
  if (seg_meta.subject != model_meta.subject)
    throw UsageError("checkpoint subject mismatch: segnet is " + seg_meta.subject +
                     ", model is " + model_meta.subject);
  const std::string subject = model_meta.subject;

  const auto inventory = corpus::PhonemeInventory::default_arpabet();
  corpus::LoadedCorpus corpus_data = corpus::load_corpus(corpus_dir, inventory);
  const std::string chash = corpus::corpus_hash(corpus_dir);
  if (chash != model_meta.corpus_hash)
    std::cerr << "warning: corpus hash differs from the one the model was "
                 "trained on\n";
  const std::uint64_t split_seed =
      model_meta.configs.value("split_seed", std::uint64_t{0});
  const auto split = corpus::make_splits(corpus_data.sentences, split_seed);
  const train::SubjectData data = train::partition(corpus_data, split, subject);
  const auto& utts = split_name == "train" ? data.train
                     : split_name == "val" ? data.val
                                           : data.test;
  if (utts.empty()) throw Error("split '" + split_name + "' is empty");

  std::cout << "evaluating " << bundle.variant << " for " << subject << " on "
            << utts.size() << " " << split_name << " utterances\n";
  eval::DiceReport report =
      eval::evaluate_model(*segnet, bundle, utts, subject, common.seed);
  if (fs::path(out_csv).has_parent_path())
    fs::create_directories(fs::path(out_csv).parent_path());
  eval::write_dice_csv(out_csv, report.rows);
  for (const auto& row : report.rows)
    std::cout << "  " << row.mask << ": mean " << row.mean << " (std " << row.stddev
              << ", n=" << row.n_utterances << ")\n";
  const fs::path out_dir = fs::path(out_csv).has_parent_path()
                               ? fs::path(out_csv).parent_path()
                               : fs::path(".");
  write_manifest(out_dir, "evaluate",
                 json{{"split", split_name}, {"split_seed", split_seed}},
                 json{{"segnet_ckpt", segnet_ckpt},
                      {"model_ckpt", model_ckpt},
                      {"corpus", corpus_dir}},
                 json{{"report", out_csv}}, common.seed,
                 json{{"report", sha256_file_hex(out_csv)}, {"corpus", chash}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"articulatory video synthesis toolkit"};
  app.require_subcommand(1);
  CommonArgs common;

  auto* gen = app.add_subcommand(
      "gen-synthetic",
      "generate a procedural synthetic corpus with ground-truth ATB masks");
  std::string gen_out;
  int gen_sentences = 50;
  gen->add_option("--out", gen_out, "output corpus directory")->required();
  gen->add_option("--sentences", gen_sentences, "number of sentences");
  gen->add_option("--seed", common.seed, "random seed");
  gen->add_option("--config", common.config_path, "key = value config file");

  auto* tr = app.add_subcommand("train", "train cvae / s2s / s2s-v / segnet");
  std::string tr_variant, tr_corpus, tr_subject, tr_out, tr_cvae_ckpt;
  tr->add_option("--variant", tr_variant, "cvae | s2s | s2s-v | segnet")
      ->required()
      ->check(CLI::IsMember({"cvae", "s2s", "s2s-v", "segnet"}));
  tr->add_option("--corpus", tr_corpus, "corpus directory")->required();
  tr->add_option("--subject", tr_subject, "subject id")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--cvae-ckpt", tr_cvae_ckpt, "pretrained CVAE (s2s-v only)");
  tr->add_option("--seed", common.seed, "random seed");
  tr->add_option("--config", common.config_path, "key = value config file");

  auto* sy =
      app.add_subcommand("synthesize", "synthesize video frames from an alignment file");
  std::string sy_ckpt, sy_alignment, sy_out, sy_export = "png";
  sy->add_option("--ckpt", sy_ckpt, "s2s / s2s-v checkpoint")->required();
  sy->add_option("--alignment", sy_alignment, "alignment .tsv file")->required();
  sy->add_option("--out", sy_out, "output directory")->required();
  auto* seed_opt = sy->add_option("--seed", common.seed, "sampling seed (s2s-v)");
  sy->add_option("--export", sy_export, "png | mp4")
      ->check(CLI::IsMember({"png", "mp4"}));
  sy->add_option("--config", common.config_path, "key = value config file");

  auto* ev = app.add_subcommand("evaluate", "dice-score a model against a split");
  std::string ev_segnet, ev_model, ev_corpus, ev_split = "test", ev_out;
  ev->add_option("--segnet-ckpt", ev_segnet, "segmentation checkpoint")->required();
  ev->add_option("--model-ckpt", ev_model, "s2s / s2s-v checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--split", ev_split, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--out", ev_out, "output CSV path")->required();
  ev->add_option("--seed", common.seed, "sampling seed (s2s-v)");
  ev->add_option("--config", common.config_path, "key = value config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(gen_out, gen_sentences, common);
    if (tr->parsed())
      return cmd_train(tr_variant, tr_corpus, tr_subject, tr_out, tr_cvae_ckpt, common);
    if (sy->parsed())
      return cmd_synthesize(sy_ckpt, sy_alignment, sy_out, sy_export,
                            seed_opt->count() > 0, common);
    if (ev->parsed())
      return cmd_evaluate(ev_segnet, ev_model, ev_corpus, ev_split, ev_out, common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
