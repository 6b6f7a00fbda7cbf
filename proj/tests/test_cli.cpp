#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "artic/corpus/corpus.hpp"
#include "artic/eval/atb.hpp"
#include "artic/train/trainer.hpp"

using namespace artic;
namespace fs = std::filesystem;

namespace {

#ifndef ARTIC_CLI_PATH
#error "ARTIC_CLI_PATH must be defined by the build"
#endif

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(ARTIC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) result.output += buf;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("artic_cli_" + tag + "_" +
                                          std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_tiny_config(const fs::path& p) {
  std::ofstream out(p);
  out << "enc_layers = 1\nenc_dim = 64\nenc_heads = 2\nenc_ff = 32\n"
      << "dec_res1 = 4\ndec_res2 = 4\ndec_tconv1 = 4\ndec_tconv2 = 4\n"
      << "cvae_latent = 8\ncvae_cfeature = 4\ncvae_hidden = 16\n"
      << "max_epochs = 2\ncvae_batch = 32\n"
      << "seg_channels = 4,4,4,4\nseg_pooled_epochs = 1\nseg_finetune_epochs = 1\n"
      << "n_subjects = 1\nmin_phones = 2\nmax_phones = 3\n"
      << "min_dur = 0.09\nmax_dur = 0.13\nsil_min = 0.08\nsil_max = 0.12\n";
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  TempDir tmp("usage");
  auto r1 = run_cli("gen-synthetic --sentences 0 --out " + quoted(tmp.path / "c"));
  REQUIRE(r1.exit_code == 2);
  auto r2 = run_cli("train --variant s2s-v --corpus x --subject S --out y");
  REQUIRE(r2.exit_code == 2);
  REQUIRE_THAT(r2.output, Catch::Matchers::ContainsSubstring("cvae-ckpt"));
  auto r3 = run_cli("no-such-command");
  REQUIRE(r3.exit_code == 2);
  auto r4 = run_cli("--help");
  REQUIRE(r4.exit_code == 0);
}

TEST_CASE("gen-synthetic is byte-deterministic for a fixed seed") {
  TempDir tmp("det");
  const fs::path cfg = tmp.path / "cfg.txt";
  write_tiny_config(cfg);
  auto r1 = run_cli("gen-synthetic --out " + quoted(tmp.path / "c1") +
                    " --sentences 10 --seed 4 --config " + quoted(cfg));
  REQUIRE(r1.exit_code == 0);
  auto r2 = run_cli("gen-synthetic --out " + quoted(tmp.path / "c2") +
                    " --sentences 10 --seed 4 --config " + quoted(cfg));
  REQUIRE(r2.exit_code == 0);
  REQUIRE(corpus::corpus_hash(tmp.path / "c1") == corpus::corpus_hash(tmp.path / "c2"));
  const fs::path rel = fs::path("SYN1") / "s0002" / "frames" / "frame_00003.png";
  REQUIRE(sha256_file_hex(tmp.path / "c1" / rel) ==
          sha256_file_hex(tmp.path / "c2" / rel));
  // default config honors the source frame rate
  auto manifest = corpus::read_json_file(tmp.path / "c1" / "manifest.json");
  REQUIRE(manifest.at("config").at("frame_rate").get<double>() == 23.18);
}

TEST_CASE("full workflow: train, synthesize with frame-count rule, evaluate") {
  TempDir tmp("flow");
  const fs::path cfg = tmp.path / "cfg.txt";
  write_tiny_config(cfg);
  const fs::path corpus_dir = tmp.path / "corpus";
  REQUIRE(run_cli("gen-synthetic --out " + quoted(corpus_dir) +
                  " --sentences 10 --seed 1 --config " + quoted(cfg))
              .exit_code == 0);

  // cvae default epoch count comes from the trainer default (5)
  auto rc = run_cli("train --variant cvae --corpus " + quoted(corpus_dir) +
                    " --subject SYN1 --out " + quoted(tmp.path / "cvae") +
                    " --config " + quoted(cfg));
  REQUIRE(rc.exit_code == 0);
  {
    std::ifstream log(tmp.path / "cvae" / "train_log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);)
      if (!line.empty()) ++lines;
    REQUIRE(lines == 5);
  }

  auto rs = run_cli("train --variant s2s --corpus " + quoted(corpus_dir) +
                    " --subject SYN1 --out " + quoted(tmp.path / "s2s") +
                    " --config " + quoted(cfg));
  REQUIRE(rs.exit_code == 0);
  const fs::path model_ckpt = tmp.path / "s2s" / "s2s_SYN1.ckpt";
  REQUIRE(fs::exists(model_ckpt));

  // 2-second alignment at 23.18 fps -> floor(46.36) = 46 frames
  const fs::path alignment = tmp.path / "two_seconds.tsv";
  corpus::write_alignment_file(alignment, "u1",
                               {{"sil", 0.0, 0.3}, {"aa", 0.3, 1.2}, {"m", 1.2, 2.0}});
  auto rsyn = run_cli("synthesize --ckpt " + quoted(model_ckpt) + " --alignment " +
                      quoted(alignment) + " --out " + quoted(tmp.path / "synth"));
  REQUIRE(rsyn.exit_code == 0);
  REQUIRE(corpus::list_frame_files(tmp.path / "synth" / "frames").size() == 46);

  // --seed on an s2s checkpoint warns and has no effect
  auto rwarn = run_cli("synthesize --ckpt " + quoted(model_ckpt) + " --alignment " +
                       quoted(alignment) + " --out " + quoted(tmp.path / "synth2") +
                       " --seed 9");
  REQUIRE(rwarn.exit_code == 0);
  REQUIRE_THAT(rwarn.output, Catch::Matchers::ContainsSubstring("no effect"));
  REQUIRE(sha256_file_hex(tmp.path / "synth" / "frames" / "frame_00000.png") ==
          sha256_file_hex(tmp.path / "synth2" / "frames" / "frame_00000.png"));

  // PNG round trip: frames reload to within 8-bit quantization of the tensor
  {
    auto bundle = train::S2SBundle::load(model_ckpt);
    auto inventory = corpus::PhonemeInventory::default_arpabet();
    auto parsed = corpus::parse_alignment_file(alignment);
    auto ids = corpus::align_phonemes_to_frames(parsed.records, 46, 23.18, inventory);
    auto video = bundle.synthesize_video(ids, 0);
    for (int i : {0, 20, 45}) {
      corpus::ImageU8 img =
          corpus::read_png(tmp.path / "synth" / "frames" /
                           corpus::detail::frame_name("frame", i));
      Tensor back = corpus::frame_to_tensor(img);
      for (std::int64_t k = 0; k < back.numel(); ++k) {
        const real orig = video.data[static_cast<std::int64_t>(i) * back.numel() + k];
        REQUIRE(std::abs(back[k] - orig) <= 0.5 / 255 + 1e-9);
      }
    }
  }

  // unknown phoneme in the alignment names the symbol, runtime exit 1
  const fs::path bad = tmp.path / "bad.tsv";
  corpus::write_alignment_file(bad, "u2", {{"qx", 0.0, 1.0}});
  auto rbad = run_cli("synthesize --ckpt " + quoted(model_ckpt) + " --alignment " +
                      quoted(bad) + " --out " + quoted(tmp.path / "synth3"));
  REQUIRE(rbad.exit_code == 1);
  REQUIRE_THAT(rbad.output, Catch::Matchers::ContainsSubstring("qx"));

  // evaluate: subject mismatch between checkpoints is a usage error
  {
    model::SegNetConfig scfg;
    scfg.enc_channels = {4, 4, 4, 4};
    Rng rng(3);
    model::SegNet net(scfg, rng);
    eval::SegTrainConfig stc;
    stc.net = scfg;
    eval::save_segnet_checkpoint(tmp.path / "seg_other.ckpt", net, "SYN9", "h", stc);
  }
  auto rmis = run_cli("evaluate --segnet-ckpt " + quoted(tmp.path / "seg_other.ckpt") +
                      " --model-ckpt " + quoted(model_ckpt) + " --corpus " +
                      quoted(corpus_dir) + " --split test --out " +
                      quoted(tmp.path / "r.csv"));
  REQUIRE(rmis.exit_code == 2);
  REQUIRE_THAT(rmis.output, Catch::Matchers::ContainsSubstring("mismatch"));

  // train + evaluate against a real segnet: report rows and ranges
  auto rseg = run_cli("train --variant segnet --corpus " + quoted(corpus_dir) +
                      " --subject SYN1 --out " + quoted(tmp.path / "seg") +
                      " --config " + quoted(cfg));
  REQUIRE(rseg.exit_code == 0);
  auto rev = run_cli("evaluate --segnet-ckpt " +
                     quoted(tmp.path / "seg" / "segnet_SYN1.ckpt") + " --model-ckpt " +
                     quoted(model_ckpt) + " --corpus " + quoted(corpus_dir) +
                     " --split test --out " + quoted(tmp.path / "report.csv"));
  REQUIRE(rev.exit_code == 0);
  std::ifstream csv(tmp.path / "report.csv");
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "subject,variant,mask,mean,std,n_utterances");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) {
    if (line.empty()) continue;
    ++rows;
    const auto last_comma = line.rfind(',');
    const auto mean_start = line.find(',', line.find("mask")) + 1;
    const double mean = std::stod(line.substr(mean_start));
    REQUIRE(mean >= 0.0);
    REQUIRE(mean <= 1.0);
    (void)last_comma;
  }
  REQUIRE(rows == 3);
}
