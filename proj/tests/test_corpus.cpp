#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "artic/corpus/corpus.hpp"

using namespace artic;
using namespace artic::corpus;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() /
                 ("artic_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(make_temp_dir(tag)) {}
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("inventory: fixed special indices, bijective lookup") {
  auto inv = PhonemeInventory::default_arpabet();
  REQUIRE(inv.size() == 41);
  REQUIRE(inv.id_of("<pad>") == PhonemeInventory::kPadId);
  REQUIRE(inv.id_of("sil") == PhonemeInventory::kSilenceId);
  for (int i = 0; i < inv.size(); ++i) REQUIRE(inv.id_of(inv.symbol(i)) == i);
  REQUIRE_THROWS_WITH(inv.id_of("qq"), Catch::Matchers::ContainsSubstring("qq"));
}

TEST_CASE("align: single interval covers all midpoints") {
  auto inv = PhonemeInventory::default_arpabet();
  auto ids = align_phonemes_to_frames({{"sil", 0.0, 10.0}}, 4, 23.18, inv);
  REQUIRE(ids == std::vector<int>(4, inv.id_of("sil")));
}

TEST_CASE("align: midpoint rule against hand-computed bounds") {
  auto inv = PhonemeInventory::default_arpabet();
  // midpoints 0.0216, 0.0647, 0.1079, 0.1510
  auto ids = align_phonemes_to_frames({{"sil", 0.0, 0.05}, {"aa", 0.05, 0.20}}, 4,
                                      23.18, inv);
  const int sil = inv.id_of("sil"), aa = inv.id_of("aa");
  REQUIRE(ids == std::vector<int>({sil, aa, aa, aa}));
}

TEST_CASE("align: midpoints past the last record fall back to it") {
  auto inv = PhonemeInventory::default_arpabet();
  // last midpoint 29.5/23.18 = 1.2726 > 1.0
  auto ids = align_phonemes_to_frames({{"aa", 0.0, 1.0}}, 30, 23.18, inv);
  REQUIRE(ids == std::vector<int>(30, inv.id_of("aa")));
}

TEST_CASE("align: error cases") {
  auto inv = PhonemeInventory::default_arpabet();
  REQUIRE_THROWS(align_phonemes_to_frames({}, 4, 23.18, inv));
  REQUIRE_THROWS_WITH(align_phonemes_to_frames({{"zz", 0.0, 1.0}}, 1, 23.18, inv),
                      Catch::Matchers::ContainsSubstring("zz"));
  REQUIRE_THROWS(align_phonemes_to_frames({{"aa", 0.0, 0.4}, {"ae", 0.5, 1.0}}, 2,
                                          23.18, inv));  // gap
}

TEST_CASE("align property: output length equals n_frames for random interval lists") {
  auto inv = PhonemeInventory::default_arpabet();
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AlignmentRecord> records;
    double t = 0;
    const int k = 1 + rng.uniform_int(12);
    for (int i = 0; i < k; ++i) {
      const double d = rng.uniform(0.02, 0.4);
      records.push_back({inv.symbol(1 + rng.uniform_int(inv.size() - 1)), t, t + d});
      t += d;
    }
    const int n_frames = 1 + rng.uniform_int(120);
    auto ids = align_phonemes_to_frames(records, n_frames, 23.18, inv);
    REQUIRE(static_cast<int>(ids.size()) == n_frames);
    for (int id : ids) {
      REQUIRE(id >= 1);
      REQUIRE(id < inv.size());
    }
  }
}

TEST_CASE("load_utterance: resize, normalization extremes, masks ignored when absent") {
  auto inv = PhonemeInventory::default_arpabet();
  TempDir tmp("load");
  const fs::path frames = tmp.path / "frames";
  fs::create_directories(frames);
  // 68x68x3 frames per the source geometry: one all-black, one all-white.
  for (int i = 0; i < 2; ++i) {
    ImageU8 img;
    img.width = img.height = 68;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(68) * 68 * 3, i == 0 ? 0 : 255);
    write_png(frames / detail::frame_name("frame", i), img);
  }
  write_alignment_file(tmp.path / "a.tsv", "u1", {{"aa", 0.0, 1.0}});
  Utterance u = load_utterance(tmp.path / "a.tsv", frames, 23.18, inv, "S1");
  REQUIRE(u.frames() == 2);
  REQUIRE(u.video.data.shape() == std::vector<int>({2, 3, 64, 64}));
  REQUIRE(u.phoneme_ids == std::vector<int>(2, inv.id_of("aa")));
  for (std::int64_t i = 0; i < u.video.data.numel() / 2; ++i)
    REQUIRE(u.video.data[i] == 0.0);
  for (std::int64_t i = u.video.data.numel() / 2; i < u.video.data.numel(); ++i)
    REQUIRE(u.video.data[i] == 1.0);
  REQUIRE_FALSE(u.gt_masks.has_value());
}

TEST_CASE("load_utterance: empty frame dir and corrupt image errors") {
  auto inv = PhonemeInventory::default_arpabet();
  TempDir tmp("err");
  const fs::path frames = tmp.path / "frames";
  fs::create_directories(frames);
  write_alignment_file(tmp.path / "a.tsv", "u1", {{"aa", 0.0, 1.0}});
  REQUIRE_THROWS_AS(load_utterance(tmp.path / "a.tsv", frames, 23.18, inv), IoError);
  {
    std::ofstream bad(frames / "frame_00000.png");
    bad << "not a png";
  }
  REQUIRE_THROWS_WITH(load_utterance(tmp.path / "a.tsv", frames, 23.18, inv),
                      Catch::Matchers::ContainsSubstring("frame_00000.png"));
}

TEST_CASE("splits: exact fractions, determinism, partition") {
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("s" + std::to_string(i));
  auto sp = make_splits(ten, 0);
  REQUIRE(sp.train.size() == 8);
  REQUIRE(sp.val.size() == 1);
  REQUIRE(sp.test.size() == 1);
  auto sp2 = make_splits(ten, 0);
  REQUIRE(sp.train == sp2.train);
  REQUIRE(sp.val == sp2.val);
  REQUIRE(sp.test == sp2.test);

  std::vector<std::string> many;
  for (int i = 0; i < 460; ++i) many.push_back("s" + std::to_string(i));
  auto big = make_splits(many, 7);
  REQUIRE(big.train.size() == 368);
  REQUIRE(big.val.size() == 46);
  REQUIRE(big.test.size() == 46);
  std::set<std::string> all;
  for (const auto& v : {big.train, big.val, big.test})
    for (const auto& s : v) REQUIRE(all.insert(s).second);  // pairwise disjoint
  REQUIRE(all.size() == 460);                               // covers everything

  REQUIRE_THROWS(make_splits({"a", "b", "c"}, 0));
}

TEST_CASE("synthetic: determinism, interior-frame identity, mask structure") {
  auto inv = PhonemeInventory::default_arpabet();
  SyntheticConfig cfg;
  cfg.n_subjects = 1;
  auto c1 = generate_synthetic_corpus(3, inv, 11, cfg);
  auto c2 = generate_synthetic_corpus(3, inv, 11, cfg);
  REQUIRE(c1.utterances[0].size() == 3);
  for (int s = 0; s < 3; ++s) {
    const auto& a = c1.utterances[0][static_cast<std::size_t>(s)].utt.video.data;
    const auto& b = c2.utterances[0][static_cast<std::size_t>(s)].utt.video.data;
    REQUIRE(a.numel() == b.numel());
    for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }

  // Frames strictly inside a phoneme run render identically.
  const auto& utt = c1.utterances[0][0].utt;
  const auto& ids = utt.phoneme_ids;
  const std::int64_t fsz = static_cast<std::int64_t>(3) * 64 * 64;
  bool found = false;
  for (std::size_t i = 2; i + 2 < ids.size() && !found; ++i) {
    if (ids[i - 2] == ids[i] && ids[i - 1] == ids[i] && ids[i + 1] == ids[i] &&
        ids[i + 2] == ids[i]) {
      const real* fa = utt.video.data.data() + static_cast<std::int64_t>(i - 1) * fsz;
      const real* fb = utt.video.data.data() + static_cast<std::int64_t>(i) * fsz;
      for (std::int64_t k = 0; k < fsz; ++k) REQUIRE(fa[k] == fb[k]);
      found = true;
    }
  }
  REQUIRE(found);

  // Masks: per frame, non-empty and pairwise disjoint.
  const auto& m = *utt.gt_masks;
  const std::int64_t msz = 64 * 64;
  for (int f = 0; f < utt.frames(); ++f) {
    std::int64_t n1 = 0, n2 = 0, n3 = 0;
    for (std::int64_t k = 0; k < msz; ++k) {
      const real v1 = m.mask1[f * msz + k], v2 = m.mask2[f * msz + k],
                 v3 = m.mask3[f * msz + k];
      n1 += v1 > 0;
      n2 += v2 > 0;
      n3 += v3 > 0;
      REQUIRE(v1 + v2 + v3 <= 1.0);  // disjoint
    }
    REQUIRE(n1 > 0);
    REQUIRE(n2 > 0);
    REQUIRE(n3 > 0);
  }
}

TEST_CASE("synthetic round trip: re-aligning emitted records reproduces ids") {
  auto inv = PhonemeInventory::default_arpabet();
  SyntheticConfig cfg;
  cfg.n_subjects = 2;
  auto c = generate_synthetic_corpus(4, inv, 3, cfg);
  for (const auto& per_subject : c.utterances)
    for (const auto& su : per_subject) {
      auto ids = align_phonemes_to_frames(su.records, su.utt.frames(),
                                          cfg.frame_rate, inv);
      REQUIRE(ids == su.utt.phoneme_ids);
    }
}

TEST_CASE("corpus disk round trip preserves structure and quantized pixels") {
  auto inv = PhonemeInventory::default_arpabet();
  SyntheticConfig cfg;
  cfg.n_subjects = 2;
  auto c = generate_synthetic_corpus(2, inv, 5, cfg);
  TempDir tmp("corpus");
  write_synthetic_corpus(tmp.path, c);
  LoadedCorpus loaded = load_corpus(tmp.path, inv);
  REQUIRE(loaded.subjects == std::vector<std::string>({"SYN1", "SYN2"}));
  REQUIRE(loaded.sentences.size() == 2);
  const auto& orig = c.utterances[0][0].utt;
  const Utterance* got = nullptr;
  for (const auto& u : loaded.subject("SYN1"))
    if (u.utt_id == orig.utt_id) got = &u;
  REQUIRE(got != nullptr);
  REQUIRE(got->phoneme_ids == orig.phoneme_ids);
  REQUIRE(got->gt_masks.has_value());
  for (std::int64_t i = 0; i < orig.video.data.numel(); ++i)
    REQUIRE(std::abs(got->video.data[i] - orig.video.data[i]) <= 0.5 / 255 + 1e-9);
  for (std::int64_t i = 0; i < orig.gt_masks->mask2.numel(); ++i)
    REQUIRE(got->gt_masks->mask2[i] == orig.gt_masks->mask2[i]);

  // Deterministic writer: same corpus written twice gives identical bytes.
  TempDir tmp2("corpus2");
  write_synthetic_corpus(tmp2.path, c);
  const fs::path f1 = tmp.path / "SYN1" / "s0000" / "frames" / "frame_00000.png";
  const fs::path f2 = tmp2.path / "SYN1" / "s0000" / "frames" / "frame_00000.png";
  std::ifstream a(f1, std::ios::binary), b(f2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  REQUIRE(sa == sb);
  REQUIRE(corpus_hash(tmp.path) == corpus_hash(tmp2.path));
}
