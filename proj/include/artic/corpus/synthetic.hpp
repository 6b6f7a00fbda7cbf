#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "artic/corpus/splits.hpp"
#include "artic/corpus/utterance.hpp"

namespace artic::corpus {

/// Deterministic articulator configuration for one phoneme: three tongue
/// control heights, velum aperture and lip opening, each in [0,1].
struct ArticulatorParams {
  std::array<real, 5> p{};

  real tongue_front() const { return p[0]; }
  real tongue_mid() const { return p[1]; }
  real tongue_back() const { return p[2]; }
  real velum() const { return p[3]; }
  real lips() const { return p[4]; }
};

/// Per-subject rendering style: integer vertical shift and intensity gain.
struct SubjectStyle {
  int dy = 0;
  real gain = 1.0;
};

/// Phoneme id -> articulator configuration via a Kronecker low-discrepancy
/// sequence, so distinct ids land on well-separated configurations. Fixed for
/// a given inventory, independent of the corpus seed.
inline ArticulatorParams phoneme_params(int phoneme_id) {
  // 1/phi^j for the positive root of x^6 = x + 1.
  static constexpr std::array<double, 5> kAlpha = {
      0.8812714616335695, 0.7766393890897682, 0.6844301295853426,
      0.6031687406857281, 0.5315553977157913};
  ArticulatorParams out;
  for (int j = 0; j < 5; ++j) {
    double v = 0.5 + (phoneme_id + 1) * kAlpha[static_cast<std::size_t>(j)];
    out.p[static_cast<std::size_t>(j)] = static_cast<real>(v - std::floor(v));
  }
  return out;
}

namespace geom {

// All curves in pixel coordinates of the 64x64 midsagittal cartoon:
// x grows rightward (lips -> pharynx), y grows downward (nasal -> jaw).

inline real palate_y(real x) {  // hard palate arch, x in [6, 45]
  return 22.0 - 6.0 * std::sin(3.14159265358979323846 * (x - 6.0) / 39.0);
}

inline real velum_y(real x, real aperture) {  // soft palate ramp, x in [46, 54]
  const real drop = 1.0 + 5.0 * aperture;
  return 22.0 + drop * (x - 46.0) / 8.0;
}

/// Upper airway boundary (palate then velum) over x in [6, 54].
inline real upper_y(real x, real aperture) {
  return x < 46.0 ? palate_y(x) : velum_y(x, aperture);
}

/// Tongue surface over x in [8, 44] from three control heights. Heights map
/// to 4..22 px above the y=46 base line, keeping >= 2 px of oral airway.
inline real tongue_y(real x, const ArticulatorParams& a) {
  const real h[3] = {4.0 + 18.0 * a.tongue_front(), 4.0 + 18.0 * a.tongue_mid(),
                     4.0 + 18.0 * a.tongue_back()};
  const real cx[3] = {10.0, 26.0, 42.0};
  real height;
  if (x <= cx[0]) height = h[0];
  else if (x >= cx[2]) height = h[2];
  else {
    const int seg = x < cx[1] ? 0 : 1;
    const real t = (x - cx[seg]) / (cx[seg + 1] - cx[seg]);
    const real s = 0.5 - 0.5 * std::cos(3.14159265358979323846 * t);
    height = h[seg] + (h[seg + 1] - h[seg]) * s;
  }
  return 46.0 - height;
}

inline real lip_gap(const ArticulatorParams& a) { return 1.0 + 6.0 * a.lips(); }

// Region x-extents. mask2's range ends before the velum starts so the two
// regions cannot meet even at maximum velum drop.
constexpr real kUpperX0 = 6, kUpperX1 = 54;
constexpr real kTongueX0 = 8, kTongueX1 = 44;
constexpr real kTongueFloor = 58;
constexpr real kPharynxX0 = 56, kPharynxX1 = 60;
constexpr real kPharynxY0 = 10, kPharynxY1 = 56;
constexpr real kMask1Top = 2;

}  // namespace geom

namespace detail {

inline real edge_ramp(real signed_dist) {  // ~1.5 px soft edge
  return std::clamp(signed_dist / real(1.5) + real(0.5), real(0), real(1));
}

inline real box(real v, real lo, real hi) {
  return (v >= lo && v <= hi) ? real(1) : real(0);
}

}  // namespace detail

/// Renders one frame plus its three analytic region masks.
/// frame: (3, 64, 64); masks: (64, 64) each, binary.
inline void render_frame(const ArticulatorParams& a, const SubjectStyle& style,
                         Tensor& frame, Tensor& mask1, Tensor& mask2,
                         Tensor& mask3) {
  using namespace geom;
  frame = Tensor({3, kImageSize, kImageSize});
  mask1 = Tensor({kImageSize, kImageSize});
  mask2 = Tensor({kImageSize, kImageSize});
  mask3 = Tensor({kImageSize, kImageSize});
  const real gap = lip_gap(a);
  for (int yi = 0; yi < kImageSize; ++yi) {
    for (int xi = 0; xi < kImageSize; ++xi) {
      const real x = static_cast<real>(xi);
      const real y = static_cast<real>(yi - style.dy);  // subject shift
      real b = 0.08;  // airway / background

      if (x >= kUpperX0 && x <= kUpperX1) {
        const real u = upper_y(x, a.velum());
        // palate/velum tissue band above the airway boundary
        b += 0.77 * detail::edge_ramp(u - y) * detail::edge_ramp(y - (u - 6.0));
      }
      if (x >= kTongueX0 && x <= kTongueX1) {
        const real ty = tongue_y(x, a);
        b += 0.72 * detail::edge_ramp(y - ty) * detail::edge_ramp(kTongueFloor - y);
      }
      if (x >= kPharynxX0 && x <= kPharynxX1)
        b += 0.67 * detail::edge_ramp(y - kPharynxY0) * detail::edge_ramp(kPharynxY1 - y);
      if (x >= 2 && x <= 7) {  // lips, visual only
        b += 0.74 * detail::edge_ramp(y - 24.0) * detail::edge_ramp(28.0 - y);
        b += 0.74 * detail::edge_ramp(y - (28.0 + gap)) *
             detail::edge_ramp(32.0 + gap - y);
      }
      if (x >= 6 && x <= 50)  // jaw line, static
        b += 0.70 * detail::edge_ramp(y - 59.0) * detail::edge_ramp(62.0 - y);

      const real v = std::clamp(b * style.gain, real(0), real(1));
      frame.at(0, yi, xi) = v;
      frame.at(1, yi, xi) = v;
      frame.at(2, yi, xi) = v;

      // Binary masks from the same geometry (hard thresholds).
      const real m1 = detail::box(x, kUpperX0, kUpperX1) *
                      ((y >= kMask1Top && y < upper_y(x, a.velum())) ? 1 : 0);
      const real m2 = detail::box(x, kTongueX0, kTongueX1) *
                      ((y >= tongue_y(x, a) && y <= kTongueFloor) ? 1 : 0);
      const real m3 = detail::box(x, kPharynxX0, kPharynxX1) *
                      detail::box(y, kPharynxY0, kPharynxY1);
      mask1.at(yi, xi) = m1;
      mask2.at(yi, xi) = m2;
      mask3.at(yi, xi) = m3;
    }
  }
}

struct SyntheticConfig {
  int n_subjects = 2;
  double frame_rate = kDefaultFrameRate;
  int min_phones = 4;
  int max_phones = 8;
  double min_dur = 0.09;
  double max_dur = 0.22;
  double sil_min = 0.10;
  double sil_max = 0.25;
};

struct SyntheticUtterance {
  Utterance utt;
  std::vector<AlignmentRecord> records;
};

struct SyntheticCorpus {
  SyntheticConfig config;
  std::vector<std::string> subjects;
  std::vector<std::string> sentences;
  std::vector<SubjectStyle> styles;
  // utterances[subject_index][sentence_index]
  std::vector<std::vector<SyntheticUtterance>> utterances;
};

inline SubjectStyle subject_style(std::uint64_t seed, int subject_index) {
  Rng rng = Rng::keyed(seed, Rng::hash_tag("subject-style") +
                                 static_cast<std::uint64_t>(subject_index));
  SubjectStyle s;
  s.dy = rng.uniform_int(5) - 2;
  s.gain = rng.uniform(0.88, 1.0);
  return s;
}

/// Per-frame articulator parameter track: the raw per-frame configuration
/// smoothed with a (0.25, 0.5, 0.25) kernel, which crossfades linearly over
/// the two frames adjacent to each phoneme boundary and leaves interior
/// frames untouched.
inline std::vector<ArticulatorParams> parameter_track(const std::vector<int>& ids) {
  const int n = static_cast<int>(ids.size());
  std::vector<ArticulatorParams> raw(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) raw[static_cast<std::size_t>(i)] = phoneme_params(ids[static_cast<std::size_t>(i)]);
  std::vector<ArticulatorParams> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& prev = raw[static_cast<std::size_t>(std::max(0, i - 1))];
    const auto& cur = raw[static_cast<std::size_t>(i)];
    const auto& next = raw[static_cast<std::size_t>(std::min(n - 1, i + 1))];
    for (std::size_t j = 0; j < 5; ++j)
      out[static_cast<std::size_t>(i)].p[j] =
          0.25 * prev.p[j] + 0.5 * cur.p[j] + 0.25 * next.p[j];
  }
  return out;
}

/// Renders a full utterance from frame-aligned phoneme ids.
inline void render_utterance(const std::vector<int>& ids, const SubjectStyle& style,
                             double frame_rate, Utterance& utt) {
  const int n = static_cast<int>(ids.size());
  const auto track = parameter_track(ids);
  utt.phoneme_ids = ids;
  utt.video.frame_rate = frame_rate;
  utt.video.data = Tensor({n, 3, kImageSize, kImageSize});
  ATBMaskSet masks;
  masks.mask1 = Tensor({n, kImageSize, kImageSize});
  masks.mask2 = Tensor({n, kImageSize, kImageSize});
  masks.mask3 = Tensor({n, kImageSize, kImageSize});
  const std::int64_t fsz = static_cast<std::int64_t>(3) * kImageSize * kImageSize;
  const std::int64_t msz = static_cast<std::int64_t>(kImageSize) * kImageSize;
  for (int i = 0; i < n; ++i) {
    Tensor frame, m1, m2, m3;
    render_frame(track[static_cast<std::size_t>(i)], style, frame, m1, m2, m3);
    std::copy_n(frame.data(), fsz, utt.video.data.data() + i * fsz);
    std::copy_n(m1.data(), msz, masks.mask1.data() + i * msz);
    std::copy_n(m2.data(), msz, masks.mask2.data() + i * msz);
    std::copy_n(m3.data(), msz, masks.mask3.data() + i * msz);
  }
  utt.gt_masks = std::move(masks);
}

/// Procedural stand-in corpus: shared sentences across subjects, per-subject
/// timing and rendering style, analytic ground-truth masks. Bit-identical for
/// a fixed seed.
inline SyntheticCorpus generate_synthetic_corpus(int n_sentences,
                                                 const PhonemeInventory& inventory,
                                                 std::uint64_t seed,
                                                 SyntheticConfig config = {}) {
  if (inventory.size() < 3)
    throw Error("synthetic corpus: inventory needs at least 3 non-padding symbols");
  if (n_sentences < 1) throw Error("synthetic corpus: n_sentences must be >= 1");
  if (config.n_subjects < 1) throw Error("synthetic corpus: need >= 1 subject");

  SyntheticCorpus corpus;
  corpus.config = config;

  // Sentence content is shared across subjects.
  std::vector<std::vector<int>> sentence_phones(static_cast<std::size_t>(n_sentences));
  for (int s = 0; s < n_sentences; ++s) {
    Rng rng = Rng::keyed(seed, Rng::hash_tag("sentence") + static_cast<std::uint64_t>(s));
    const int len =
        config.min_phones + rng.uniform_int(config.max_phones - config.min_phones + 1);
    auto& phones = sentence_phones[static_cast<std::size_t>(s)];
    for (int i = 0; i < len; ++i)
      phones.push_back(2 + rng.uniform_int(inventory.size() - 2));
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%04d", s);
    corpus.sentences.emplace_back(buf);
  }

  for (int subj = 0; subj < config.n_subjects; ++subj) {
    corpus.subjects.push_back("SYN" + std::to_string(subj + 1));
    corpus.styles.push_back(subject_style(seed, subj));
  }

  corpus.utterances.resize(static_cast<std::size_t>(config.n_subjects));
  for (int subj = 0; subj < config.n_subjects; ++subj) {
    auto& per_subject = corpus.utterances[static_cast<std::size_t>(subj)];
    per_subject.reserve(static_cast<std::size_t>(n_sentences));
    for (int s = 0; s < n_sentences; ++s) {
      Rng rng = Rng::keyed(seed, Rng::hash_tag("timing") +
                                     static_cast<std::uint64_t>(subj) * 1000003ull +
                                     static_cast<std::uint64_t>(s));
      SyntheticUtterance su;
      double t = 0;
      auto push = [&](const std::string& phoneme, double dur) {
        su.records.push_back({phoneme, t, t + dur});
        t += dur;
      };
      push("sil", rng.uniform(config.sil_min, config.sil_max));
      for (int id : sentence_phones[static_cast<std::size_t>(s)])
        push(inventory.symbol(id), rng.uniform(config.min_dur, config.max_dur));
      push("sil", rng.uniform(config.sil_min, config.sil_max));

      const int n_frames =
          std::max(1, static_cast<int>(std::floor(t * config.frame_rate)));
      const auto ids =
          align_phonemes_to_frames(su.records, n_frames, config.frame_rate, inventory);
      render_utterance(ids, corpus.styles[static_cast<std::size_t>(subj)],
                       config.frame_rate, su.utt);
      su.utt.utt_id = corpus.sentences[static_cast<std::size_t>(s)];
      su.utt.subject_id = corpus.subjects[static_cast<std::size_t>(subj)];
      per_subject.push_back(std::move(su));
    }
  }
  return corpus;
}

}  // namespace artic::corpus
