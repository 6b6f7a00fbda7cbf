#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "artic/corpus/alignment.hpp"
#include "artic/corpus/png_io.hpp"

namespace artic::corpus {

constexpr int kImageSize = 64;
constexpr double kDefaultFrameRate = 23.18;

/// Frame sequence (n, 3, 64, 64) with intensities in [0,1].
struct VideoTensor {
  Tensor data;
  double frame_rate = kDefaultFrameRate;

  int frames() const { return data.defined() ? data.dim(0) : 0; }

  void validate() const {
    if (!data.defined() || data.ndim() != 4 || data.dim(1) != 3 || data.dim(0) < 1)
      throw ShapeError("VideoTensor: expected (n>=1, 3, H, W), got " +
                       (data.defined() ? data.shape_str() : std::string("undefined")));
    const real* p = data.data();
    for (std::int64_t i = 0; i < data.numel(); ++i)
      if (!(p[i] >= 0 && p[i] <= 1))
        throw Error("VideoTensor: value outside [0,1]");
  }
};

/// Three per-frame binary region masks (n, 64, 64): above-palate, tongue/jaw,
/// pharyngeal wall.
struct ATBMaskSet {
  Tensor mask1, mask2, mask3;

  const Tensor& mask(int k) const {
    switch (k) {
      case 1: return mask1;
      case 2: return mask2;
      case 3: return mask3;
      default: throw Error("ATBMaskSet: mask index must be 1..3");
    }
  }
};

/// One sentence's frame-aligned phoneme sequence plus its video; the atomic
/// training unit.
struct Utterance {
  std::string utt_id;
  std::string subject_id;
  std::vector<int> phoneme_ids;
  VideoTensor video;
  std::optional<ATBMaskSet> gt_masks;  // synthetic corpus only

  int frames() const { return video.frames(); }
};

namespace detail {

inline std::string frame_name(const char* stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d.png", stem, index);
  return buf;
}

}  // namespace detail

/// Frame PNGs named frame_00000.png ascending in `frames_dir`.
inline std::vector<std::filesystem::path> list_frame_files(
    const std::filesystem::path& frames_dir) {
  std::vector<std::filesystem::path> files;
  for (int i = 0;; ++i) {
    std::filesystem::path p = frames_dir / detail::frame_name("frame", i);
    if (!std::filesystem::exists(p)) break;
    files.push_back(std::move(p));
  }
  return files;
}

/// Loads one utterance: frames resized to 64x64, normalized to [0,1] by the
/// 8-bit maximum, phoneme ids assigned per frame midpoint. Mask PNGs, when
/// present alongside the frames, are loaded as ground truth.
inline Utterance load_utterance(const std::filesystem::path& alignment_path,
                                const std::filesystem::path& frames_dir,
                                double frame_rate,
                                const PhonemeInventory& inventory,
                                const std::string& subject_id = "") {
  ParsedAlignment parsed = parse_alignment_file(alignment_path);
  const auto files = list_frame_files(frames_dir);
  if (files.empty())
    throw IoError("no frames (frame_00000.png ...) in " + frames_dir.string());

  const int n = static_cast<int>(files.size());
  Utterance utt;
  utt.utt_id = parsed.utt_id;
  utt.subject_id = subject_id;
  utt.video.frame_rate = frame_rate;
  utt.video.data = Tensor({n, 3, kImageSize, kImageSize});

  int src_w = -1, src_h = -1;
  for (int i = 0; i < n; ++i) {
    ImageU8 img = read_png(files[static_cast<std::size_t>(i)]);
    if (src_w < 0) {
      src_w = img.width;
      src_h = img.height;
    } else if (img.width != src_w || img.height != src_h) {
      throw IoError("frame size mismatch at " + files[static_cast<std::size_t>(i)].string());
    }
    if (img.width != kImageSize || img.height != kImageSize)
      img = resize_bilinear(img, kImageSize, kImageSize);
    Tensor ft = frame_to_tensor(img);
    std::copy_n(ft.data(), ft.numel(),
                utt.video.data.data() + static_cast<std::int64_t>(i) * ft.numel());
  }
  utt.video.validate();
  utt.phoneme_ids = align_phonemes_to_frames(parsed.records, n, frame_rate, inventory);

  if (std::filesystem::exists(frames_dir / detail::frame_name("mask1", 0))) {
    ATBMaskSet masks;
    for (int k = 1; k <= 3; ++k) {
      Tensor all({n, kImageSize, kImageSize});
      const std::string stem = "mask" + std::to_string(k);
      for (int i = 0; i < n; ++i) {
        ImageU8 img = read_png(frames_dir / detail::frame_name(stem.c_str(), i),
                               /*grayscale=*/true);
        if (img.width != kImageSize || img.height != kImageSize)
          throw IoError("mask size mismatch in " + frames_dir.string());
        Tensor m = image_to_mask(img);
        std::copy_n(m.data(), m.numel(),
                    all.data() + static_cast<std::int64_t>(i) * m.numel());
      }
      (k == 1 ? masks.mask1 : k == 2 ? masks.mask2 : masks.mask3) = all;
    }
    utt.gt_masks = std::move(masks);
  }
  return utt;
}

}  // namespace artic::corpus
