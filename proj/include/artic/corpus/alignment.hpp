#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "artic/core/error.hpp"
#include "artic/corpus/inventory.hpp"

namespace artic::corpus {

/// One forced-alignment interval: phoneme label with [start, end) seconds.
struct AlignmentRecord {
  std::string phoneme;
  double start = 0;
  double end = 0;
};

inline void validate_records(const std::vector<AlignmentRecord>& records) {
  if (records.empty()) throw Error("alignment: empty record list");
  constexpr double kGapTol = 1e-6;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.start < 0) throw Error("alignment: negative start time");
    if (!(r.end > r.start))
      throw Error("alignment: record '" + r.phoneme + "' has end <= start");
    if (i > 0 && std::abs(r.start - records[i - 1].end) > kGapTol)
      throw Error("alignment: records not contiguous at '" + r.phoneme + "'");
  }
}

/// Maps phoneme intervals onto frames: frame i takes the phoneme whose
/// interval contains the frame midpoint (i + 0.5) / frame_rate. Midpoints
/// past the last interval fall back to the last record; midpoints before the
/// first interval take the first record.
inline std::vector<int> align_phonemes_to_frames(
    const std::vector<AlignmentRecord>& records, int n_frames, double frame_rate,
    const PhonemeInventory& inventory) {
  validate_records(records);
  if (n_frames < 1) throw Error("alignment: n_frames must be >= 1");
  if (!(frame_rate > 0)) throw Error("alignment: frame_rate must be positive");

  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(n_frames));
  std::size_t cursor = 0;
  for (int i = 0; i < n_frames; ++i) {
    const double mid = (i + 0.5) / frame_rate;
    while (cursor + 1 < records.size() && mid >= records[cursor].end) ++cursor;
    ids.push_back(inventory.id_of(records[cursor].phoneme));
  }
  return ids;
}

struct ParsedAlignment {
  std::string utt_id;
  std::vector<AlignmentRecord> records;
};

/// Tab-separated alignment text: `utt_id<TAB>phoneme<TAB>start<TAB>end`,
/// one record per line, all lines sharing one utt_id.
inline ParsedAlignment parse_alignment_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open alignment file: " + path.string());
  ParsedAlignment out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string utt, phoneme, start_s, end_s;
    if (!std::getline(ls, utt, '\t') || !std::getline(ls, phoneme, '\t') ||
        !std::getline(ls, start_s, '\t') || !std::getline(ls, end_s, '\t'))
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": expected 4 tab-separated fields");
    if (out.utt_id.empty()) out.utt_id = utt;
    else if (out.utt_id != utt)
      throw IoError(path.string() + ": mixed utt_ids ('" + out.utt_id + "' vs '" +
                    utt + "')");
    AlignmentRecord r;
    r.phoneme = phoneme;
    try {
      r.start = std::stod(start_s);
      r.end = std::stod(end_s);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    out.records.push_back(std::move(r));
  }
  validate_records(out.records);
  return out;
}

inline void write_alignment_file(const std::filesystem::path& path,
                                 const std::string& utt_id,
                                 const std::vector<AlignmentRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write alignment file: " + path.string());
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const auto& r : records)
    out << utt_id << '\t' << r.phoneme << '\t' << r.start << '\t' << r.end << '\n';
}

}  // namespace artic::corpus
