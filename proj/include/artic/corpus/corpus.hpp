#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "artic/core/hash.hpp"
#include "artic/corpus/synthetic.hpp"

namespace artic::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

struct UtteranceEntry {
  std::string utt_id;
  fs::path alignment;   // relative to the subject directory
  fs::path frames_dir;  // relative to the subject directory
  double frame_rate = kDefaultFrameRate;
};

struct SubjectManifest {
  std::string subject_id;
  std::vector<UtteranceEntry> utterances;
};

/// Fully loaded corpus: per-subject utterances over a shared sentence set.
struct LoadedCorpus {
  fs::path root;
  std::vector<std::string> subjects;
  std::vector<std::string> sentences;  // identical for every subject
  std::map<std::string, std::vector<Utterance>> by_subject;

  const std::vector<Utterance>& subject(const std::string& id) const {
    auto it = by_subject.find(id);
    if (it == by_subject.end()) throw Error("unknown subject: " + id);
    return it->second;
  }
};

inline void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return j;
}

inline void write_subject_manifest(const fs::path& path, const SubjectManifest& m) {
  json utts = json::array();
  for (const auto& u : m.utterances)
    utts.push_back({{"utt_id", u.utt_id},
                    {"alignment", u.alignment.generic_string()},
                    {"frames_dir", u.frames_dir.generic_string()},
                    {"frame_rate", u.frame_rate}});
  write_json_file(path, json{{"subject_id", m.subject_id}, {"utterances", utts}});
}

inline SubjectManifest read_subject_manifest(const fs::path& path) {
  json j = read_json_file(path);
  SubjectManifest m;
  m.subject_id = j.at("subject_id").get<std::string>();
  for (const auto& u : j.at("utterances")) {
    UtteranceEntry e;
    e.utt_id = u.at("utt_id").get<std::string>();
    e.alignment = u.at("alignment").get<std::string>();
    e.frames_dir = u.at("frames_dir").get<std::string>();
    e.frame_rate = u.at("frame_rate").get<double>();
    m.utterances.push_back(std::move(e));
  }
  return m;
}

/// Writes a generated corpus in the on-disk layout:
///   <dir>/corpus.json
///   <dir>/<subject>/manifest.json
///   <dir>/<subject>/<utt>/alignment.tsv
///   <dir>/<subject>/<utt>/frames/frame_00000.png (+ mask{1,2,3}_00000.png)
inline void write_synthetic_corpus(const fs::path& dir, const SyntheticCorpus& corpus) {
  fs::create_directories(dir);
  json subjects = json::array();
  for (std::size_t si = 0; si < corpus.subjects.size(); ++si) {
    const std::string& subject = corpus.subjects[si];
    const fs::path sdir = dir / subject;
    SubjectManifest manifest;
    manifest.subject_id = subject;
    for (const auto& su : corpus.utterances[si]) {
      const std::string& utt_id = su.utt.utt_id;
      const fs::path udir = sdir / utt_id;
      const fs::path frames = udir / "frames";
      fs::create_directories(frames);
      write_alignment_file(udir / "alignment.tsv", utt_id, su.records);
      const int n = su.utt.frames();
      for (int i = 0; i < n; ++i) {
        Tensor frame = Tensor({3, kImageSize, kImageSize});
        std::copy_n(su.utt.video.data.data() + static_cast<std::int64_t>(i) * frame.numel(),
                    frame.numel(), frame.data());
        write_png(frames / detail::frame_name("frame", i), tensor_to_frame(frame));
        for (int k = 1; k <= 3; ++k) {
          const Tensor& all = su.utt.gt_masks->mask(k);
          Tensor m({kImageSize, kImageSize});
          std::copy_n(all.data() + static_cast<std::int64_t>(i) * m.numel(), m.numel(),
                      m.data());
          const std::string stem = "mask" + std::to_string(k);
          write_png(frames / detail::frame_name(stem.c_str(), i), mask_to_image(m));
        }
      }
      manifest.utterances.push_back(
          {utt_id, fs::path(utt_id) / "alignment.tsv", fs::path(utt_id) / "frames",
           corpus.config.frame_rate});
    }
    write_subject_manifest(sdir / "manifest.json", manifest);
    subjects.push_back({{"id", subject},
                        {"manifest", (fs::path(subject) / "manifest.json").generic_string()}});
  }
  write_json_file(dir / "corpus.json",
                  json{{"format", "artic-corpus-v1"}, {"subjects", subjects}});
}

/// Loads every subject's utterances and checks the sentence sets match.
inline LoadedCorpus load_corpus(const fs::path& dir, const PhonemeInventory& inventory) {
  LoadedCorpus corpus;
  corpus.root = dir;
  json root = read_json_file(dir / "corpus.json");
  std::set<std::string> reference;
  for (const auto& subj : root.at("subjects")) {
    const std::string id = subj.at("id").get<std::string>();
    const fs::path mpath = dir / subj.at("manifest").get<std::string>();
    SubjectManifest manifest = read_subject_manifest(mpath);
    const fs::path sdir = mpath.parent_path();
    std::vector<Utterance> utts;
    std::set<std::string> sentences;
    for (const auto& e : manifest.utterances) {
      Utterance u = load_utterance(sdir / e.alignment, sdir / e.frames_dir,
                                   e.frame_rate, inventory, manifest.subject_id);
      sentences.insert(u.utt_id);
      utts.push_back(std::move(u));
    }
    if (reference.empty() && corpus.subjects.empty()) {
      reference = sentences;
      corpus.sentences.assign(reference.begin(), reference.end());
    } else if (sentences != reference) {
      throw Error("corpus: sentence set of subject " + id +
                  " differs from the other subjects");
    }
    corpus.subjects.push_back(id);
    corpus.by_subject.emplace(id, std::move(utts));
  }
  if (corpus.subjects.empty()) throw Error("corpus: no subjects found");
  return corpus;
}

/// Hash over corpus metadata (corpus.json, manifests, alignment files).
inline std::string corpus_hash(const fs::path& dir) {
  Sha256 h;
  auto add_file = [&h](const fs::path& p) {
    h.update(p.filename().string());
    h.update(sha256_file_hex(p));
  };
  add_file(dir / "corpus.json");
  json root = read_json_file(dir / "corpus.json");
  for (const auto& subj : root.at("subjects")) {
    const fs::path mpath = dir / subj.at("manifest").get<std::string>();
    add_file(mpath);
    SubjectManifest manifest = read_subject_manifest(mpath);
    for (const auto& e : manifest.utterances)
      add_file(mpath.parent_path() / e.alignment);
  }
  return h.hex();
}

}  // namespace artic::corpus
