#pragma once

// On-disk recording corpus: corpus/<user>/<class>/<id>.npy radar cubes with
// <id>.json metadata sidecars, plus the intended-class prompt used when an
// anomalous gesture needs user confirmation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "rhgr/io/npy.hpp"
#include "rhgr/model/classes.hpp"

namespace rhgr::io {

struct RecordingMeta {
  std::string id;
  int user = 0;
  std::string location = "desk";
  int intended_class = 0;
  dsp::AnomalyKind anomaly = dsp::AnomalyKind::None;
  std::string source = "synthetic";  // "real" or "synthetic"
  std::uint64_t seed = 0;
};

inline dsp::AnomalyKind anomaly_kind_from_name(const std::string& name) {
  using dsp::AnomalyKind;
  if (name == "none") return AnomalyKind::None;
  if (name == "fast") return AnomalyKind::Fast;
  if (name == "slow") return AnomalyKind::Slow;
  if (name == "wrist") return AnomalyKind::Wrist;
  throw InputError("anomaly_kind_from_name: unknown kind '" + name + "'");
}

// Corpus root resolution: explicit argument wins, then RADAR_HGR_DATA,
// then ./corpus.
inline std::filesystem::path corpus_root(const std::filesystem::path& requested = {}) {
  if (!requested.empty()) return requested;
  if (const char* env = std::getenv("RADAR_HGR_DATA")) return env;
  return "corpus";
}

inline std::filesystem::path recording_dir(const std::filesystem::path& root,
                                           const RecordingMeta& meta) {
  return root / ("user" + std::to_string(meta.user)) / class_name(meta.intended_class);
}

inline void save_recording(const dsp::RadarCube& cube, const RecordingMeta& meta,
                           const std::filesystem::path& root) {
  if (meta.id.empty()) throw DataError("save_recording: empty recording id");
  const std::filesystem::path dir = recording_dir(root, meta);
  std::filesystem::create_directories(dir);
  write_npy(cube, dir / (meta.id + ".npy"));
  nlohmann::json j{{"id", meta.id},
                   {"user", meta.user},
                   {"location", meta.location},
                   {"intended_class", class_name(meta.intended_class)},
                   {"anomaly", dsp::anomaly_kind_name(meta.anomaly)},
                   {"source", meta.source},
                   {"seed", meta.seed}};
  std::ofstream os(dir / (meta.id + ".json"), std::ios::trunc);
  if (!os) throw DataError("save_recording: cannot write sidecar for " + meta.id);
  os << j.dump(2) << '\n';
}

inline RecordingMeta read_sidecar(const std::filesystem::path& json_path) {
  std::ifstream is(json_path);
  if (!is) throw DataError("read_sidecar: cannot open " + json_path.string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded())
    throw FormatError("read_sidecar: unparseable JSON in " + json_path.string());
  RecordingMeta m;
  m.id = j.at("id");
  m.user = j.at("user");
  m.location = j.value("location", "desk");
  m.intended_class = class_from_name(j.at("intended_class"));
  m.anomaly = anomaly_kind_from_name(j.value("anomaly", "none"));
  m.source = j.value("source", "synthetic");
  m.seed = j.value("seed", 0ull);
  return m;
}

// Scans the corpus tree for sidecars; ids must be unique across the corpus.
inline std::vector<RecordingMeta> list_corpus(const std::filesystem::path& root) {
  std::vector<RecordingMeta> out;
  std::set<std::string> seen;
  if (!std::filesystem::exists(root)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".json") continue;
    RecordingMeta m = read_sidecar(e.path());
    if (!seen.insert(m.id).second)
      throw DataError("list_corpus: duplicate recording id '" + m.id + "'");
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(),
            [](const RecordingMeta& a, const RecordingMeta& b) { return a.id < b.id; });
  return out;
}

inline dsp::RadarCube load_recording(const RecordingMeta& meta,
                                     const std::filesystem::path& root,
                                     const dsp::RadarConfig& cfg = {},
                                     std::size_t frames = 100, bool lenient = false) {
  return read_npy_cube(recording_dir(root, meta) / (meta.id + ".npy"), cfg, frames,
                       lenient);
}

// Intended-class confirmation for flagged gestures. Resolution order:
//   1. answer-file mapping (id -> class name), if provided
//   2. interactive menu on the supplied streams
//   3. batch fallback to the metadata's intended class
// Interactive mode reprompts on invalid input at most three times.
struct PromptOptions {
  const std::map<std::string, std::string>* answers = nullptr;
  bool interactive = false;
  std::istream* in = &std::cin;
  std::ostream* out = &std::cout;
  const RecordingMeta* meta = nullptr;  // batch fallback
};

inline std::map<std::string, std::string> load_answer_file(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("load_answer_file: cannot open " + path.string());
  std::map<std::string, std::string> answers;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("load_answer_file: expected id=Class, got '" + line + "'");
    std::string id = line.substr(0, eq), cls = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.erase(s.begin());
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.pop_back();
    };
    trim(id);
    trim(cls);
    answers[id] = cls;
  }
  return answers;
}

inline GestureClass prompt_intended_class(const std::string& recording_id,
                                          const std::vector<int>& candidates,
                                          const PromptOptions& opt = {}) {
  if (candidates.empty())
    throw InputError("prompt_intended_class: no candidate classes");
  for (int c : candidates)
    if (c < 1 || c >= kNumClasses)
      throw InputError("prompt_intended_class: invalid candidate class");

  if (opt.answers) {
    auto it = opt.answers->find(recording_id);
    if (it != opt.answers->end())
      return static_cast<GestureClass>(class_from_name(it->second));
  }

  if (opt.interactive) {
    for (int attempt = 0; attempt < 3; ++attempt) {
      *opt.out << "Which gesture did you intend for recording " << recording_id
               << "?\n";
      for (std::size_t i = 0; i < candidates.size(); ++i)
        *opt.out << "  " << (i + 1) << ") " << class_name(candidates[i]) << '\n';
      *opt.out << "Selection: " << std::flush;
      std::string line;
      if (!std::getline(*opt.in, line))
        throw InputError("prompt_intended_class: input stream closed");
      try {
        const std::size_t sel = std::stoul(line);
        if (sel >= 1 && sel <= candidates.size())
          return static_cast<GestureClass>(candidates[sel - 1]);
      } catch (const std::exception&) {
      }
      *opt.out << "Invalid selection '" << line << "'.\n";
    }
    throw InputError("prompt_intended_class: three invalid selections for " +
                     recording_id);
  }

  if (opt.meta) return static_cast<GestureClass>(opt.meta->intended_class);
  throw InputError(
      "prompt_intended_class: no answer file, no interactive terminal, and no "
      "metadata fallback for " +
      recording_id);
}

}  // namespace rhgr::io
