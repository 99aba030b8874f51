#pragma once

// Stage orchestration: simulate -> preprocess -> train -> calibrate -> detect
// -> explain -> report, with per-stage config-hash stamps for resumability,
// atomic artifact writes, and a small worker pool for the embarrassingly
// parallel stages.

#include <atomic>
#include <thread>

#include "rhgr/anomaly/detector.hpp"
#include "rhgr/calib/calibration.hpp"
#include "rhgr/explain/attribution.hpp"
#include "rhgr/io/config.hpp"
#include "rhgr/io/corpus.hpp"
#include "rhgr/io/persist.hpp"
#include "rhgr/io/report.hpp"
#include "rhgr/sim/simulator.hpp"

namespace rhgr::io {

namespace detail {

// Atomic file write: temp file in the same directory, then rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& body) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("atomic_write: cannot open " + tmp.string());
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw DataError("atomic_write: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_file: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Runs fn(i) for i in [0, n) across `jobs` workers; rethrows the first failure.
template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::min(jobs, n); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Artifact locations and stage stamps
// ---------------------------------------------------------------------------

struct ExperimentPaths {
  std::filesystem::path out_dir;
  std::filesystem::path corpus;
  std::filesystem::path features() const { return out_dir / "features"; }
  std::filesystem::path models() const { return out_dir / "models"; }
  std::filesystem::path baseline_model() const { return models() / "baseline.rhgr"; }
  std::filesystem::path vae_model() const { return models() / "vae.rhgr"; }
  std::filesystem::path split_file() const { return out_dir / "split.json"; }
  std::filesystem::path sweep_csv() const { return out_dir / "sweep.csv"; }
  std::filesystem::path detections() const { return out_dir / "detections.json"; }
  std::filesystem::path characterizations() const {
    return out_dir / "characterizations.json";
  }
  std::filesystem::path feedback() const { return out_dir / "feedback.txt"; }
  std::filesystem::path report_stem() const { return out_dir / "report"; }
  std::filesystem::path stamp(const std::string& stage) const {
    return out_dir / "stamps" / (stage + ".done");
  }
};

inline ExperimentPaths experiment_paths(const ExperimentConfig& cfg) {
  ExperimentPaths p;
  p.out_dir = cfg.out_dir;
  if (const char* env = std::getenv("RADAR_HGR_DATA"))
    p.corpus = env;
  else if (!cfg.corpus_dir.empty())
    p.corpus = cfg.corpus_dir;
  else
    p.corpus = cfg.out_dir / "corpus";
  return p;
}

inline bool stamp_matches(const ExperimentPaths& p, const std::string& stage,
                          const std::string& hash) {
  const std::filesystem::path f = p.stamp(stage);
  if (!std::filesystem::exists(f)) return false;
  return detail::read_file(f) == hash;
}

inline void write_stamp(const ExperimentPaths& p, const std::string& stage,
                        const std::string& hash) {
  detail::atomic_write(p.stamp(stage), hash);
}

inline void require_stage(const ExperimentPaths& p, const std::string& needed,
                          const std::string& hash, const std::string& for_stage) {
  if (!stamp_matches(p, needed, hash))
    throw DependencyError("stage '" + for_stage + "' requires completed stage '" +
                          needed + "'");
}

// ---------------------------------------------------------------------------
// Feature cache serialization
// ---------------------------------------------------------------------------

inline std::string features_json(const dsp::FeatureSequence& seq) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : seq.frames) frames.push_back(f.as_array());
  nlohmann::json j{{"id", seq.recording_id},
                   {"user", seq.user_id},
                   {"location", seq.location},
                   {"intended_class", class_name(seq.intended_class)},
                   {"anomaly", dsp::anomaly_kind_name(seq.anomaly)},
                   {"labels", seq.labels},
                   {"frames", frames}};
  return j.dump();
}

inline dsp::FeatureSequence features_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("features_from_json: unparseable JSON");
  dsp::FeatureSequence seq;
  seq.recording_id = j.at("id");
  seq.user_id = j.at("user");
  seq.location = j.value("location", "desk");
  seq.intended_class = class_from_name(j.at("intended_class"));
  seq.anomaly = anomaly_kind_from_name(j.value("anomaly", "none"));
  seq.labels = j.at("labels").get<std::vector<int>>();
  for (const auto& row : j.at("frames")) {
    dsp::FrameFeatures f;
    f.range_m = row.at(0);
    f.doppler_mps = row.at(1);
    f.azimuth_deg = row.at(2);
    f.elevation_deg = row.at(3);
    f.peak = row.at(4);
    seq.frames.push_back(f);
  }
  if (seq.labels.size() != seq.frames.size())
    throw FormatError("features_from_json: label/frame length mismatch");
  return seq;
}

inline std::vector<dsp::FeatureSequence> load_feature_dir(
    const std::filesystem::path& dir) {
  std::vector<dsp::FeatureSequence> out;
  if (!std::filesystem::exists(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(features_from_json(detail::read_file(f)));
  return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

// Synthesizes the corpus: user 0 is the baseline-training user; users 1..N
// each contribute nominal recordings plus fast/slow/wrist anomalies.
inline void stage_simulate(const ExperimentConfig& cfg, const ExperimentPaths& p,
                           std::ostream& log) {
  struct Job {
    RecordingMeta meta;
    sim::TrajectorySpec spec;
  };
  std::vector<Job> jobs;
  std::uint64_t counter = 0;
  auto add = [&](int user, int cls, dsp::AnomalyKind kind) {
    Job j;
    j.meta.user = user;
    j.meta.intended_class = cls;
    j.meta.anomaly = kind;
    j.meta.seed = derive_seed(cfg.seed, "sim", counter);
    j.meta.id = "u" + std::to_string(user) + "-" + class_name(cls) + "-" +
                dsp::anomaly_kind_name(kind) + "-" + std::to_string(counter);
    j.spec.gesture_class = cls;
    j.spec.anomaly = kind;
    j.spec.seed = j.meta.seed;
    j.spec.style = sim::user_style(user, cfg.seed);
    // slow executions run 90 frames and must still fit the recording
    if (j.spec.start_frame + j.spec.effective_duration() > j.spec.total_frames)
      j.spec.start_frame =
          j.spec.total_frames - j.spec.effective_duration() - 1;
    jobs.push_back(std::move(j));
    ++counter;
  };

  for (int cls = 1; cls < kNumClasses; ++cls)
    for (std::size_t i = 0; i < cfg.train_per_class; ++i)
      add(0, cls, dsp::AnomalyKind::None);
  for (std::size_t u = 1; u <= cfg.users; ++u) {
    for (int cls = 1; cls < kNumClasses; ++cls)
      for (std::size_t i = 0; i < cfg.user_per_class; ++i)
        add(static_cast<int>(u), cls, dsp::AnomalyKind::None);
    for (dsp::AnomalyKind kind :
         {dsp::AnomalyKind::Fast, dsp::AnomalyKind::Slow, dsp::AnomalyKind::Wrist})
      for (std::size_t i = 0; i < cfg.anomalies_per_kind; ++i)
        add(static_cast<int>(u), 1 + static_cast<int>(i) % kNumGestureClasses, kind);
  }

  log << "simulate: " << jobs.size() << " recordings -> " << p.corpus.string()
      << '\n';
  detail::parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    sim::Recording rec = sim::synthesize_recording(jobs[i].spec, cfg.radar);
    save_recording(rec.cube, jobs[i].meta, p.corpus);
  });
}

inline void stage_preprocess(const ExperimentConfig& cfg, const ExperimentPaths& p,
                             std::ostream& log) {
  std::vector<RecordingMeta> metas = list_corpus(p.corpus);
  if (metas.empty())
    throw DependencyError("stage 'preprocess' requires completed stage 'simulate'");
  log << "preprocess: " << metas.size() << " recordings\n";
  detail::parallel_for(metas.size(), cfg.jobs, [&](std::size_t i) {
    const RecordingMeta& m = metas[i];
    dsp::RadarCube cube = load_recording(m, p.corpus, cfg.radar);
    dsp::FeatureSequence seq = dsp::extract_features(cube, cfg.radar);
    seq.recording_id = m.id;
    seq.user_id = m.user;
    seq.location = m.location;
    seq.intended_class = m.intended_class;
    seq.anomaly = m.anomaly;
    // ground-truth frame labels from the simulator's trajectory spec
    sim::TrajectorySpec spec;
    spec.gesture_class = m.intended_class;
    spec.anomaly = m.anomaly;
    spec.seed = m.seed;
    spec.style = sim::user_style(m.user, cfg.seed);
    if (spec.start_frame + spec.effective_duration() > spec.total_frames)
      spec.start_frame = spec.total_frames - spec.effective_duration() - 1;
    seq.labels = sim::gesture_trajectory(spec, cfg.radar).labels;
    detail::atomic_write(p.features() / (m.id + ".json"), features_json(seq));
  });
}

// Deterministic per-class 80/10/10 split of the baseline user's recordings.
struct BaselineSplit {
  std::vector<dsp::FeatureSequence> train, val, forget;
};

inline BaselineSplit split_baseline(const std::vector<dsp::FeatureSequence>& all,
                                    const ExperimentConfig& cfg) {
  BaselineSplit out;
  std::map<int, std::vector<const dsp::FeatureSequence*>> per_class;
  for (const auto& s : all)
    if (s.user_id == 0 && s.anomaly == dsp::AnomalyKind::None)
      per_class[s.intended_class].push_back(&s);
  if (per_class.empty())
    throw DependencyError("stage 'train' requires completed stage 'preprocess'");
  Rng rng(derive_seed(cfg.seed, "split"));
  for (auto& [cls, recs] : per_class) {
    std::shuffle(recs.begin(), recs.end(), rng);
    const std::size_t n = recs.size();
    const std::size_t n_train = static_cast<std::size_t>(
        std::round(cfg.train_ratio * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(
        std::round(cfg.val_ratio * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) out.train.push_back(*recs[i]);
      else if (i < n_train + n_val) out.val.push_back(*recs[i]);
      else out.forget.push_back(*recs[i]);
    }
  }
  return out;
}

inline model::SiTrace stage_train(const ExperimentConfig& cfg,
                                  const ExperimentPaths& p, std::ostream& log) {
  std::vector<dsp::FeatureSequence> all = load_feature_dir(p.features());
  BaselineSplit split = split_baseline(all, cfg);
  log << "train: " << split.train.size() << " train / " << split.val.size()
      << " val / " << split.forget.size() << " forget recordings\n";

  model::GruModel m;
  Rng init_rng(derive_seed(cfg.seed, "init"));
  m.init(init_rng);
  m.stats = model::compute_feature_stats(split.train);
  model::WindowedDataset train_ds = calib::windows_of(m, split.train);
  model::WindowedDataset val_ds = calib::windows_of(m, split.val);
  model::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  tc.record_si_trace = true;
  model::SiTrace trace;
  model::TrainHistory h = model::train_classifier(m, train_ds, val_ds, tc, &trace);
  if (!h.epochs.empty())
    log << "train: final val acc " << h.epochs.back().val_acc << '\n';
  persist_model(m, p.baseline_model());

  nlohmann::json j;
  for (const auto& s : split.train) j["train"].push_back(s.recording_id);
  for (const auto& s : split.val) j["val"].push_back(s.recording_id);
  for (const auto& s : split.forget) j["forget"].push_back(s.recording_id);
  detail::atomic_write(p.split_file(), j.dump(2));
  return trace;
}

// Sweep inputs reconstructed from the cached features and the split file.
struct CalibInputs {
  calib::Pool train_pool;
  std::vector<dsp::FeatureSequence> forget;
  std::map<int, calib::UserData> users;
};

inline CalibInputs calib_inputs(const ExperimentConfig& cfg, const ExperimentPaths& p) {
  std::vector<dsp::FeatureSequence> all = load_feature_dir(p.features());
  nlohmann::json split =
      nlohmann::json::parse(detail::read_file(p.split_file()), nullptr, false);
  if (split.is_discarded())
    throw FormatError("calib_inputs: unparseable split file");
  std::set<std::string> train_ids, forget_ids;
  for (const auto& id : split.at("train")) train_ids.insert(id.get<std::string>());
  for (const auto& id : split.at("forget")) forget_ids.insert(id.get<std::string>());

  CalibInputs in;
  std::map<int, std::map<int, std::vector<dsp::FeatureSequence>>> user_class;
  for (auto& s : all) {
    if (s.user_id == 0) {
      if (train_ids.count(s.recording_id)) in.train_pool.push_back(s);
      else if (forget_ids.count(s.recording_id)) in.forget.push_back(s);
    } else if (s.anomaly == dsp::AnomalyKind::None) {
      user_class[s.user_id][s.intended_class].push_back(s);
    }
  }
  // per user and class, hold the last two recordings out for assessment
  for (auto& [user, classes] : user_class) {
    calib::UserData& ud = in.users[user];
    for (auto& [cls, recs] : classes) {
      const std::size_t held = recs.size() > 2 ? 2 : (recs.size() > 1 ? 1 : 0);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (i + held < recs.size()) ud.calib_pool.push_back(recs[i]);
        else ud.assess.push_back(recs[i]);
      }
    }
  }
  return in;
}

inline void stage_calibrate(const ExperimentConfig& cfg, const ExperimentPaths& p,
                            std::ostream& log, const model::SiTrace* trace) {
  model::GruModel baseline = load_gru_model(p.baseline_model());
  CalibInputs in = calib_inputs(cfg, p);
  if (in.users.empty())
    throw DataError("stage_calibrate: no calibration users in the corpus");
  calib::CalibrationConfig base = cfg.calibration;
  base.seed = derive_seed(cfg.seed, "sweep");
  log << "calibrate: " << cfg.sweep.methods.size() << " methods x "
      << cfg.sweep.n_train_values.size() * cfg.sweep.n_user_values.size()
      << " cells x " << in.users.size() << " users x " << cfg.sweep_runs
      << " runs\n";
  calib::SweepResult result = calib::run_sweep(baseline, in.train_pool, in.users,
                                               in.forget, cfg.sweep, base,
                                               cfg.sweep_runs, trace);
  std::ostringstream csv;
  csv.precision(17);
  result.to_csv(csv);
  detail::atomic_write(p.sweep_csv(), csv.str());
}

inline void stage_detect(const ExperimentConfig& cfg, const ExperimentPaths& p,
                         std::ostream& log) {
  model::GruModel baseline = load_gru_model(p.baseline_model());
  CalibInputs in = calib_inputs(cfg, p);
  std::vector<dsp::FeatureSequence> all = load_feature_dir(p.features());

  // VAE trained on the baseline user's nominal training recordings,
  // min-max normalized by the same split's statistics.
  model::FeatureStats stats = model::compute_feature_stats(in.train_pool);
  anomaly::VaeConfig vc = cfg.vae;
  vc.input_dim = in.train_pool.front().size() * model::kFeatDim;
  vc.seed = derive_seed(cfg.seed, "vae");
  std::vector<Vec> train_x;
  for (const auto& s : in.train_pool) train_x.push_back(flatten_minmax(s, stats));
  log << "detect: training VAE on " << train_x.size() << " recordings ("
      << vc.input_dim << " dims)\n";
  anomaly::VaeModel vae = anomaly::train_vae(train_x, vc);
  vae.stats = stats;
  persist_model(vae, p.vae_model());

  nlohmann::json rows = nlohmann::json::array();
  for (auto& [user, ud] : in.users) {
    std::vector<Vec> calib_x;
    for (const auto& s : ud.calib_pool)
      calib_x.push_back(flatten_minmax(s, vae.stats));
    anomaly::UserThreshold thr = anomaly::user_threshold(vae, calib_x, user);
    for (const auto& s : all) {
      if (s.user_id != user) continue;
      std::vector<int> preds = model::predict_frames(
          baseline, model::normalize_zscore(s, baseline.stats));
      anomaly::AnomalyVerdict v = anomaly::judge(flatten_minmax(s, vae.stats),
                                                 preds, s.labels, vae, thr);
      rows.push_back({{"id", s.recording_id},
                      {"user", user},
                      {"intended_class", class_name(s.intended_class)},
                      {"anomaly", dsp::anomaly_kind_name(s.anomaly)},
                      {"condition", anomaly::condition_name(v.condition)},
                      {"category", anomaly::category_name(v.category)},
                      {"e_rec", v.e_rec},
                      {"threshold", v.threshold}});
    }
  }
  detail::atomic_write(p.detections(), rows.dump(2));
  log << "detect: " << rows.size() << " verdicts\n";
}

inline void stage_explain(const ExperimentConfig& cfg, const ExperimentPaths& p,
                          std::ostream& log) {
  model::GruModel m = load_gru_model(p.baseline_model());
  CalibInputs in = calib_inputs(cfg, p);
  std::vector<dsp::FeatureSequence> all = load_feature_dir(p.features());
  nlohmann::json detections =
      nlohmann::json::parse(detail::read_file(p.detections()), nullptr, false);
  if (detections.is_discarded())
    throw FormatError("stage_explain: unparseable detections file");

  // Background: hover-only windows from the baseline training split.
  std::vector<explain::Window> background;
  for (const auto& s : in.train_pool) {
    model::WindowedDataset ds =
        model::window_dataset(model::normalize_zscore(s, m.stats));
    for (std::size_t w = 0; w < ds.count() && background.size() < 8; ++w)
      if (ds.labels[w] == 0) background.push_back(explain::window_from(ds, w));
    if (background.size() >= 8) break;
  }
  if (background.empty())
    throw DataError("stage_explain: no background windows available");

  std::map<int, std::vector<dsp::FeatureSequence>> nominal;
  for (const auto& s : in.train_pool)
    nominal[s.intended_class].push_back(model::normalize_zscore(s, m.stats));
  explain::Srv srv =
      explain::compute_srv(nominal, m, background, cfg.explain.srv_per_class,
                           cfg.explain.n_samples, derive_seed(cfg.seed, "srv"));

  std::map<std::string, const dsp::FeatureSequence*> by_id;
  for (const auto& s : all) by_id[s.recording_id] = &s;

  // The user confirms the intended class of each flagged gesture: answer file
  // first, interactive menu next, recorded metadata as the batch fallback.
  std::map<std::string, std::string> answers;
  if (!cfg.answer_file.empty()) answers = load_answer_file(cfg.answer_file);
  std::vector<int> candidates;
  for (int c = 1; c < kNumClasses; ++c) candidates.push_back(c);

  nlohmann::json out = nlohmann::json::array();
  std::ostringstream feedback;
  std::size_t flagged = 0;
  for (const auto& d : detections) {
    if (d.at("category") == "nominal") continue;
    ++flagged;
    auto it = by_id.find(d.at("id"));
    if (it == by_id.end())
      throw DataError("stage_explain: detection references unknown recording");
    const dsp::FeatureSequence& raw = *it->second;
    RecordingMeta meta;
    meta.id = raw.recording_id;
    meta.intended_class = raw.intended_class;
    PromptOptions popt;
    popt.answers = cfg.answer_file.empty() ? nullptr : &answers;
    popt.interactive = cfg.interactive;
    popt.meta = &meta;
    const int intended = static_cast<int>(
        prompt_intended_class(raw.recording_id, candidates, popt));
    explain::CharacterizationReport rep = explain::characterize(
        m, model::normalize_zscore(raw, m.stats), intended, srv,
        background, cfg.explain.n_samples,
        derive_seed(cfg.seed, "char", flagged));
    const std::string msg = explain::render_feedback(rep);
    nlohmann::json devs = nlohmann::json::array();
    for (std::size_t j = 0; j < model::kFeatDim; ++j)
      devs.push_back(explain::deviation_name(rep.deviation[j]));
    out.push_back({{"id", raw.recording_id},
                   {"intended_class", class_name(rep.intended_class)},
                   {"anomaly", dsp::anomaly_kind_name(raw.anomaly)},
                   {"diagnosis", explain::diagnosis_name(rep.diagnosis)},
                   {"deviations", devs},
                   {"feedback", msg}});
    feedback << raw.recording_id << ": " << msg << '\n';
  }
  detail::atomic_write(p.characterizations(), out.dump(2));
  detail::atomic_write(p.feedback(), feedback.str());
  log << "explain: characterized " << out.size() << " flagged recordings\n";
}

inline std::vector<ReportRow> stage_report(const ExperimentConfig& cfg,
                                           const ExperimentPaths& p,
                                           std::ostream& log) {
  const std::string chash = config_hash(cfg);
  std::vector<ReportRow> rows;

  const std::string sweep_bytes = detail::read_file(p.sweep_csv());
  const std::string sweep_hash = detail::content_hash(sweep_bytes);
  calib::SweepResult sweep;
  {
    std::stringstream ss(sweep_bytes);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      std::stringstream ls(line);
      std::string f;
      std::vector<std::string> fields;
      while (std::getline(ls, f, ',')) fields.push_back(f);
      calib::SweepRow r;
      r.method = fields[0];
      r.n_train = std::stoul(fields[1]);
      r.n_user = std::stoul(fields[2]);
      r.user = std::stoi(fields[3]);
      r.run = std::stoul(fields[4]);
      r.seed = std::stoull(fields[5]);
      r.user_gesture_acc = std::stod(fields[6]);
      r.forget_gesture_acc = std::stod(fields[7]);
      sweep.rows.push_back(std::move(r));
    }
  }
  for (const auto& [key, st] : sweep.aggregate()) {
    const auto& [method, n_train, n_user, user] = key;
    const std::string tag = method + "-" + std::to_string(n_train) + "-" +
                            std::to_string(n_user) + "-u" + std::to_string(user);
    rows.push_back({tag, "user_gesture_acc", st.mean_user, st.std_user, chash,
                    sweep_hash});
    rows.push_back({tag, "forget_gesture_acc", st.mean_forget, st.std_forget, chash,
                    sweep_hash});
  }

  const std::string det_bytes = detail::read_file(p.detections());
  const std::string det_hash = detail::content_hash(det_bytes);
  nlohmann::json detections = nlohmann::json::parse(det_bytes);
  double anom_total = 0, anom_flagged = 0, nom_total = 0, nom_flagged = 0;
  for (const auto& d : detections) {
    const bool is_anom = d.at("anomaly") != "none";
    const bool flagged = d.at("category") != "nominal";
    (is_anom ? anom_total : nom_total) += 1.0;
    if (flagged) (is_anom ? anom_flagged : nom_flagged) += 1.0;
  }
  if (anom_total > 0)
    rows.push_back({"detect", "anomaly_tpr", anom_flagged / anom_total, 0.0, chash,
                    det_hash});
  if (nom_total > 0)
    rows.push_back({"detect", "nominal_fpr", nom_flagged / nom_total, 0.0, chash,
                    det_hash});

  emit_report(rows, p.report_stem());
  log << "report: " << rows.size() << " rows\n";
  return rows;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{
      "simulate", "preprocess", "train", "calibrate", "detect", "explain",
      "report"};
  return order;
}

inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg,
                                             std::ostream& log = std::cout) {
  cfg.validate();
  const ExperimentPaths p = experiment_paths(cfg);
  std::filesystem::create_directories(p.out_dir);
  const std::string hash = config_hash(cfg);

  const std::map<std::string, std::vector<std::string>> deps{
      {"simulate", {}},
      {"preprocess", {"simulate"}},
      {"train", {"preprocess"}},
      {"calibrate", {"train"}},
      {"detect", {"train"}},
      {"explain", {"detect"}},
      {"report", {"calibrate", "detect"}}};

  const bool wants_si =
      std::find(cfg.sweep.methods.begin(), cfg.sweep.methods.end(), "si") !=
      cfg.sweep.methods.end();
  model::SiTrace trace;
  std::vector<ReportRow> rows;

  for (const std::string& stage : stage_order()) {
    if (std::find(cfg.stages.begin(), cfg.stages.end(), stage) == cfg.stages.end())
      continue;
    if (stamp_matches(p, stage, hash)) {
      // 'si' needs the in-memory training trace even when 'train' is stamped
      if (stage == "calibrate" && wants_si && !trace.recorded) {
        log << "calibrate: regenerating the training trace for 'si'\n";
        trace = stage_train(cfg, p, log);
      }
      if (stage == "report") {
        std::filesystem::path csv = p.report_stem();
        csv += ".csv";
        rows = read_report_csv(csv);
      }
      log << stage << ": up to date, skipped\n";
      continue;
    }
    for (const std::string& d : deps.at(stage)) require_stage(p, d, hash, stage);

    if (stage == "simulate") stage_simulate(cfg, p, log);
    else if (stage == "preprocess") stage_preprocess(cfg, p, log);
    else if (stage == "train") trace = stage_train(cfg, p, log);
    else if (stage == "calibrate") {
      if (wants_si && !trace.recorded) {
        log << "calibrate: regenerating the training trace for 'si'\n";
        trace = stage_train(cfg, p, log);
      }
      stage_calibrate(cfg, p, log, trace.recorded ? &trace : nullptr);
    } else if (stage == "detect") stage_detect(cfg, p, log);
    else if (stage == "explain") stage_explain(cfg, p, log);
    else if (stage == "report") rows = stage_report(cfg, p, log);
    write_stamp(p, stage, hash);
  }
  return rows;
}

}  // namespace rhgr::io
