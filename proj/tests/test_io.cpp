// Storage and orchestration layer: NPY arrays, model containers, the corpus
// tree, config parsing, report emission, the experiment stage DAG, and the
// intended-class prompt.

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rhgr/io/experiment.hpp"

using namespace rhgr;

namespace {

std::filesystem::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::filesystem::path p = std::filesystem::temp_directory_path() /
                            ("rhgr-io-" + tag + "-" + std::to_string(::getpid()) +
                             "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  REQUIRE(os.good());
}

// Synthetic feature recording with a clean gesture signature, enough for
// fixture-level model tests (no DSP involved).
dsp::FeatureSequence make_seq(int cls, std::uint64_t seed, std::size_t frames = 60,
                              std::size_t start = 25, std::size_t dur = 10) {
  Rng rng(seed);
  dsp::FeatureSequence seq;
  seq.recording_id = "fix-" + std::to_string(cls) + "-" + std::to_string(seed);
  seq.intended_class = cls;
  seq.labels.assign(frames, 0);
  for (std::size_t f = 0; f < frames; ++f) {
    dsp::FrameFeatures ff;
    ff.range_m = 0.5 + 0.01 * rand_normal(rng);
    ff.peak = 0.3 + 0.02 * rand_normal(rng);
    if (f >= start && f < start + dur) {
      const double u = (static_cast<double>(f - start) + 0.5) / static_cast<double>(dur);
      ff.range_m -= 0.2 * (1.0 - 2.0 * std::abs(u - 0.5));
      ff.doppler_mps = (u < 0.5 ? 1.0 : -1.0) * (0.5 + 0.3 * cls);
      ff.azimuth_deg = (cls == 1 ? 20.0 : cls == 2 ? -20.0 : 0.0) * (1.0 - 2.0 * u);
      ff.elevation_deg = (cls == 3 ? -20.0 : cls == 4 ? 20.0 : 0.0) * (1.0 - 2.0 * u);
      ff.peak = 1.0;
      seq.labels[f] = cls;
    }
    ff.doppler_mps += 0.02 * rand_normal(rng);
    ff.azimuth_deg += 0.5 * rand_normal(rng);
    ff.elevation_deg += 0.5 * rand_normal(rng);
    seq.frames.push_back(ff);
  }
  return seq;
}

model::GruModel small_trained_model() {
  std::vector<dsp::FeatureSequence> train;
  for (int cls : {1, 2, 5})
    for (std::uint64_t i = 0; i < 4; ++i)
      train.push_back(make_seq(cls, 100 * static_cast<std::uint64_t>(cls) + i));
  model::GruModel m;
  Rng rng(7);
  m.init(rng);
  m.stats = model::compute_feature_stats(train);
  model::WindowedDataset ds = calib::windows_of(m, train);
  model::TrainConfig tc;
  tc.epochs = 6;
  tc.seed = 11;
  model::train_classifier(m, ds, {}, tc);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// NPY
// ---------------------------------------------------------------------------

TEST_CASE("npy round trip is byte-identical and deterministic") {
  auto dir = make_temp_dir("npy");
  dsp::RadarCube cube(4, 3, 32, 64);
  Rng rng(3);
  for (auto& v : cube.data) v = static_cast<float>(rand_normal(rng));

  io::write_npy(cube, dir / "a.npy");
  io::write_npy(cube, dir / "b.npy");
  CHECK(slurp(dir / "a.npy") == slurp(dir / "b.npy"));

  io::NpyArray arr = io::read_npy(dir / "a.npy");
  CHECK(arr.shape == std::vector<std::size_t>{4, 3, 32, 64});
  CHECK(arr.source_dtype == "<f4");
  REQUIRE(arr.data.size() == cube.data.size());
  for (std::size_t i = 0; i < arr.data.size(); ++i)
    REQUIRE(arr.data[i] == cube.data[i]);  // bit-identical floats
}

TEST_CASE("npy header is 64-byte aligned and version 1.0") {
  auto dir = make_temp_dir("npyhdr");
  io::write_npy(dir / "x.npy", std::vector<float>(10, 1.0f), {10});
  const std::string bytes = slurp(dir / "x.npy");
  REQUIRE(bytes.size() >= 10);
  CHECK(bytes.compare(0, 6, "\x93NUMPY") == 0);
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 0);
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9]))
                            << 8);
  CHECK((10 + hlen) % 64 == 0);
  CHECK(bytes[10 + hlen - 1] == '\n');
  // 1-D shape keeps the numpy tuple comma
  CHECK(bytes.find("(10,)") != std::string::npos);
}

TEST_CASE("npy reader matches an independent writer (numpy)") {
  auto dir = make_temp_dir("npycross");
  const std::string script =
      "import numpy as np\n"
      "a = np.arange(24, dtype=np.float32).reshape(2, 3, 4)\n"
      "np.save(r'" + (dir / "np.npy").string() + "', a)\n"
      "b = np.load(r'" + (dir / "ours.npy").string() + "')\n"
      "assert b.dtype == np.float32 and b.shape == (2, 3, 4)\n"
      "assert np.array_equal(a, b)\n";
  std::vector<float> vals(24);
  for (std::size_t i = 0; i < 24; ++i) vals[i] = static_cast<float>(i);
  io::write_npy(dir / "ours.npy", vals, {2, 3, 4});
  spit(dir / "check.py", script);
  const int rc = std::system(("python3 " + (dir / "check.py").string()).c_str());
  if (rc != 0) {
    WARN("python3/numpy unavailable; cross-tool check skipped");
  } else {
    io::NpyArray arr = io::read_npy(dir / "np.npy");
    CHECK(arr.shape == std::vector<std::size_t>{2, 3, 4});
    for (std::size_t i = 0; i < 24; ++i) CHECK(arr.data[i] == vals[i]);
  }
}

TEST_CASE("npy cube reader rejects wrong shapes naming the field") {
  auto dir = make_temp_dir("npyshape");
  dsp::RadarCube bad(99, 3, 32, 64);
  io::write_npy(bad, dir / "bad.npy");
  try {
    io::read_npy_cube(dir / "bad.npy");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
  dsp::RadarCube good(100, 3, 32, 64);
  io::write_npy(good, dir / "good.npy");
  CHECK_NOTHROW(io::read_npy_cube(dir / "good.npy"));
}

TEST_CASE("npy big-endian dtype: strict rejects, lenient converts") {
  auto dir = make_temp_dir("npybe");
  // hand-build a big-endian f4 file with values {1.0, -2.5}
  std::string dict = "{'descr': '>f4', 'fortran_order': False, 'shape': (2,), }";
  std::size_t total = 10 + dict.size() + 1;
  dict += std::string((64 - total % 64) % 64, ' ');
  dict += '\n';
  std::string bytes = "\x93NUMPY";
  bytes += '\x01';
  bytes += '\x00';
  bytes += static_cast<char>(dict.size() & 0xff);
  bytes += static_cast<char>((dict.size() >> 8) & 0xff);
  bytes += dict;
  for (float v : {1.0f, -2.5f}) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    std::reverse(buf, buf + 4);
    bytes.append(buf, 4);
  }
  spit(dir / "be.npy", bytes);

  try {
    io::read_npy(dir / "be.npy", /*lenient=*/false);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("dtype") != std::string::npos);
  }
  io::NpyArray arr = io::read_npy(dir / "be.npy", /*lenient=*/true);
  REQUIRE(arr.data.size() == 2);
  CHECK(arr.data[0] == 1.0f);
  CHECK(arr.data[1] == -2.5f);
}

TEST_CASE("npy reader converts f8 and i2 payloads") {
  auto dir = make_temp_dir("npyconv");
  {
    std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }";
    std::size_t total = 10 + dict.size() + 1;
    dict += std::string((64 - total % 64) % 64, ' ');
    dict += '\n';
    std::string bytes = "\x93NUMPY";
    bytes += '\x01';
    bytes += '\x00';
    bytes += static_cast<char>(dict.size() & 0xff);
    bytes += static_cast<char>((dict.size() >> 8) & 0xff);
    bytes += dict;
    for (double v : {0.5, -1.25, 3.0}) {
      char buf[8];
      std::memcpy(buf, &v, 8);
      bytes.append(buf, 8);
    }
    spit(dir / "f8.npy", bytes);
    io::NpyArray arr = io::read_npy(dir / "f8.npy");
    CHECK(arr.data == std::vector<float>{0.5f, -1.25f, 3.0f});
  }
  {
    std::string dict = "{'descr': '<i2', 'fortran_order': False, 'shape': (2,), }";
    std::size_t total = 10 + dict.size() + 1;
    dict += std::string((64 - total % 64) % 64, ' ');
    dict += '\n';
    std::string bytes = "\x93NUMPY";
    bytes += '\x01';
    bytes += '\x00';
    bytes += static_cast<char>(dict.size() & 0xff);
    bytes += static_cast<char>((dict.size() >> 8) & 0xff);
    bytes += dict;
    for (std::int16_t v : {std::int16_t(-7), std::int16_t(300)}) {
      char buf[2];
      std::memcpy(buf, &v, 2);
      bytes.append(buf, 2);
    }
    spit(dir / "i2.npy", bytes);
    io::NpyArray arr = io::read_npy(dir / "i2.npy");
    CHECK(arr.data == std::vector<float>{-7.0f, 300.0f});
  }
}

// ---------------------------------------------------------------------------
// Model containers
// ---------------------------------------------------------------------------

TEST_CASE("classifier container: header, prediction round trip, idempotence") {
  auto dir = make_temp_dir("persist");
  model::GruModel m = small_trained_model();
  io::persist_model(m, dir / "m.rhgr");

  // header declares the fixed architecture
  const std::string bytes = slurp(dir / "m.rhgr");
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9]))
                            << 8) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[10]))
                            << 16) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[11]))
                            << 24);
  nlohmann::json header = nlohmann::json::parse(bytes.substr(12, hlen));
  CHECK(header.at("format_version") == 1);
  CHECK(header.at("gru_hidden") == 16);
  CHECK(header.at("dense_out") == 6);

  model::GruModel r = io::load_gru_model(dir / "m.rhgr");
  dsp::FeatureSequence fix = make_seq(2, 999);
  const auto preds_orig =
      model::predict_frames(m, model::normalize_zscore(fix, m.stats));
  const auto preds_loaded =
      model::predict_frames(r, model::normalize_zscore(fix, r.stats));
  CHECK(preds_orig == preds_loaded);

  // float32 rounding is idempotent: saving the loaded model reproduces bytes
  io::persist_model(r, dir / "m2.rhgr");
  CHECK(slurp(dir / "m2.rhgr") == bytes);
}

TEST_CASE("vae container round-trips reconstruction errors exactly") {
  auto dir = make_temp_dir("persistvae");
  anomaly::VaeConfig cfg;
  cfg.input_dim = 40;
  cfg.enc_dims = {16, 8};
  cfg.latent_dim = 4;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.patience = 20;
  Rng data_rng(5);
  std::vector<Vec> recs;
  for (int i = 0; i < 30; ++i) {
    Vec x(cfg.input_dim);
    for (auto& v : x) v = 0.5 + 0.2 * rand_normal(data_rng);
    recs.push_back(x);
  }
  anomaly::VaeModel vae = anomaly::train_vae(recs, cfg);
  io::persist_model(vae, dir / "v.rhgr");
  anomaly::VaeModel loaded = io::load_vae_model(dir / "v.rhgr");

  // identical up to float32 rounding of the parameters (and BN statistics)
  for (int i = 0; i < 5; ++i) {
    const double a = anomaly::reconstruction_error(vae, recs[static_cast<std::size_t>(i)]);
    const double b =
        anomaly::reconstruction_error(loaded, recs[static_cast<std::size_t>(i)]);
    CHECK(b == Catch::Approx(a).epsilon(1e-4));
  }
  // and exactly idempotent after the first rounding
  io::persist_model(loaded, dir / "v2.rhgr");
  anomaly::VaeModel again = io::load_vae_model(dir / "v2.rhgr");
  for (int i = 0; i < 5; ++i) {
    const double a =
        anomaly::reconstruction_error(loaded, recs[static_cast<std::size_t>(i)]);
    const double b =
        anomaly::reconstruction_error(again, recs[static_cast<std::size_t>(i)]);
    CHECK(a == b);
  }
}

TEST_CASE("model container corruption and version errors") {
  auto dir = make_temp_dir("corrupt");
  model::GruModel m = small_trained_model();
  io::persist_model(m, dir / "m.rhgr");
  const std::string bytes = slurp(dir / "m.rhgr");

  SECTION("truncated blob") {
    spit(dir / "t.rhgr", bytes.substr(0, bytes.size() - 10));
    CHECK_THROWS_AS(io::load_gru_model(dir / "t.rhgr"), CorruptError);
  }
  SECTION("flipped payload byte") {
    std::string mod = bytes;
    mod[mod.size() - 3] = static_cast<char>(mod[mod.size() - 3] ^ 0x5a);
    spit(dir / "c.rhgr", mod);
    CHECK_THROWS_AS(io::load_gru_model(dir / "c.rhgr"), CorruptError);
  }
  SECTION("format version mismatch") {
    const std::size_t hlen =
        static_cast<unsigned char>(bytes[8]) |
        (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8) |
        (static_cast<std::size_t>(static_cast<unsigned char>(bytes[10])) << 16) |
        (static_cast<std::size_t>(static_cast<unsigned char>(bytes[11])) << 24);
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, hlen));
    header["format_version"] = 99;
    std::string htxt = header.dump();
    std::string mod = bytes.substr(0, 8);
    const std::uint32_t nh = static_cast<std::uint32_t>(htxt.size());
    mod.append(reinterpret_cast<const char*>(&nh), 4);
    mod += htxt;
    mod += bytes.substr(12 + hlen);
    spit(dir / "v.rhgr", mod);
    CHECK_THROWS_AS(io::load_gru_model(dir / "v.rhgr"), VersionError);
  }
  SECTION("wrong magic") {
    std::string mod = bytes;
    mod[0] = 'X';
    spit(dir / "x.rhgr", mod);
    CHECK_THROWS_AS(io::load_gru_model(dir / "x.rhgr"), FormatError);
  }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

TEST_CASE("corpus layout, listing, and duplicate detection") {
  auto root = make_temp_dir("corpus");
  dsp::RadarCube cube(100, 3, 32, 64);
  for (auto& v : cube.data) v = 0.25f;

  io::RecordingMeta a;
  a.id = "rec-a";
  a.user = 1;
  a.intended_class = 2;
  a.anomaly = dsp::AnomalyKind::Fast;
  a.seed = 42;
  io::RecordingMeta b;
  b.id = "rec-b";
  b.user = 2;
  b.intended_class = 5;
  io::save_recording(cube, a, root);
  io::save_recording(cube, b, root);

  CHECK(std::filesystem::exists(root / "user1" / "SwipeRight" / "rec-a.npy"));
  CHECK(std::filesystem::exists(root / "user1" / "SwipeRight" / "rec-a.json"));

  auto metas = io::list_corpus(root);
  REQUIRE(metas.size() == 2);
  CHECK(metas[0].id == "rec-a");
  CHECK(metas[0].anomaly == dsp::AnomalyKind::Fast);
  CHECK(metas[0].seed == 42);
  CHECK(metas[1].intended_class == 5);

  dsp::RadarCube back = io::load_recording(metas[0], root);
  CHECK(back.data == cube.data);

  io::RecordingMeta dup = b;
  dup.user = 3;  // same id elsewhere in the tree
  io::save_recording(cube, dup, root);
  CHECK_THROWS_AS(io::list_corpus(root), DataError);
}

TEST_CASE("corpus root resolution honors RADAR_HGR_DATA") {
  ::setenv("RADAR_HGR_DATA", "/tmp/rhgr-env-corpus", 1);
  CHECK(io::corpus_root() == std::filesystem::path("/tmp/rhgr-env-corpus"));
  CHECK(io::corpus_root("/explicit/path") == std::filesystem::path("/explicit/path"));
  ::unsetenv("RADAR_HGR_DATA");
  CHECK(io::corpus_root() == std::filesystem::path("corpus"));
}

// ---------------------------------------------------------------------------
// Intended-class prompt
// ---------------------------------------------------------------------------

TEST_CASE("prompt: answer file mapping wins") {
  std::map<std::string, std::string> answers{{"rec-1", "Push"}};
  io::PromptOptions opt;
  opt.answers = &answers;
  CHECK(io::prompt_intended_class("rec-1", {1, 2, 3, 4, 5}, opt) ==
        GestureClass::Push);
}

TEST_CASE("prompt: batch mode falls back to metadata") {
  io::RecordingMeta meta;
  meta.id = "rec-2";
  meta.intended_class = 4;
  io::PromptOptions opt;
  opt.meta = &meta;
  CHECK(io::prompt_intended_class("rec-2", {1, 2, 3, 4, 5}, opt) ==
        GestureClass::SwipeDown);
}

TEST_CASE("prompt: interactive menu selection '2' -> SwipeRight") {
  std::istringstream in("2\n");
  std::ostringstream out;
  io::PromptOptions opt;
  opt.interactive = true;
  opt.in = &in;
  opt.out = &out;
  CHECK(io::prompt_intended_class("rec-3", {1, 2, 3, 4, 5}, opt) ==
        GestureClass::SwipeRight);
  CHECK(out.str().find("SwipeRight") != std::string::npos);
}

TEST_CASE("prompt: invalid selections reprompt, then give up after three") {
  SECTION("recovers on the second try") {
    std::istringstream in("banana\n3\n");
    std::ostringstream out;
    io::PromptOptions opt;
    opt.interactive = true;
    opt.in = &in;
    opt.out = &out;
    CHECK(io::prompt_intended_class("rec-4", {1, 2, 3, 4, 5}, opt) ==
          GestureClass::SwipeUp);
  }
  SECTION("three bad answers -> InputError") {
    std::istringstream in("0\n9\nnope\n");
    std::ostringstream out;
    io::PromptOptions opt;
    opt.interactive = true;
    opt.in = &in;
    opt.out = &out;
    CHECK_THROWS_AS(io::prompt_intended_class("rec-5", {1, 2, 3, 4, 5}, opt),
                    InputError);
  }
}

TEST_CASE("prompt: no resolution path is an InputError") {
  CHECK_THROWS_AS(io::prompt_intended_class("rec-6", {1, 2}, {}), InputError);
  CHECK_THROWS_AS(io::prompt_intended_class("rec-7", {}, {}), InputError);
}

TEST_CASE("answer files parse id=Class lines with comments") {
  auto dir = make_temp_dir("answers");
  spit(dir / "a.txt", "# flagged gestures\nrec-1 = Push\nrec-2=SwipeLeft\n\n");
  auto answers = io::load_answer_file(dir / "a.txt");
  CHECK(answers.at("rec-1") == "Push");
  CHECK(answers.at("rec-2") == "SwipeLeft");
  spit(dir / "bad.txt", "rec-1 Push\n");
  CHECK_THROWS_AS(io::load_answer_file(dir / "bad.txt"), FormatError);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST_CASE("config parsing: sections, comments, lists, overrides") {
  auto dir = make_temp_dir("config");
  spit(dir / "exp.toml",
       "# experiment\n"
       "seed = 9\n"
       "stages = simulate, preprocess\n"
       "out_dir = \"results\"\n"
       "train_ratio = 0.8\n"
       "val_ratio = 0.1\n"
       "forget_ratio = 0.1\n"
       "\n"
       "[calibration]\n"
       "method = ewc\n"
       "n_train = 5   # per class\n"
       "\n"
       "[sweep]\n"
       "methods = [er, plain]\n"
       "n_train = [0, 5]\n"
       "n_user = 2\n"
       "\n"
       "[vae]\n"
       "enc_dims = 32, 16\n"
       "latent_dim = 4\n");
  io::ExperimentConfig cfg = io::load_config(dir / "exp.toml");
  CHECK(cfg.seed == 9);
  CHECK(cfg.stages == std::vector<std::string>{"simulate", "preprocess"});
  CHECK(cfg.out_dir == std::filesystem::path("results"));
  CHECK(cfg.calibration.method == "ewc");
  CHECK(cfg.calibration.n_train == 5);
  CHECK(cfg.sweep.methods == std::vector<std::string>{"er", "plain"});
  CHECK(cfg.sweep.n_train_values == std::vector<std::size_t>{0, 5});
  CHECK(cfg.sweep.n_user_values == std::vector<std::size_t>{2});
  CHECK(cfg.vae.enc_dims == std::vector<std::size_t>{32, 16});
  CHECK(cfg.vae.latent_dim == 4);
  // untouched defaults survive
  CHECK(cfg.calibration.lambda_ewc == 10.0);
  CHECK(cfg.vae.epochs == 250);
}

TEST_CASE("config validation fires before any work") {
  auto dir = make_temp_dir("configbad");
  spit(dir / "ratios.toml", "train_ratio = 0.8\nval_ratio = 0.3\nforget_ratio = 0.1\n");
  CHECK_THROWS_AS(io::load_config(dir / "ratios.toml"), ConfigError);

  spit(dir / "unknown.toml", "sed = 4\n");
  CHECK_THROWS_AS(io::load_config(dir / "unknown.toml"), ConfigError);

  spit(dir / "noeq.toml", "stages simulate\n");
  CHECK_THROWS_AS(io::load_config(dir / "noeq.toml"), ConfigError);

  spit(dir / "stage.toml", "stages = simulate, deploy\n");
  CHECK_THROWS_AS(io::load_config(dir / "stage.toml"), ConfigError);
}

TEST_CASE("config hash is stable, stage-agnostic, and parameter-sensitive") {
  io::ExperimentConfig a, b;
  CHECK(io::config_hash(a) == io::config_hash(b));
  b.stages = {"train"};
  CHECK(io::config_hash(a) == io::config_hash(b));  // stage subset resumable
  b.seed = 123;
  CHECK(io::config_hash(a) != io::config_hash(b));
  io::ExperimentConfig c;
  c.vae.lr = 0.002;
  CHECK(io::config_hash(a) != io::config_hash(c));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST_CASE("report emission: CSV and JSON agree; bad inputs rejected") {
  auto dir = make_temp_dir("report");
  std::vector<io::ReportRow> rows{
      {"exp-a", "gesture_acc", 0.9375, 0.012, "cfg123", "in456"},
      {"exp-a", "forget_gesture_acc", 0.88, 0.0, "cfg123", "in456"},
  };
  io::emit_report(rows, dir / "report");
  auto csv = io::read_report_csv(dir / "report.csv");
  auto js = io::read_report_json(dir / "report.json");
  REQUIRE(csv.size() == rows.size());
  REQUIRE(js.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(csv[i].metric == js[i].metric);
    CHECK(csv[i].value == js[i].value);
    CHECK(csv[i].std_dev == js[i].std_dev);
    CHECK(csv[i].config_hash == rows[i].config_hash);
    CHECK(js[i].input_hash == rows[i].input_hash);
  }

  CHECK_THROWS_AS(io::emit_report({}, dir / "empty"), DataError);
  std::vector<io::ReportRow> bad{{"e", "m", std::nan(""), 0.0, "c", "i"}};
  CHECK_THROWS_AS(io::emit_report(bad, dir / "nan"), NumericError);
}

// ---------------------------------------------------------------------------
// Experiment orchestration (tiny end-to-end synthetic run)
// ---------------------------------------------------------------------------

namespace {

io::ExperimentConfig tiny_config(const std::filesystem::path& out) {
  io::ExperimentConfig cfg;
  cfg.out_dir = out;
  cfg.seed = 17;
  cfg.jobs = 4;
  cfg.users = 1;
  cfg.train_per_class = 4;
  cfg.user_per_class = 4;
  cfg.anomalies_per_kind = 1;
  cfg.train_ratio = 0.5;
  cfg.val_ratio = 0.25;
  cfg.forget_ratio = 0.25;
  cfg.train.epochs = 25;
  cfg.sweep.methods = {"er"};
  cfg.sweep.n_train_values = {2};
  cfg.sweep.n_user_values = {2};
  cfg.sweep_runs = 1;
  cfg.calibration.method = "er";
  cfg.calibration.n_train = 2;
  cfg.calibration.n_user = 2;
  cfg.calibration.epochs = 2;
  cfg.vae.epochs = 8;
  cfg.vae.patience = 8;
  cfg.explain.n_samples = 8;
  cfg.explain.srv_per_class = 2;
  return cfg;
}

}  // namespace

TEST_CASE("run_experiment: full tiny pipeline, then hash-matched resume") {
  auto out = make_temp_dir("exp");
  io::ExperimentConfig cfg = tiny_config(out);
  std::ostringstream log;
  std::vector<io::ReportRow> rows = io::run_experiment(cfg, log);

  INFO(log.str());
  REQUIRE_FALSE(rows.empty());
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.value));
    CHECK(r.config_hash == io::config_hash(cfg));
    CHECK_FALSE(r.input_hash.empty());
  }

  io::ExperimentPaths p = io::experiment_paths(cfg);
  CHECK(std::filesystem::exists(p.baseline_model()));
  CHECK(std::filesystem::exists(p.vae_model()));
  CHECK(std::filesystem::exists(p.sweep_csv()));
  CHECK(std::filesystem::exists(p.detections()));
  CHECK(std::filesystem::exists(p.characterizations()));
  CHECK(std::filesystem::exists(p.feedback()));
  for (const std::string& s : io::stage_order())
    CHECK(std::filesystem::exists(p.stamp(s)));

  // sweep CSV carries the documented column layout
  {
    std::istringstream ss(slurp(p.sweep_csv()));
    std::string header;
    std::getline(ss, header);
    CHECK(header ==
          "method,n_train,n_user,user,run,seed,user_gesture_acc,forget_gesture_acc");
  }

  // every anomalous recording shows up in the detections with a category
  {
    nlohmann::json det = nlohmann::json::parse(slurp(p.detections()));
    std::size_t anomalous = 0;
    for (const auto& d : det)
      if (d.at("anomaly") != "none") ++anomalous;
    CHECK(anomalous == 3);  // one fast, one slow, one wrist
  }

  SECTION("rerun with the same config skips every stage and changes no bytes") {
    const std::string sweep_before = slurp(p.sweep_csv());
    const std::string report_before = slurp(out / "report.csv");
    const std::string model_before = slurp(p.baseline_model());
    std::ostringstream log2;
    std::vector<io::ReportRow> rows2 = io::run_experiment(cfg, log2);
    for (const std::string& s : io::stage_order())
      CHECK(log2.str().find(s + ": up to date, skipped") != std::string::npos);
    CHECK(slurp(p.sweep_csv()) == sweep_before);
    CHECK(slurp(out / "report.csv") == report_before);
    CHECK(slurp(p.baseline_model()) == model_before);
    REQUIRE(rows2.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      CHECK(rows2[i].value == rows[i].value);
  }

  SECTION("batch and answer-file prompts give identical characterizations") {
    const std::string chars_batch = slurp(p.characterizations());
    // answer file that repeats the metadata answers for every flagged id
    nlohmann::json det = nlohmann::json::parse(slurp(p.detections()));
    std::ostringstream answers;
    for (const auto& d : det)
      if (d.at("category") != "nominal")
        answers << d.at("id").get<std::string>() << " = "
                << d.at("intended_class").get<std::string>() << '\n';
    auto adir = make_temp_dir("expanswers");
    spit(adir / "answers.txt", answers.str());

    std::filesystem::remove(p.stamp("explain"));
    io::ExperimentConfig cfg2 = cfg;
    cfg2.stages = {"explain"};
    cfg2.answer_file = adir / "answers.txt";
    std::ostringstream log3;
    io::run_experiment(cfg2, log3);
    CHECK(slurp(p.characterizations()) == chars_batch);
  }

  SECTION("a changed parameter invalidates downstream stamps") {
    io::ExperimentConfig cfg2 = cfg;
    cfg2.seed = 18;  // different hash
    cfg2.stages = {"calibrate"};
    CHECK_THROWS_AS(io::run_experiment(cfg2, log), DependencyError);
  }
}

TEST_CASE("run_experiment: dependency and validation failures") {
  auto out = make_temp_dir("expdeps");
  io::ExperimentConfig cfg = tiny_config(out);

  SECTION("missing upstream stage names the dependency") {
    cfg.stages = {"train"};
    try {
      io::run_experiment(cfg);
      FAIL("expected DependencyError");
    } catch (const DependencyError& e) {
      CHECK(std::string(e.what()).find("preprocess") != std::string::npos);
      CHECK(std::string(e.what()).find("train") != std::string::npos);
    }
  }
  SECTION("broken ratios are rejected before any work") {
    cfg.train_ratio = 0.9;
    CHECK_THROWS_AS(io::run_experiment(cfg), ConfigError);
    CHECK_FALSE(std::filesystem::exists(out / "stamps"));
  }
}

// ---------------------------------------------------------------------------
// CLI exit codes
// ---------------------------------------------------------------------------

#ifdef RHGR_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const int rc = std::system((std::string(RHGR_CLI_PATH) + " " + args +
                              " >/dev/null 2>&1")
                                 .c_str());
  return WEXITSTATUS(rc);
}
}  // namespace

TEST_CASE("cli exit codes: 2 for config errors, 3 for data errors") {
  auto dir = make_temp_dir("cli");
  spit(dir / "bad.toml", "train_ratio = 0.9\nval_ratio = 0.3\nforget_ratio = 0.1\n");
  CHECK(run_cli("simulate --config " + (dir / "bad.toml").string() + " --out " +
                (dir / "out").string()) == 2);

  spit(dir / "ok.toml", "seed = 3\n");
  CHECK(run_cli("train --config " + (dir / "ok.toml").string() + " --out " +
                (dir / "empty").string()) == 3);

  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("bogus-subcommand") != 0);
}
#endif
