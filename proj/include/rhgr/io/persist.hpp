#pragma once

// Versioned model containers: a JSON header describing the architecture,
// normalization statistics and parameter layout, followed by a little-endian
// float32 blob with an FNV-1a checksum.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rhgr/anomaly/vae.hpp"
#include "rhgr/model/classifier.hpp"

namespace rhgr::io {

inline constexpr int kModelFormatVersion = 1;
inline constexpr char kModelMagic[9] = "RHGRMDL\n";

namespace detail {

inline std::uint64_t fnv1a(const std::vector<char>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline nlohmann::json stats_json(const model::FeatureStats& st) {
  return {{"mean", st.mean}, {"stdev", st.stdev}, {"min", st.min}, {"max", st.max}};
}

inline model::FeatureStats stats_from_json(const nlohmann::json& j) {
  model::FeatureStats st;
  for (std::size_t i = 0; i < model::kFeatDim; ++i) {
    st.mean[i] = j.at("mean").at(i);
    st.stdev[i] = j.at("stdev").at(i);
    st.min[i] = j.at("min").at(i);
    st.max[i] = j.at("max").at(i);
  }
  return st;
}

// A named view over every tensor that must round-trip.
struct TensorRef {
  std::string name;
  double* data;
  std::size_t rows, cols;
};

inline std::vector<TensorRef> tensors_of(model::GruModel& m) {
  std::vector<TensorRef> t;
  auto add = [&t](const std::string& n, Matrix& mat) {
    t.push_back({n, mat.data.data(), mat.rows, mat.cols});
  };
  add("gru.wz", m.gru.wz);
  add("gru.wr", m.gru.wr);
  add("gru.wh", m.gru.wh);
  add("gru.uz", m.gru.uz);
  add("gru.ur", m.gru.ur);
  add("gru.uh", m.gru.uh);
  add("gru.bz", m.gru.bz);
  add("gru.br", m.gru.br);
  add("gru.bh", m.gru.bh);
  add("dense.w", m.dense.w);
  add("dense.b", m.dense.b);
  return t;
}

inline std::vector<TensorRef> tensors_of(anomaly::VaeModel& m) {
  std::vector<TensorRef> t;
  auto add = [&t](const std::string& n, Matrix& mat) {
    t.push_back({n, mat.data.data(), mat.rows, mat.cols});
  };
  auto add_vec = [&t](const std::string& n, Vec& v) {
    t.push_back({n, v.data(), 1, v.size()});
  };
  auto add_bn = [&](const std::string& p, anomaly::VaeBn& bn) {
    add(p + ".gamma", bn.gamma);
    add(p + ".beta", bn.beta);
    add_vec(p + ".running_mean", bn.bn.running_mean);
    add_vec(p + ".running_var", bn.bn.running_var);
  };
  for (std::size_t i = 0; i < m.enc.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    add(p + ".w", m.enc[i].w);
    add(p + ".b", m.enc[i].b);
    add_bn(p + ".bn", m.enc_bn[i]);
  }
  add("mu.w", m.mu_head.w);
  add("mu.b", m.mu_head.b);
  add("logvar.w", m.logvar_head.w);
  add("logvar.b", m.logvar_head.b);
  for (std::size_t i = 0; i < m.dec.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    add(p + ".w", m.dec[i].w);
    add(p + ".b", m.dec[i].b);
    add_bn(p + ".bn", m.dec_bn[i]);
  }
  add("out.w", m.out.w);
  add("out.b", m.out.b);
  return t;
}

inline void write_container(const std::filesystem::path& path, nlohmann::json header,
                            const std::vector<TensorRef>& tensors) {
  std::vector<char> blob;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : tensors) {
    params.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    for (std::size_t i = 0; i < t.rows * t.cols; ++i) {
      const float f = static_cast<float>(t.data[i]);
      char buf[4];
      std::memcpy(buf, &f, 4);
      blob.insert(blob.end(), buf, buf + 4);
    }
  }
  header["format_version"] = kModelFormatVersion;
  header["params"] = std::move(params);
  header["blob_bytes"] = blob.size();
  char cks[32];
  std::snprintf(cks, sizeof cks, "%016llx",
                static_cast<unsigned long long>(fnv1a(blob)));
  header["checksum"] = cks;
  const std::string htxt = header.dump();

  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path());
  // atomic: write a temp file next to the target, then rename
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("persist_model: cannot open " + tmp.string());
    os.write(kModelMagic, 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(htxt.size());
    os.write(reinterpret_cast<const char*>(&hlen), 4);
    os.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw DataError("persist_model: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_container(const std::filesystem::path& path,
                                     std::vector<char>& blob) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_model: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError("load_model: bad magic in " + path.string());
  std::uint32_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 4);
  std::string htxt(hlen, '\0');
  is.read(htxt.data(), hlen);
  if (!is) throw CorruptError("load_model: truncated header");
  nlohmann::json header = nlohmann::json::parse(htxt, nullptr, false);
  if (header.is_discarded()) throw FormatError("load_model: unparseable header");
  if (header.value("format_version", -1) != kModelFormatVersion)
    throw VersionError("load_model: format version " +
                       header.value("format_version", nlohmann::json{}).dump() +
                       " not supported");
  const std::size_t nbytes = header.at("blob_bytes");
  blob.resize(nbytes);
  is.read(blob.data(), static_cast<std::streamsize>(nbytes));
  if (static_cast<std::size_t>(is.gcount()) != nbytes)
    throw CorruptError("load_model: truncated parameter blob");
  char cks[32];
  std::snprintf(cks, sizeof cks, "%016llx",
                static_cast<unsigned long long>(fnv1a(blob)));
  if (header.at("checksum") != std::string(cks))
    throw CorruptError("load_model: checksum mismatch");
  return header;
}

inline void fill_tensors(const nlohmann::json& header, const std::vector<char>& blob,
                         const std::vector<TensorRef>& tensors) {
  const auto& params = header.at("params");
  if (params.size() != tensors.size())
    throw CorruptError("load_model: parameter list mismatch");
  std::size_t off = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& p = params.at(i);
    if (p.at("name") != tensors[i].name || p.at("rows") != tensors[i].rows ||
        p.at("cols") != tensors[i].cols)
      throw CorruptError("load_model: tensor layout mismatch at " + tensors[i].name);
    for (std::size_t k = 0; k < tensors[i].rows * tensors[i].cols; ++k) {
      float f;
      if (off + 4 > blob.size()) throw CorruptError("load_model: blob underrun");
      std::memcpy(&f, blob.data() + off, 4);
      off += 4;
      tensors[i].data[k] = static_cast<double>(f);
    }
  }
}

}  // namespace detail

inline void persist_model(model::GruModel& m, const std::filesystem::path& path) {
  nlohmann::json header{{"kind", "gru_classifier"},
                        {"input_dim", model::kFeatDim},
                        {"gru_hidden", model::kHiddenDim},
                        {"dense_out", kNumClasses},
                        {"window_len", model::kWindowLen},
                        {"stats", detail::stats_json(m.stats)}};
  detail::write_container(path, std::move(header), detail::tensors_of(m));
}

inline model::GruModel load_gru_model(const std::filesystem::path& path) {
  std::vector<char> blob;
  nlohmann::json header = detail::read_container(path, blob);
  if (header.value("kind", "") != "gru_classifier")
    throw FormatError("load_model: not a classifier container");
  model::GruModel m;
  if (header.at("gru_hidden") != model::kHiddenDim ||
      header.at("dense_out") != static_cast<std::size_t>(kNumClasses))
    throw VersionError("load_model: architecture mismatch");
  m.stats = detail::stats_from_json(header.at("stats"));
  detail::fill_tensors(header, blob, detail::tensors_of(m));
  return m;
}

inline void persist_model(anomaly::VaeModel& m, const std::filesystem::path& path) {
  nlohmann::json header{{"kind", "vae"},
                        {"input_dim", m.cfg.input_dim},
                        {"enc_dims", m.cfg.enc_dims},
                        {"latent_dim", m.cfg.latent_dim},
                        {"dropout", m.cfg.dropout},
                        {"dropout_layers", m.cfg.dropout_layers},
                        {"bn_momentum", m.cfg.bn_momentum},
                        {"stats", detail::stats_json(m.stats)}};
  detail::write_container(path, std::move(header), detail::tensors_of(m));
}

inline anomaly::VaeModel load_vae_model(const std::filesystem::path& path) {
  std::vector<char> blob;
  nlohmann::json header = detail::read_container(path, blob);
  if (header.value("kind", "") != "vae")
    throw FormatError("load_model: not a vae container");
  anomaly::VaeConfig cfg;
  cfg.input_dim = header.at("input_dim");
  cfg.enc_dims = header.at("enc_dims").get<std::vector<std::size_t>>();
  cfg.latent_dim = header.at("latent_dim");
  cfg.dropout = header.at("dropout");
  cfg.dropout_layers = header.at("dropout_layers");
  cfg.bn_momentum = header.at("bn_momentum");
  anomaly::VaeModel m;
  Rng rng(0);
  m.build(cfg, rng);
  m.stats = detail::stats_from_json(header.at("stats"));
  detail::fill_tensors(header, blob, detail::tensors_of(m));
  return m;
}

}  // namespace rhgr::io
