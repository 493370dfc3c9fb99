#include "retssl/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace retssl::model {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'S', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_blob(std::ostream& os, const nn::Mat<float>& m) {
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(float) * m.size()));
}

void read_blob(std::istream& is, nn::Mat<float>& m) {
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!is) throw CheckpointError("checkpoint truncated while reading parameter blob");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated while reading header");
  return v;
}

void collect_diffs(const nlohmann::json& a, const nlohmann::json& b, const std::string& path,
                   std::vector<std::string>& out) {
  if (a.is_object() && b.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()))
        out.push_back(path + "/" + it.key() + ": missing in stored config");
      else
        collect_diffs(it.value(), b.at(it.key()), path + "/" + it.key(), out);
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key()))
        out.push_back(path + "/" + it.key() + ": missing in current config");
    return;
  }
  if (a != b)
    out.push_back(path + ": current=" + a.dump() + " stored=" + b.dump());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  nlohmann::json meta;
  meta["schema_version"] = 1;
  meta["epoch"] = data.epoch;
  meta["global_step"] = data.global_step;
  meta["seed"] = data.seed;
  meta["model_config"] = data.model.cfg;
  meta["train_config"] = data.train_config;
  meta["has_optimizer"] = data.optimizer.has_value();
  meta["optimizer_steps"] = data.optimizer ? data.optimizer->step_count : 0;
  auto& plist = meta["params"] = nlohmann::json::array();
  for (const auto& e : data.model.params.entries)
    plist.push_back({{"name", e.name},
                     {"rows", e.value.rows()},
                     {"cols", e.value.cols()},
                     {"decay", e.decay}});

  const std::string meta_str = meta.dump();
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open for writing: " + tmp.string());
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(meta_str.size()));
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& e : data.model.params.entries) write_blob(os, e.value);
    if (data.optimizer) {
      for (const auto& m : data.optimizer->m) write_blob(os, m);
      for (const auto& v : data.optimizer->v) write_blob(os, v);
    }
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = read_pod<std::uint64_t>(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw CheckpointError("checkpoint truncated in metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }

  CheckpointData data;
  try {
    ModelConfig cfg = meta.at("model_config").get<ModelConfig>();
    data.model = VitModel<float>::init(cfg, 0);
    data.epoch = meta.at("epoch").get<int>();
    data.global_step = meta.at("global_step").get<long>();
    data.seed = meta.at("seed").get<std::uint64_t>();
    data.train_config = meta.value("train_config", nlohmann::json());

    const auto& plist = meta.at("params");
    if (plist.size() != data.model.params.count())
      throw CheckpointError("checkpoint parameter list does not match the model layout");
    for (size_t i = 0; i < data.model.params.count(); ++i) {
      auto& e = data.model.params.entries[i];
      const auto& pj = plist.at(i);
      if (pj.at("name").get<std::string>() != e.name ||
          pj.at("rows").get<Eigen::Index>() != e.value.rows() ||
          pj.at("cols").get<Eigen::Index>() != e.value.cols())
        throw CheckpointError("checkpoint parameter mismatch at " + e.name);
    }
    for (auto& e : data.model.params.entries) read_blob(is, e.value);

    if (meta.at("has_optimizer").get<bool>()) {
      OptimizerBlobs opt;
      opt.step_count = meta.at("optimizer_steps").get<long>();
      for (const auto& e : data.model.params.entries) {
        opt.m.push_back(nn::Mat<float>::Zero(e.value.rows(), e.value.cols()));
        read_blob(is, opt.m.back());
      }
      for (const auto& e : data.model.params.entries) {
        opt.v.push_back(nn::Mat<float>::Zero(e.value.rows(), e.value.cols()));
        read_blob(is, opt.v.back());
      }
      data.optimizer = std::move(opt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  return data;
}

void require_matching_config(const nlohmann::json& current, const nlohmann::json& stored) {
  std::vector<std::string> diffs;
  collect_diffs(current, stored, "", diffs);
  if (diffs.empty()) return;
  std::string msg = "resume refused, config differs from checkpoint:";
  for (const auto& d : diffs) msg += "\n  " + d;
  throw CheckpointError(msg);
}

}  // namespace retssl::model
