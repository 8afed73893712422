// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/checkpoint.hpp"

#include "vclone/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vclone::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'C', 'L', 'O', 'N', 'E', 'C', 'K'};

}  // namespace

void save(const std::filesystem::path& path, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::ordered_json header;
  header["kind"] = c.kind;
  header["step"] = c.step;
  header["meta"] = c.meta;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : c.tensors) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  // Write to a temporary name first so a crash never leaves a partial file
  // under the final name.
  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, m] : c.tensors) {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Container load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError("not a vclone checkpoint: " + path.string());
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  Container c;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    c.kind = header.at("kind").get<std::string>();
    c.step = header.at("step").get<std::int64_t>();
    c.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      ag::Matrix m(entry.at("rows").get<Eigen::Index>(), entry.at("cols").get<Eigen::Index>());
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
      c.tensors.emplace(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (!in) throw DataError("truncated checkpoint payload: " + path.string());
  return c;
}

void put_params(Container& c, const std::string& prefix, const nn::ParamStore& store) {
  for (const auto& [name, p] : store.all()) c.tensors[prefix + name] = p.value();
}

void get_params(const Container& c, const std::string& prefix, nn::ParamStore& store) {
  for (const auto& [name, p] : store.all()) {
    auto it = c.tensors.find(prefix + name);
    if (it == c.tensors.end()) throw DataError("checkpoint lacks tensor " + prefix + name);
    if (it->second.rows() != p.rows() || it->second.cols() != p.cols()) {
      throw DataError("checkpoint tensor " + prefix + name + " has the wrong shape");
    }
    ag::Var v = p;
    v.mutable_value() = it->second;
  }
}

void put_optimizer(Container& c, const std::string& prefix, const nn::Adam& adam) {
  c.meta[prefix + "optimizer"] = {{"config", adam.config()}, {"steps", adam.steps()}};
  for (const auto& [name, m] : adam.first_moment()) c.tensors[prefix + "adam.m/" + name] = m;
  for (const auto& [name, v] : adam.second_moment()) c.tensors[prefix + "adam.v/" + name] = v;
}

nn::Adam get_optimizer(const Container& c, const std::string& prefix) {
  const std::string key = prefix + "optimizer";
  if (!c.meta.contains(key)) return nn::Adam(nn::AdamConfig{});
  nn::Adam adam(c.meta.at(key).at("config").get<nn::AdamConfig>());
  adam.set_steps(c.meta.at(key).at("steps").get<std::int64_t>());
  const std::string m_prefix = prefix + "adam.m/";
  const std::string v_prefix = prefix + "adam.v/";
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind(m_prefix, 0) == 0) adam.first_moment()[name.substr(m_prefix.size())] = t;
    if (name.rfind(v_prefix, 0) == 0) adam.second_moment()[name.substr(v_prefix.size())] = t;
  }
  return adam;
}

}  // namespace vclone::checkpoint
