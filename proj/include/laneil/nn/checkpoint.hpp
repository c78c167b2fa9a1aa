#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "laneil/core/binary.hpp"
#include "laneil/nn/model.hpp"
#include "laneil/nn/optim.hpp"

namespace laneil::nn {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.layers) {
    nlohmann::json j{{"kind", kind_name(l.kind)}};
    switch (l.kind) {
      case LayerSpec::Kind::IC:
        j["p"] = l.p;
        j["spatial"] = l.spatial;
        break;
      case LayerSpec::Kind::Conv:
        j["filters"] = l.units;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        break;
      case LayerSpec::Kind::FC: j["units"] = l.units; break;
      default: break;
    }
    layers.push_back(j);
  }
  return {{"input", cfg.input}, {"layers", layers}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  auto bad = [](const std::string& m) { fail(ErrorKind::Config, "model config: " + m); };
  if (!j.is_object()) bad("expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "input" && it.key() != "layers") bad("unknown key '" + it.key() + "'");
  ModelConfig cfg;
  try {
    cfg.input = j.at("input").get<Shape>();
    for (const auto& l : j.at("layers")) {
      const std::string kind = l.at("kind").get<std::string>();
      auto allow = [&](std::initializer_list<const char*> keys) {
        for (auto it = l.begin(); it != l.end(); ++it) {
          bool ok = it.key() == "kind";
          for (const char* k : keys) ok |= it.key() == k;
          if (!ok) bad("unknown key '" + it.key() + "' in " + kind + " layer");
        }
      };
      if (kind == "ic") {
        allow({"p", "spatial"});
        cfg.layers.push_back(LayerSpec::ic(l.at("p").get<double>(), l.at("spatial").get<bool>()));
      } else if (kind == "conv") {
        allow({"filters", "kernel", "stride"});
        cfg.layers.push_back(LayerSpec::conv(l.at("filters").get<std::size_t>(), l.at("kernel").get<std::size_t>(),
                                             l.at("stride").get<std::size_t>()));
      } else if (kind == "relu") {
        allow({});
        cfg.layers.push_back(LayerSpec::relu());
      } else if (kind == "flatten") {
        allow({});
        cfg.layers.push_back(LayerSpec::flatten());
      } else if (kind == "fc") {
        allow({"units"});
        cfg.layers.push_back(LayerSpec::fc(l.at("units").get<std::size_t>()));
      } else {
        bad("unknown layer kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
  return cfg;
}

// Checkpoint file:
//   "IMNN" | version u32 = 1 | config length u32 | config JSON
//   | tensor count u32, then per parameter tensor: length u32, f32 values
//   | the same for BatchNorm running mean/var
//   | optimizer flag u8; if set: step u32, then first and second moments
//     in parameter order, each as length u32 + f32 values
namespace imnn {
inline constexpr std::string_view kMagic = "IMNN";
inline constexpr std::uint32_t kVersion = 1;
}  // namespace imnn

struct Checkpoint {
  Model<float> model;
  std::optional<AdamState<float>> adam;
};

namespace detail {

inline void put_tensors(ByteWriter& w, const std::vector<const Tensor<float>*>& ts) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
  for (const auto* t : ts) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->size()));
    w.floats(t->data(), t->size());
  }
}

inline void get_tensors(ByteReader& r, const std::vector<Tensor<float>*>& ts, const std::string& what) {
  using Reason = FormatError::Reason;
  const std::size_t at = r.offset();
  const auto n = r.get<std::uint32_t>();
  if (n != ts.size())
    throw FormatError(Reason::BadHeader, at,
                      what + ": " + std::to_string(n) + " tensors, config needs " + std::to_string(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t len_at = r.offset();
    const auto len = r.get<std::uint32_t>();
    if (len != ts[i]->size())
      throw FormatError(Reason::BadHeader, len_at,
                        what + " tensor " + std::to_string(i) + " has " + std::to_string(len) + " values, expected " +
                            std::to_string(ts[i]->size()));
    r.floats(ts[i]->data(), len);
  }
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(Model<float>& model, const AdamState<float>* adam = nullptr) {
  ByteWriter w;
  w.bytes(imnn::kMagic);
  w.put<std::uint32_t>(imnn::kVersion);
  const std::string cfg = config_to_json(model.config()).dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  std::vector<const Tensor<float>*> params, buffers;
  for (auto& p : model.params()) params.push_back(p.value);
  for (auto* b : model.buffers()) buffers.push_back(b);
  detail::put_tensors(w, params);
  detail::put_tensors(w, buffers);
  const bool has_adam = adam && adam->t > 0;
  w.put<std::uint8_t>(has_adam ? 1 : 0);
  if (has_adam) {
    require(adam->m.size() == params.size() && adam->v.size() == params.size(), ErrorKind::InvalidArgument,
            "optimizer state does not match the model");
    w.put<std::uint32_t>(adam->t);
    std::vector<const Tensor<float>*> m, v;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.push_back(&adam->m[i]);
      v.push_back(&adam->v[i]);
    }
    detail::put_tensors(w, m);
    detail::put_tensors(w, v);
  }
  return std::move(w.buffer());
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& buf) {
  using Reason = FormatError::Reason;
  ByteReader r(buf);
  if (r.remaining() < 4 || r.bytes(4) != imnn::kMagic) throw FormatError(Reason::BadMagic, 0, "bad magic, expected IMNN");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>();
  if (version != imnn::kVersion)
    throw FormatError(Reason::BadVersion, version_at, "unsupported IMNN version " + std::to_string(version));
  const std::size_t cfg_at = r.offset();
  const auto cfg_len = r.get<std::uint32_t>();
  const std::string cfg_text = r.bytes(cfg_len);
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const std::exception& e) {
    throw FormatError(Reason::BadHeader, cfg_at, std::string("bad model config: ") + e.what());
  }
  Checkpoint ck{Model<float>(cfg), std::nullopt};
  std::vector<Tensor<float>*> params;
  for (auto& p : ck.model.params()) params.push_back(p.value);
  detail::get_tensors(r, params, "parameters");
  const std::size_t buffers_at = r.offset();
  detail::get_tensors(r, ck.model.buffers(), "statistics");
  for (auto* b : ck.model.buffers())
    for (float v : b->values())
      if (!std::isfinite(v)) throw FormatError(Reason::InvalidValue, buffers_at, "non-finite batchnorm statistic");
  const std::size_t flag_at = r.offset();
  const auto flag = r.get<std::uint8_t>();
  if (flag > 1) throw FormatError(Reason::BadHeader, flag_at, "bad optimizer flag");
  if (flag == 1) {
    AdamState<float> st;
    st.t = r.get<std::uint32_t>();
    for (auto* p : params) {
      st.m.emplace_back(p->shape());
      st.v.emplace_back(p->shape());
    }
    std::vector<Tensor<float>*> m, v;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.push_back(&st.m[i]);
      v.push_back(&st.v[i]);
    }
    detail::get_tensors(r, m, "first moments");
    detail::get_tensors(r, v, "second moments");
    ck.adam = std::move(st);
  }
  if (r.remaining() != 0) throw FormatError(Reason::BadHeader, r.offset(), "trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::string& path, Model<float>& model, const AdamState<float>* adam = nullptr) {
  write_file(path, encode_checkpoint(model, adam));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(e.reason(), e.offset(), path + ": " + e.what());
  }
}

}  // namespace laneil::nn
