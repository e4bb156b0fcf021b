#include "mgrdn/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace mgr {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  throw std::invalid_argument("config " + where + ": " + msg);
}

void require_object(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(where, "expected an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) bad(where, "unknown key '" + k + "'");
  }
}

template <typename V>
void read(const Json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if constexpr (std::is_same_v<V, bool>) {
    if (!v.is_boolean()) bad(where + "." + key, "expected a boolean");
  } else if constexpr (std::is_integral_v<V>) {
    if (!v.is_number_integer()) bad(where + "." + key, "expected an integer");
    if constexpr (std::is_unsigned_v<V>) {
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        bad(where + "." + key, "expected a non-negative integer");
      }
    }
  } else if constexpr (std::is_floating_point_v<V>) {
    if (!v.is_number()) bad(where + "." + key, "expected a number");
  } else {
    if (!v.is_string()) bad(where + "." + key, "expected a string");
  }
  out = v.get<V>();
}

template <typename E, typename Parse>
void read_enum(const Json& j, const char* key, E& out, const std::string& where, Parse parse) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) bad(where + "." + key, "expected a string");
  try {
    out = parse(j.at(key).get<std::string>());
  } catch (const std::invalid_argument& e) {
    bad(where + "." + key, e.what());
  }
}

}  // namespace

Json to_json(const NetConfig& c) {
  return Json{{"in_channels", c.in_channels},
              {"depth", c.depth},
              {"enc_channels", c.enc_channels},
              {"dec_channels", c.dec_channels},
              {"conv_kind", std::string(to_string(c.conv_kind))},
              {"decoder_dropout", c.decoder_dropout},
              {"kernel", c.kernel},
              {"head_channels_1", c.head_channels_1},
              {"head_channels_2", c.head_channels_2}};
}

Json to_json(const MaskScheme& m) {
  return Json{{"kind", std::string(to_string(m.kind))},
              {"rate", m.rate},
              {"n2v_count", m.n2v_count},
              {"n2v_window", m.n2v_window}};
}

Json to_json(const NoiseSpec& n) {
  return Json{{"kind", std::string(to_string(n.kind))},
              {"sigma", n.sigma},
              {"sigma_lo", n.sigma_lo},
              {"sigma_hi", n.sigma_hi}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"scheme", std::string(to_string(c.scheme))},
              {"steps", c.steps},
              {"lr", c.lr},
              {"batch", c.batch},
              {"crop", c.crop},
              {"seed", c.seed},
              {"mask", to_json(c.mask)},
              {"net", to_json(c.net)},
              {"eval_passes", c.eval_passes},
              {"checkpoint_every", c.checkpoint_every},
              {"log_every", c.log_every},
              {"add_noise", c.add_noise},
              {"noise", to_json(c.noise)}};
}

void overlay(const Json& j, NetConfig& out) {
  const std::string w = "net";
  require_object(j, w, {"in_channels", "depth", "enc_channels", "dec_channels", "conv_kind", "decoder_dropout",
                        "kernel", "head_channels_1", "head_channels_2"});
  read(j, "in_channels", out.in_channels, w);
  read(j, "depth", out.depth, w);
  read(j, "enc_channels", out.enc_channels, w);
  read(j, "dec_channels", out.dec_channels, w);
  read_enum(j, "conv_kind", out.conv_kind, w, parse_conv_kind);
  read(j, "decoder_dropout", out.decoder_dropout, w);
  read(j, "kernel", out.kernel, w);
  read(j, "head_channels_1", out.head_channels_1, w);
  read(j, "head_channels_2", out.head_channels_2, w);
}

void overlay(const Json& j, MaskScheme& out) {
  const std::string w = "mask";
  require_object(j, w, {"kind", "rate", "n2v_count", "n2v_window"});
  read_enum(j, "kind", out.kind, w, parse_mask_kind);
  read(j, "rate", out.rate, w);
  read(j, "n2v_count", out.n2v_count, w);
  read(j, "n2v_window", out.n2v_window, w);
}

void overlay(const Json& j, NoiseSpec& out) {
  const std::string w = "noise";
  require_object(j, w, {"kind", "sigma", "sigma_lo", "sigma_hi"});
  read_enum(j, "kind", out.kind, w, parse_noise_kind);
  read(j, "sigma", out.sigma, w);
  read(j, "sigma_lo", out.sigma_lo, w);
  read(j, "sigma_hi", out.sigma_hi, w);
}

void overlay(const Json& j, TrainConfig& out) {
  const std::string w = "train";
  require_object(j, w, {"scheme", "steps", "lr", "batch", "crop", "seed", "mask", "net", "eval_passes",
                        "checkpoint_every", "log_every", "add_noise", "noise"});
  read_enum(j, "scheme", out.scheme, w, parse_train_scheme);
  read(j, "steps", out.steps, w);
  read(j, "lr", out.lr, w);
  read(j, "batch", out.batch, w);
  read(j, "crop", out.crop, w);
  read(j, "seed", out.seed, w);
  if (j.contains("mask")) overlay(j.at("mask"), out.mask);
  if (j.contains("net")) overlay(j.at("net"), out.net);
  read(j, "eval_passes", out.eval_passes, w);
  read(j, "checkpoint_every", out.checkpoint_every, w);
  read(j, "log_every", out.log_every, w);
  read(j, "add_noise", out.add_noise, w);
  if (j.contains("noise")) overlay(j.at("noise"), out.noise);
}

TrainConfig train_config_from_json(const Json& j, bool full_scale) {
  if (!j.is_object()) bad("train", "expected an object");
  TrainScheme scheme = TrainScheme::s2s_single;
  read_enum(j, "scheme", scheme, "train", parse_train_scheme);
  TrainConfig cfg = TrainConfig::defaults(scheme, full_scale);
  overlay(j, cfg);
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path, bool full_scale) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return train_config_from_json(j, full_scale);
}

}  // namespace mgr
