#include "leand/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace leand {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& text, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (seps.find(c) != std::string::npos) {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s;
}

std::string join_indices(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_number(const std::string& text) {
  const std::string t = trim(text);
  const auto caret = t.find('^');
  if (caret != std::string::npos) {
    const double base = parse_number(t.substr(0, caret));
    const double exponent = parse_number(t.substr(caret + 1));
    return std::pow(base, exponent);
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : tokens(text, ", \t")) {
    const auto dots = tok.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_number(tok));
      continue;
    }
    const std::string lo = tok.substr(0, dots);
    const std::string hi = tok.substr(dots + 2);
    const auto c1 = lo.find('^');
    const auto c2 = hi.find('^');
    if (c1 == std::string::npos || c2 == std::string::npos || lo.substr(0, c1) != hi.substr(0, c2)) {
      throw ConfigError("range '" + tok + "' must look like b^i..b^j");
    }
    const double base = parse_number(lo.substr(0, c1));
    const long long a = parse_integer(tok, lo.substr(c1 + 1));
    const long long b = parse_integer(tok, hi.substr(c2 + 1));
    if (b < a) throw ConfigError("range '" + tok + "' is empty");
    for (long long k = a; k <= b; ++k) out.push_back(std::pow(base, static_cast<double>(k)));
  }
  return out;
}

std::vector<Index> parse_architecture(const std::string& text) {
  std::vector<Index> out;
  for (const auto& tok : tokens(text, "(), \t")) {
    const long long v = parse_integer("architecture", tok);
    if (v < 1) throw ConfigError("architecture widths must be positive");
    out.push_back(static_cast<Index>(v));
  }
  if (out.empty()) throw ConfigError("architecture needs at least one layer width");
  return out;
}

std::vector<std::vector<Index>> parse_architecture_list(const std::string& text) {
  std::vector<std::vector<Index>> out;
  if (text.find('(') != std::string::npos) {
    std::size_t pos = 0;
    while ((pos = text.find('(', pos)) != std::string::npos) {
      const auto end = text.find(')', pos);
      if (end == std::string::npos) throw ConfigError("unbalanced parenthesis in architecture list");
      out.push_back(parse_architecture(text.substr(pos + 1, end - pos - 1)));
      pos = end + 1;
    }
  } else {
    for (const auto& group : tokens(text, ";")) out.push_back(parse_architecture(group));
  }
  if (out.empty()) throw ConfigError("empty architecture list");
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

RunConfig apply_config(RunConfig c, const ConfigMap& entries) {
  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  auto real = [](double& target) -> Setter {
    return [&target](const std::string& k, const std::string& v) {
      try {
        target = parse_number(v);
      } catch (const ConfigError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
  };
  auto integer = [](auto& target) -> Setter {
    return [&target](const std::string& k, const std::string& v) {
      const long long x = parse_integer(k, v);
      if (x < 0) throw ConfigError(k + ": must be nonnegative");
      target = static_cast<std::remove_reference_t<decltype(target)>>(x);
    };
  };
  auto flag = [](bool& target) -> Setter {
    return [&target](const std::string& k, const std::string& v) { target = parse_bool(k, v); };
  };
  auto text = [](std::string& target) -> Setter {
    return [&target](const std::string&, const std::string& v) { target = v; };
  };
  auto optimizer = [](OptimizerKind& target) -> Setter {
    return [&target](const std::string&, const std::string& v) { target = parse_optimizer(v); };
  };

  DetectorConfig& d = c.detector;
  std::map<std::string, Setter> setters{
      {"data", text(c.data)},
      {"label", text(c.label)},
      {"anomaly_value", [&](const std::string&, const std::string& v) { c.anomaly_value = v; }},
      {"out", text(c.out)},
      {"checkpoint", text(c.checkpoint)},
      {"seed", [&](const std::string& k, const std::string& v) {
         const long long x = parse_integer(k, v);
         if (x < 0) throw ConfigError(k + ": must be nonnegative");
         c.split.seed = static_cast<std::uint64_t>(x);
         d.seed = static_cast<std::uint64_t>(x);
       }},
      {"train_fraction", real(c.split.train_fraction)},
      {"stratified", flag(c.split.stratified)},
      {"encoder", [&](const std::string&, const std::string& v) { d.architecture.encoder_sizes = parse_architecture(v); }},
      {"activation", [&](const std::string&, const std::string& v) { d.architecture.activation = parse_activation(v); }},
      {"allow_overcomplete", flag(d.architecture.allow_overcomplete)},
      {"sigma", [&](const std::string& k, const std::string& v) {
         try {
           d.gamma = gamma_from_sigma(parse_number(v));
         } catch (const Error& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"gamma", real(d.gamma)},
      {"rff_dim", integer(d.rff_dim)},
      {"num_eigs", integer(d.num_eigs)},
      {"alpha", real(d.alpha)},
      {"reconstruction_weight", real(d.reconstruction_weight)},
      {"anomaly_rate", [&](const std::string& k, const std::string& v) {
         if (trim(v) == "auto") {
           d.anomaly_rate.reset();
         } else {
           double r = 0.0;
           real(r)(k, v);
           d.anomaly_rate = r;
         }
       }},
      {"normal_only", flag(d.normal_only)},
      {"pretrain.epochs", integer(d.pretrain.epochs)},
      {"pretrain.learning_rate", real(d.pretrain.learning_rate)},
      {"pretrain.batch_size", integer(d.pretrain.batch_size)},
      {"pretrain.optimizer", optimizer(d.pretrain.optimizer)},
      {"pretrain.early_stop_tolerance", real(d.pretrain.early_stop_tolerance)},
      {"pretrain.early_stop_window", integer(d.pretrain.early_stop_window)},
      {"aff.pairs", integer(d.aff.pairs)},
      {"aff.holdout_fraction", real(d.aff.holdout_fraction)},
      {"aff.epochs", integer(d.aff.epochs)},
      {"aff.learning_rate", real(d.aff.learning_rate)},
      {"aff.batch_size", integer(d.aff.batch_size)},
      {"aff.optimizer", optimizer(d.aff.optimizer)},
      {"joint.epochs", integer(d.joint.epochs)},
      {"joint.learning_rate", real(d.joint.learning_rate)},
      {"joint.batch_size", integer(d.joint.batch_size)},
      {"joint.optimizer", optimizer(d.joint.optimizer)},
      {"joint.early_stop_tolerance", real(d.joint.early_stop_tolerance)},
      {"joint.early_stop_window", integer(d.joint.early_stop_window)},
      {"joint.train_feature_map", flag(d.joint.train_feature_map)},
      {"joint.freeze_autoencoder", flag(d.joint.freeze_autoencoder)},
      {"kde.kernel", [&](const std::string&, const std::string& v) { c.kde.kernel = parse_kde_kernel(v); }},
      {"kde.bandwidth", [&](const std::string& k, const std::string& v) {
         if (trim(v) == "scott") {
           c.kde.bandwidth.reset();
         } else {
           double h = 0.0;
           real(h)(k, v);
           c.kde.bandwidth = h;
         }
       }},
      {"auc", flag(c.with_auc)},
      {"workers", integer(c.workers)},
      {"grid.sigma", [&](const std::string&, const std::string& v) { c.grid.sigmas = parse_number_list(v); }},
      {"grid.encoder", [&](const std::string&, const std::string& v) { c.grid.architectures = parse_architecture_list(v); }},
      {"grid.rff_dim", [&](const std::string& k, const std::string& v) {
         c.grid.rff_dims.clear();
         for (const auto& t : tokens(v, ", \t")) c.grid.rff_dims.push_back(static_cast<Index>(parse_integer(k, t)));
       }},
      {"grid.num_eigs", [&](const std::string& k, const std::string& v) {
         c.grid.num_eigs.clear();
         for (const auto& t : tokens(v, ", \t")) c.grid.num_eigs.push_back(static_cast<Index>(parse_integer(k, t)));
       }},
      {"grid.alpha", [&](const std::string&, const std::string& v) { c.grid.alphas = parse_number_list(v); }},
      {"grid.anomaly_rate", [&](const std::string&, const std::string& v) {
         c.grid_rate_auto = trim(v) == "auto";
         c.grid.anomaly_rates = c.grid_rate_auto ? std::vector<double>{} : parse_number_list(v);
       }},
      {"grid.anomaly_rate_steps", integer(c.grid_rate_steps)},
      {"grid.anomaly_rate_step", real(c.grid_rate_step)},
      {"grid.cap", integer(c.grid.cap)},
      {"grid.selection_fraction", real(c.selection_fraction)},
  };

  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  return c;
}

std::string to_text(const RunConfig& c) {
  const DetectorConfig& d = c.detector;
  std::ostringstream o;
  auto kv = [&o](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto yes = [](bool b) { return std::string(b ? "true" : "false"); };
  kv("data", c.data);
  kv("label", c.label);
  if (c.anomaly_value) kv("anomaly_value", *c.anomaly_value);
  kv("out", c.out);
  if (!c.checkpoint.empty()) kv("checkpoint", c.checkpoint);
  kv("seed", std::to_string(c.split.seed));
  kv("train_fraction", format_number(c.split.train_fraction));
  kv("stratified", yes(c.split.stratified));
  kv("encoder", join_indices(d.architecture.encoder_sizes));
  kv("activation", std::string(to_string(d.architecture.activation)));
  kv("allow_overcomplete", yes(d.architecture.allow_overcomplete));
  kv("gamma", format_number(d.gamma));
  kv("rff_dim", std::to_string(d.rff_dim));
  kv("num_eigs", std::to_string(d.num_eigs));
  kv("alpha", format_number(d.alpha));
  kv("reconstruction_weight", format_number(d.reconstruction_weight));
  kv("anomaly_rate", d.anomaly_rate ? format_number(*d.anomaly_rate) : "auto");
  kv("normal_only", yes(d.normal_only));
  kv("pretrain.epochs", std::to_string(d.pretrain.epochs));
  kv("pretrain.learning_rate", format_number(d.pretrain.learning_rate));
  kv("pretrain.batch_size", std::to_string(d.pretrain.batch_size));
  kv("pretrain.optimizer", std::string(to_string(d.pretrain.optimizer)));
  kv("pretrain.early_stop_tolerance", format_number(d.pretrain.early_stop_tolerance));
  kv("pretrain.early_stop_window", std::to_string(d.pretrain.early_stop_window));
  kv("aff.pairs", std::to_string(d.aff.pairs));
  kv("aff.holdout_fraction", format_number(d.aff.holdout_fraction));
  kv("aff.epochs", std::to_string(d.aff.epochs));
  kv("aff.learning_rate", format_number(d.aff.learning_rate));
  kv("aff.batch_size", std::to_string(d.aff.batch_size));
  kv("aff.optimizer", std::string(to_string(d.aff.optimizer)));
  kv("joint.epochs", std::to_string(d.joint.epochs));
  kv("joint.learning_rate", format_number(d.joint.learning_rate));
  kv("joint.batch_size", std::to_string(d.joint.batch_size));
  kv("joint.optimizer", std::string(to_string(d.joint.optimizer)));
  kv("joint.early_stop_tolerance", format_number(d.joint.early_stop_tolerance));
  kv("joint.early_stop_window", std::to_string(d.joint.early_stop_window));
  kv("joint.train_feature_map", yes(d.joint.train_feature_map));
  kv("joint.freeze_autoencoder", yes(d.joint.freeze_autoencoder));
  kv("kde.kernel", std::string(to_string(c.kde.kernel)));
  kv("kde.bandwidth", c.kde.bandwidth ? format_number(*c.kde.bandwidth) : "scott");
  kv("auc", yes(c.with_auc));
  kv("workers", std::to_string(c.workers));
  if (!c.grid.sigmas.empty()) kv("grid.sigma", join_numbers(c.grid.sigmas));
  if (!c.grid.architectures.empty()) {
    std::string s;
    for (const auto& a : c.grid.architectures) s += (s.empty() ? "(" : " (") + join_indices(a) + ")";
    kv("grid.encoder", s);
  }
  auto join_idx_list = [](const std::vector<Index>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s;
  };
  if (!c.grid.rff_dims.empty()) kv("grid.rff_dim", join_idx_list(c.grid.rff_dims));
  if (!c.grid.num_eigs.empty()) kv("grid.num_eigs", join_idx_list(c.grid.num_eigs));
  if (!c.grid.alphas.empty()) kv("grid.alpha", join_numbers(c.grid.alphas));
  if (c.grid_rate_auto) {
    kv("grid.anomaly_rate", "auto");
  } else if (!c.grid.anomaly_rates.empty()) {
    kv("grid.anomaly_rate", join_numbers(c.grid.anomaly_rates));
  }
  kv("grid.anomaly_rate_steps", std::to_string(c.grid_rate_steps));
  kv("grid.anomaly_rate_step", format_number(c.grid_rate_step));
  kv("grid.cap", std::to_string(c.grid.cap));
  kv("grid.selection_fraction", format_number(c.selection_fraction));
  return o.str();
}

}  // namespace leand
