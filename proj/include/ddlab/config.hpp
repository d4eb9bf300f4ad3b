#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddlab/common.hpp"
#include "ddlab/datagen.hpp"
#include "ddlab/sweep.hpp"
#include "ddlab/trainer.hpp"

namespace ddlab {

// Flat key-value config text: [section] headers, `key = value` lines, full
// line comments starting with # or ;. Unknown sections and keys are errors at
// the consumer level, so typos fail loudly.
using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

inline ConfigSections parse_config(std::istream& is) {
  ConfigSections sections;
  std::string line, section;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::runtime_error("config line " + std::to_string(lineno) +
                                                    ": malformed section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw std::runtime_error("config line " + std::to_string(lineno) +
                                                    ": empty section name");
      sections.try_emplace(section);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": key outside a section");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key or value");
    if (!sections[section].emplace(key, value).second)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": duplicate key " + key);
  }
  return sections;
}

inline ConfigSections parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ConfigSections load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  return parse_config(is);
}

// Integers separated by commas and/or whitespace.
inline std::vector<std::int64_t> parse_int_list(const std::string& text) {
  std::vector<std::int64_t> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(parse_int(cur));
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      cur += c;
  }
  flush();
  if (out.empty()) throw std::invalid_argument("empty integer list: " + text);
  return out;
}

// Explicit cells "latent:hidden, latent:hidden, ...".
inline std::vector<std::pair<std::int64_t, std::int64_t>> parse_cell_list(const std::string& text) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::string cur;
  const auto flush = [&] {
    if (cur.empty()) return;
    const auto colon = cur.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("cell must be latent:hidden, got " + cur);
    out.emplace_back(parse_int(cur.substr(0, colon)), parse_int(cur.substr(colon + 1)));
    cur.clear();
  };
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      cur += c;
  }
  flush();
  if (out.empty()) throw std::invalid_argument("empty cell list: " + text);
  return out;
}

inline void apply_data_section(const std::map<std::string, std::string>& kv, DataSpec& spec) {
  for (const auto& [k, v] : kv) {
    if (k == "latent_dim")
      spec.latent_dim = parse_int(v);
    else if (k == "n_features")
      spec.n_features = parse_int(v);
    else if (k == "n_train")
      spec.n_train = parse_int(v);
    else if (k == "n_test")
      spec.n_test = parse_int(v);
    else if (k == "snr")
      spec.snr = parse_double(v);
    else if (k == "seed")
      spec.seed = parse_uint(v);
    else
      throw std::runtime_error("unknown key in [data]: " + k);
  }
  spec.validate();
}

inline void apply_train_section(const std::map<std::string, std::string>& kv, TrainConfig& config) {
  for (const auto& [k, v] : kv) {
    if (k == "lr")
      config.lr = parse_double(v);
    else if (k == "epochs")
      config.epochs = parse_int(v);
    else if (k == "batch_size")
      config.batch_size = parse_int(v);
    else if (k == "shuffle_seed")
      config.shuffle_seed = parse_uint(v);
    else if (k == "eval_every")
      config.eval_every = parse_int(v);
    else if (k == "max_steps")
      config.max_steps = parse_int(v);
    else
      throw std::runtime_error("unknown key in [train]: " + k);
  }
  config.validate();
}

inline void apply_grid_section(const std::map<std::string, std::string>& kv, SweepGrid& grid) {
  for (const auto& [k, v] : kv) {
    if (k == "latent_values")
      grid.latent_values = parse_int_list(v);
    else if (k == "hidden_values")
      grid.hidden_values = parse_int_list(v);
    else if (k == "cells")
      grid.cells = parse_cell_list(v);
    else if (k == "seeds_per_cell")
      grid.seeds_per_cell = parse_int(v);
    else
      throw std::runtime_error("unknown key in [grid]: " + k);
  }
}

// Grid config file with [data], [train] and [grid] sections, all optional;
// omitted keys keep the family defaults.
inline SweepGrid sweep_grid_from_config(const ConfigSections& sections) {
  SweepGrid grid = default_ae_grid();
  for (const auto& [name, kv] : sections) {
    if (name == "data")
      apply_data_section(kv, grid.base_data);
    else if (name == "train")
      apply_train_section(kv, grid.base_train);
    else if (name == "grid")
      apply_grid_section(kv, grid);
    else
      throw std::runtime_error("unknown config section [" + name + "]");
  }
  grid.validate();
  return grid;
}

// Data-spec config file: a single [data] section.
inline DataSpec data_spec_from_config(const ConfigSections& sections, DataSpec defaults) {
  for (const auto& [name, kv] : sections) {
    if (name == "data")
      apply_data_section(kv, defaults);
    else
      throw std::runtime_error("unknown config section [" + name + "]");
  }
  defaults.validate();
  return defaults;
}

// A --sizes argument is either an inline integer list or a path to a file
// holding one.
inline std::vector<std::int64_t> parse_sizes_arg(const std::string& arg) {
  try {
    return parse_int_list(arg);
  } catch (const std::exception&) {
  }
  std::ifstream is(arg);
  if (!is)
    throw std::runtime_error("--sizes is neither an integer list nor a readable file: " + arg);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_int_list(buf.str());
}

inline std::string join_int_list(const std::vector<std::int64_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(values[i]);
  }
  return s;
}

inline void print_default_config(std::ostream& os, const std::string& family) {
  if (family == "ae") {
    const SweepGrid g = default_ae_grid();
    os << "# ddlab sweep config, nonlinear autoencoder family\n";
    os << "[data]\n";
    os << "latent_dim = " << g.base_data.latent_dim << "\n";
    os << "n_features = " << g.base_data.n_features << "\n";
    os << "n_train = " << g.base_data.n_train << "\n";
    os << "n_test = " << g.base_data.n_test << "\n";
    os << "snr = " << format_double(g.base_data.snr) << "\n\n";
    os << "[train]\n";
    os << "lr = " << format_double(g.base_train.lr) << "\n";
    os << "epochs = " << g.base_train.epochs << "\n";
    os << "batch_size = " << g.base_train.batch_size << "\n";
    os << "eval_every = " << g.base_train.eval_every << "\n";
    os << "max_steps = " << g.base_train.max_steps << "\n\n";
    os << "[grid]\n";
    os << "latent_values = " << join_int_list(g.latent_values) << "\n";
    os << "hidden_values = " << join_int_list(g.hidden_values) << "\n";
    os << "seeds_per_cell = " << g.seeds_per_cell << "\n";
  } else if (family == "linear-ae") {
    const DataSpec d = default_linear_ae_data();
    const TrainConfig t = default_linear_ae_train();
    os << "# ddlab config, linear autoencoder family\n";
    os << "# sweep sizes default: " << join_int_list(desk_linear_sizes()) << "\n";
    os << "[data]\n";
    os << "latent_dim = " << d.latent_dim << "\n";
    os << "n_features = " << d.n_features << "\n";
    os << "n_train = " << d.n_train << "\n";
    os << "n_test = " << d.n_test << "\n";
    os << "snr = " << format_double(d.snr) << "\n\n";
    os << "[train]\n";
    os << "lr = " << format_double(t.lr) << "\n";
    os << "epochs = " << t.epochs << "\n";
    os << "batch_size = " << t.batch_size << "\n";
    os << "eval_every = " << t.eval_every << "\n";
    os << "max_steps = " << t.max_steps << "\n";
  } else {
    throw std::runtime_error("unknown family: " + family + " (expected ae or linear-ae)");
  }
}

}  // namespace ddlab
