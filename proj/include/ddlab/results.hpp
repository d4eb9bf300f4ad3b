#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ddlab/common.hpp"

namespace ddlab {

// One training run as persisted. `seed` is the replicate index within a cell;
// the derived RNG seeds are reconstructible from the master seed and the task
// position (documented in the README).
struct ResultRow {
  std::string experiment_id;
  std::int64_t latent = 0;
  std::int64_t hidden = 0;
  std::int64_t n_train = 0;
  std::int64_t n_features = 0;
  std::int64_t data_latent_dim = 0;
  double snr = 0.0;
  std::int64_t param_count = 0;
  std::int64_t seed = 0;
  std::int64_t epochs = 0;
  double lr = 0.0;
  std::int64_t batch_size = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  bool diverged = false;

  bool operator==(const ResultRow&) const = default;
};

using ResultsTable = std::vector<ResultRow>;

// Identifies a run for resume and duplicate detection.
using RowKey = std::tuple<std::string, std::int64_t, std::int64_t, std::int64_t, std::int64_t>;

inline RowKey row_key(const ResultRow& r) {
  return {r.experiment_id, r.latent, r.hidden, r.n_train, r.seed};
}

inline constexpr const char* kResultsHeader =
    "experiment_id,latent,hidden,n_train,n_features,data_latent_dim,snr,param_count,seed,"
    "epochs,lr,batch_size,train_mse,test_mse,diverged";

inline std::string format_result_row(const ResultRow& r) {
  for (char c : r.experiment_id)
    if (c == ',' || c == '\n' || c == '\r')
      throw std::invalid_argument("experiment_id must not contain commas or newlines");
  std::string s;
  s += r.experiment_id;
  s += ',';
  s += std::to_string(r.latent);
  s += ',';
  s += std::to_string(r.hidden);
  s += ',';
  s += std::to_string(r.n_train);
  s += ',';
  s += std::to_string(r.n_features);
  s += ',';
  s += std::to_string(r.data_latent_dim);
  s += ',';
  s += format_double(r.snr);
  s += ',';
  s += std::to_string(r.param_count);
  s += ',';
  s += std::to_string(r.seed);
  s += ',';
  s += std::to_string(r.epochs);
  s += ',';
  s += format_double(r.lr);
  s += ',';
  s += std::to_string(r.batch_size);
  s += ',';
  s += format_double(r.train_mse);
  s += ',';
  s += format_double(r.test_mse);
  s += ',';
  s += r.diverged ? '1' : '0';
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline ResultRow parse_result_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 15) throw std::runtime_error("results row has " + std::to_string(f.size()) +
                                               " fields, expected 15: " + line);
  ResultRow r;
  r.experiment_id = f[0];
  r.latent = parse_int(f[1]);
  r.hidden = parse_int(f[2]);
  r.n_train = parse_int(f[3]);
  r.n_features = parse_int(f[4]);
  r.data_latent_dim = parse_int(f[5]);
  r.snr = parse_double(f[6]);
  r.param_count = parse_int(f[7]);
  r.seed = parse_int(f[8]);
  r.epochs = parse_int(f[9]);
  r.lr = parse_double(f[10]);
  r.batch_size = parse_int(f[11]);
  r.train_mse = parse_double(f[12]);
  r.test_mse = parse_double(f[13]);
  if (f[14] == "0")
    r.diverged = false;
  else if (f[14] == "1")
    r.diverged = true;
  else
    throw std::runtime_error("bad diverged flag: " + f[14]);
  return r;
}

inline std::string results_to_csv(const ResultsTable& table) {
  std::string s = kResultsHeader;
  s += '\n';
  for (const auto& r : table) {
    s += format_result_row(r);
    s += '\n';
  }
  return s;
}

inline ResultsTable parse_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("results csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw std::runtime_error("unexpected results csv header: " + line);
  ResultsTable table;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      table.push_back(parse_result_row(line));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("bad results csv row '" + line + "': " + e.what());
    }
  }
  return table;
}

inline ResultsTable load_results(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return parse_results_csv(is);
}

inline void save_results(const ResultsTable& table, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << results_to_csv(table);
  if (!os) throw std::runtime_error("short write to " + path.string());
}

// Row union keyed by (experiment_id, latent, hidden, n_train, seed). Exact
// duplicates collapse; duplicates that disagree on any value are an error.
inline ResultsTable merge_results(const std::vector<ResultsTable>& tables) {
  ResultsTable merged;
  std::map<RowKey, std::size_t> index;
  for (const auto& table : tables) {
    for (const auto& row : table) {
      const auto key = row_key(row);
      const auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(key, merged.size());
        merged.push_back(row);
      } else if (!(merged[it->second] == row)) {
        throw std::runtime_error("conflicting duplicate result row for experiment " +
                                 row.experiment_id);
      }
    }
  }
  return merged;
}

// Seed-aggregated view of one (experiment, latent, hidden, n_train) cell.
// Means, minima and maxima are over non-diverged replicates.
struct CellStats {
  std::string experiment_id;
  std::int64_t latent = 0;
  std::int64_t hidden = 0;
  std::int64_t n_train = 0;
  std::int64_t param_count = 0;
  std::int64_t n_seeds = 0;
  std::int64_t n_diverged = 0;
  double mean_train_mse = 0.0, min_train_mse = 0.0, max_train_mse = 0.0;
  double mean_test_mse = 0.0, min_test_mse = 0.0, max_test_mse = 0.0;
};

inline std::vector<CellStats> aggregate_cells(const ResultsTable& table) {
  using CellKey = std::tuple<std::string, std::int64_t, std::int64_t, std::int64_t>;
  std::map<CellKey, std::vector<const ResultRow*>> groups;
  for (const auto& r : table)
    groups[{r.experiment_id, r.latent, r.hidden, r.n_train}].push_back(&r);

  std::vector<CellStats> cells;
  cells.reserve(groups.size());
  for (const auto& [key, rows] : groups) {
    CellStats c;
    std::tie(c.experiment_id, c.latent, c.hidden, c.n_train) = key;
    c.param_count = rows.front()->param_count;
    c.n_seeds = static_cast<std::int64_t>(rows.size());
    double train_sum = 0.0, test_sum = 0.0;
    std::int64_t kept = 0;
    for (const auto* r : rows) {
      if (r->param_count != c.param_count)
        throw std::runtime_error("inconsistent param_count within one cell");
      if (r->diverged) {
        c.n_diverged += 1;
        continue;
      }
      if (kept == 0) {
        c.min_train_mse = c.max_train_mse = r->train_mse;
        c.min_test_mse = c.max_test_mse = r->test_mse;
      } else {
        c.min_train_mse = std::min(c.min_train_mse, r->train_mse);
        c.max_train_mse = std::max(c.max_train_mse, r->train_mse);
        c.min_test_mse = std::min(c.min_test_mse, r->test_mse);
        c.max_test_mse = std::max(c.max_test_mse, r->test_mse);
      }
      train_sum += r->train_mse;
      test_sum += r->test_mse;
      kept += 1;
    }
    if (kept > 0) {
      c.mean_train_mse = train_sum / static_cast<double>(kept);
      c.mean_test_mse = test_sum / static_cast<double>(kept);
    } else {
      c.mean_train_mse = c.min_train_mse = c.max_train_mse =
          std::numeric_limits<double>::quiet_NaN();
      c.mean_test_mse = c.min_test_mse = c.max_test_mse = c.mean_train_mse;
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

// Append-only CSV store backing sweep resume. Construction loads any existing
// rows (validating the header); appends flush immediately so an interrupted
// sweep leaves a loadable prefix.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path path) : path_(std::move(path)) {
    namespace fs = std::filesystem;
    if (fs::exists(path_) && fs::file_size(path_) > 0) {
      rows_ = load_results(path_);
      for (std::size_t i = 0; i < rows_.size(); ++i) index_.emplace(row_key(rows_[i]), i);
      out_.open(path_, std::ios::app);
    } else {
      out_.open(path_, std::ios::trunc);
      out_ << kResultsHeader << '\n';
      out_.flush();
    }
    if (!out_) throw std::runtime_error("cannot open results store " + path_.string());
  }

  bool contains(const RowKey& key) const { return index_.count(key) > 0; }

  const ResultRow* find(const RowKey& key) const {
    const auto it = index_.find(key);
    return it == index_.end() ? nullptr : &rows_[it->second];
  }

  void append(const ResultRow& row) {
    const auto key = row_key(row);
    if (contains(key)) throw std::runtime_error("duplicate result row appended");
    out_ << format_result_row(row) << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing to " + path_.string());
    index_.emplace(key, rows_.size());
    rows_.push_back(row);
  }

  const ResultsTable& rows() const { return rows_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  ResultsTable rows_;
  std::map<RowKey, std::size_t> index_;
  std::ofstream out_;
};

}  // namespace ddlab
