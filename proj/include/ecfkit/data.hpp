#pragma once

#include "ecfkit/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ecfkit {

/// n samples x d features with labels remapped to 1..k.
struct LabeledDataset {
  Matrix features;
  IntVector labels;
  int k = 0;
  /// Original label text for class c is class_names[c - 1].
  std::vector<std::string> class_names;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  std::vector<int> class_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts[static_cast<std::size_t>(labels(i) - 1)];
    return counts;
  }

  void validate() const {
    require(labels.size() == features.rows(),
            "dataset: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(features.rows()) + " samples");
    require(k >= 1, "dataset: no classes");
    require(features.allFinite(), "dataset: non-finite feature value");
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      require(labels(i) >= 1 && labels(i) <= k,
              "dataset: label " + std::to_string(labels(i)) + " outside 1.." + std::to_string(k));
      seen[static_cast<std::size_t>(labels(i) - 1)] = true;
    }
    for (int c = 0; c < k; ++c)
      require(seen[static_cast<std::size_t>(c)], "dataset: class " + std::to_string(c + 1) + " has no samples");
  }

  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const {
    LabeledDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
      out.labels(static_cast<Eigen::Index>(r)) = labels(rows[r]);
    }
    out.k = k;
    out.class_names = class_names;
    return out;
  }
};

enum class MatrixRole { Design, Coding, Policy, Generic };

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// strtod accepts "nan"/"inf"; callers decide whether those are allowed.
inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return std::nullopt;
  return v;
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidArgument("cannot write " + tmp.string());
    os << content;
    if (!os) throw InvalidArgument("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_real(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Loads a dataset CSV: optional header row, decimal features, one label
/// column (last by default, or the given zero-based index). Labels are
/// remapped to 1..k in sorted order (numeric order when every label parses
/// as a number).
inline LabeledDataset load_dataset_csv(const std::filesystem::path& path, int label_column = -1) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset " + path.string());

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() < 2)
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": need at least one feature and a label");
    std::size_t lab = label_column < 0 ? fields.size() - 1 : static_cast<std::size_t>(label_column);
    if (lab >= fields.size())
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": label column " +
                            std::to_string(lab) + " out of range");
    std::vector<double> feats;
    bool numeric = true;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == lab) continue;
      auto v = detail::parse_double(fields[c]);
      if (!v) {
        numeric = false;
        break;
      }
      feats.push_back(*v);
    }
    if (first_content && !numeric) {
      first_content = false;  // header
      continue;
    }
    first_content = false;
    if (!numeric)
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": non-numeric feature value");
    for (double v : feats)
      if (!std::isfinite(v))
        throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": non-finite feature value");
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " fields, found " + std::to_string(fields.size()));
    if (fields[lab].empty())
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": empty label");
    rows.push_back(std::move(feats));
    raw_labels.emplace_back(fields[lab]);
  }
  if (rows.empty()) throw InvalidArgument("dataset " + path.string() + " has no samples");

  std::vector<std::string> names = raw_labels;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  bool all_numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
    return detail::parse_double(s).has_value();
  });
  if (all_numeric)
    std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return *detail::parse_double(a) < *detail::parse_double(b);
    });
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < names.size(); ++c) index[names[c]] = static_cast<int>(c) + 1;

  LabeledDataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  ds.features.resize(n, d);
  ds.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    ds.labels(i) = index.at(raw_labels[static_cast<std::size_t>(i)]);
  }
  ds.k = static_cast<int>(names.size());
  ds.class_names = std::move(names);
  ds.validate();
  return ds;
}

inline void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) os << detail::format_real(ds.features(i, j)) << ',';
    os << ds.class_names[static_cast<std::size_t>(ds.labels(i) - 1)] << '\n';
  }
  detail::write_atomically(path, os.str());
}

struct ToyOptions {
  int k = 14;
  int per_class = 100;
  double spread = 0.3;
  /// Distance between neighbouring grid nodes before jitter.
  double spacing = 1.0;
  /// Each mean is displaced uniformly within +-jitter*spacing per axis.
  double jitter = 0.3;
};

/// Isotropic 2-D Gaussian classes sharing one standard deviation. Means sit
/// on a jittered square grid, so some neighbours overlap and distant pairs
/// are well separated.
inline LabeledDataset generate_toy(const ToyOptions& opts, std::uint64_t seed) {
  require(opts.k >= 2, "generate_toy: k must be >= 2");
  require(opts.per_class >= 1, "generate_toy: per_class must be >= 1");
  require(opts.spread >= 0.0, "generate_toy: spread must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(opts.k))));
  Matrix means(opts.k, 2);
  for (int c = 0; c < opts.k; ++c) {
    means(c, 0) = opts.spacing * ((c % side) + opts.jitter * unit(rng));
    means(c, 1) = opts.spacing * ((c / side) + opts.jitter * unit(rng));
  }

  LabeledDataset ds;
  const Eigen::Index n = static_cast<Eigen::Index>(opts.k) * opts.per_class;
  ds.features.resize(n, 2);
  ds.labels.resize(n);
  Eigen::Index row = 0;
  for (int c = 0; c < opts.k; ++c) {
    for (int s = 0; s < opts.per_class; ++s, ++row) {
      ds.features(row, 0) = means(c, 0) + opts.spread * gauss(rng);
      ds.features(row, 1) = means(c, 1) + opts.spread * gauss(rng);
      ds.labels(row) = c + 1;
    }
  }
  ds.k = opts.k;
  for (int c = 1; c <= opts.k; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

inline LabeledDataset generate_toy(std::uint64_t seed) { return generate_toy(ToyOptions{}, seed); }

/// Fold index (0-based) for every sample. Each class is shuffled and dealt
/// round-robin; the starting fold rotates between classes so overall fold
/// sizes stay balanced too.
inline std::vector<int> stratified_folds(const IntVector& labels, int folds, std::uint64_t seed) {
  require(folds >= 2, "stratified_folds: need at least 2 folds");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < labels.size(); ++i) by_class[labels(i)].push_back(i);
  for (const auto& [label, idx] : by_class)
    if (static_cast<int>(idx.size()) < folds)
      throw InvalidArgument("stratified_folds: class " + std::to_string(label) + " has " +
                            std::to_string(idx.size()) + " samples, fewer than " + std::to_string(folds) +
                            " folds");

  std::mt19937_64 rng(seed);
  std::vector<int> assignment(static_cast<std::size_t>(labels.size()), -1);
  int next = 0;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) {
      assignment[static_cast<std::size_t>(i)] = next;
      next = (next + 1) % folds;
    }
  }
  return assignment;
}

/// Writes one row per line, comma separated, no header. Reals use 17
/// significant digits so they read back exactly.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << detail::format_real(m(i, j));
    }
    os << '\n';
  }
  detail::write_atomically(path, os.str());
}

inline void write_matrix_csv(const std::filesystem::path& path, const IntMatrix& m) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
  detail::write_atomically(path, os.str());
}

namespace detail {

inline void check_role(const Matrix& m, MatrixRole role, const std::string& where) {
  switch (role) {
    case MatrixRole::Generic:
      return;
    case MatrixRole::Coding:
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          if (m(i, j) != 1.0 && m(i, j) != -1.0)
            throw InvalidArgument(where + ": coding entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                  ") is not +1/-1");
      return;
    case MatrixRole::Design:
    case MatrixRole::Policy: {
      if (m.rows() != m.cols())
        throw InvalidArgument(where + ": expected a square matrix, got " + shape_str(m.rows(), m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j)
          if (std::abs(m(i, j) - m(j, i)) > 1e-10)
            throw InvalidArgument(where + ": not symmetric at (" + std::to_string(i + 1) + "," +
                                  std::to_string(j + 1) + ")");
      const double diag = m(0, 0);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (m(i, i) != diag)
          throw InvalidArgument(where + ": diagonal entries differ (" + format_real(diag) + " vs " +
                                format_real(m(i, i)) + ")");
      if (diag < 1.0 || diag != std::round(diag))
        throw InvalidArgument(where + ": diagonal " + format_real(diag) + " is not a positive integer code length");
      return;
    }
  }
}

}  // namespace detail

/// Reads a matrix CSV and checks it against its role. For Design and Policy
/// the diagonal carries the code length; pass `expected_length` to pin it.
inline Matrix read_matrix_csv(const std::filesystem::path& path, MatrixRole role,
                              std::optional<int> expected_length = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open matrix " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    std::vector<double> vals;
    for (auto f : detail::split_csv(line)) {
      auto v = detail::parse_double(f);
      if (!v || !std::isfinite(*v))
        throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": bad value '" + std::string(f) + "'");
      vals.push_back(*v);
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " columns, found " + std::to_string(vals.size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw InvalidArgument("matrix " + path.string() + " is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  detail::check_role(m, role, path.string());
  if (expected_length && (role == MatrixRole::Design || role == MatrixRole::Policy) &&
      m(0, 0) != static_cast<double>(*expected_length))
    throw InvalidArgument(path.string() + ": diagonal " + detail::format_real(m(0, 0)) + " does not match l = " +
                          std::to_string(*expected_length));
  return m;
}

}  // namespace ecfkit
