#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "apop/network.hpp"

namespace apop {

struct Dataset {
  Matrix features;          // B x d
  std::vector<int> labels;  // class ids, < class_count
  int class_count = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1) throw ContractError("dataset is empty");
    if (static_cast<Index>(labels.size()) != features.rows())
      throw ContractError("feature/label counts disagree");
    if (!features.allFinite()) throw ContractError("dataset holds non-finite features");
    for (int y : labels)
      if (y < 0 || y >= class_count) throw ContractError("label outside [0, class_count)");
  }
};

/// Target matrix matched to a network's output width: one column of raw 0/1
/// labels for width-1 (binary) heads, one-hot rows otherwise.
inline Matrix make_targets(const Dataset& ds, Index output_dim) {
  const Index b = ds.size();
  if (output_dim == 1) {
    Matrix t(b, 1);
    for (Index i = 0; i < b; ++i) {
      if (ds.labels[i] > 1) throw ShapeError("width-1 output needs {0,1} labels");
      t(i, 0) = static_cast<double>(ds.labels[i]);
    }
    return t;
  }
  Matrix t = Matrix::Zero(b, output_dim);
  for (Index i = 0; i < b; ++i) {
    if (ds.labels[i] >= output_dim)
      throw ShapeError("label " + std::to_string(ds.labels[i]) + " exceeds output width " +
                       std::to_string(output_dim));
    t(i, ds.labels[i]) = 1.0;
  }
  return t;
}

namespace detail {

struct IdxReader {
  std::vector<std::uint8_t> bytes;
  std::string path;
  std::size_t pos = 0;

  explicit IdxReader(const std::string& p) : path(p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + p + "'");
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }

  std::uint32_t u32(const char* what) {
    if (pos + 4 > bytes.size())
      throw FormatError("'" + path + "': truncated " + what + " at byte offset " + std::to_string(pos));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes[pos + i];  // big-endian
    pos += 4;
    return v;
  }

  const std::uint8_t* payload(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw FormatError("'" + path + "': truncated " + what + " at byte offset " + std::to_string(pos) +
                        " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(bytes.size() - pos) + ")");
    const std::uint8_t* p = bytes.data() + pos;
    pos += n;
    return p;
  }
};

}  // namespace detail

inline Dataset load_idx(const std::string& image_path, const std::string& label_path, bool normalize) {
  detail::IdxReader img(image_path);
  if (const auto magic = img.u32("magic"); magic != 0x00000803u)
    throw FormatError("'" + image_path + "': image magic is " + std::to_string(magic) +
                      " at byte offset 0 (expected 2051)");
  const std::uint32_t count = img.u32("image count");
  const std::uint32_t rows = img.u32("row count");
  const std::uint32_t cols = img.u32("column count");
  const std::size_t d = static_cast<std::size_t>(rows) * cols;
  const std::uint8_t* pixels = img.payload(static_cast<std::size_t>(count) * d, "pixel data");

  detail::IdxReader lab(label_path);
  if (const auto magic = lab.u32("magic"); magic != 0x00000801u)
    throw FormatError("'" + label_path + "': label magic is " + std::to_string(magic) +
                      " at byte offset 0 (expected 2049)");
  const std::uint32_t label_count = lab.u32("label count");
  if (label_count != count)
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                      std::to_string(label_count));
  const std::uint8_t* ys = lab.payload(label_count, "label data");

  Dataset ds;
  ds.features.resize(count, d);
  const double scale = normalize ? 1.0 / 255.0 : 1.0;
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.features(i, j) = scale * pixels[i * d + j];
  ds.labels.assign(ys, ys + label_count);
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.class_count = max_label + 1;
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path, bool label_first, bool binary,
                        bool skip_header = false, bool standardize = false) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> row_lines;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (skip_header && line_no == 1) continue;

    std::vector<double> cells;
    std::size_t start = 0;
    for (std::size_t col = 1;; ++col) {
      const std::size_t comma = line.find(',', start);
      const std::string cell = line.substr(start, comma == std::string::npos ? comma : comma - start);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v))
        throw FormatError("'" + path + "' row " + std::to_string(line_no) + " column " +
                          std::to_string(col) + ": not a number: '" + cell + "'");
      cells.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (width == 0) {
      width = cells.size();
      if (width < 2)
        throw FormatError("'" + path + "' row " + std::to_string(line_no) + ": need a label plus features");
    } else if (cells.size() != width) {
      throw FormatError("'" + path + "' row " + std::to_string(line_no) + ": " +
                        std::to_string(cells.size()) + " cells where " + std::to_string(width) +
                        " expected");
    }
    rows.push_back(std::move(cells));
    row_lines.push_back(line_no);
  }
  if (rows.empty()) throw FormatError("'" + path + "': no data rows");

  const std::size_t label_col = label_first ? 0 : width - 1;
  Dataset ds;
  ds.features.resize(rows.size(), width - 1);
  ds.labels.resize(rows.size());
  int max_label = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = rows[i][label_col];
    if (y < 0.0 || y != static_cast<double>(static_cast<int>(y)) || (binary && y > 1.0))
      throw FormatError("'" + path + "' row " + std::to_string(row_lines[i]) + ": label " +
                        std::to_string(y) + " is not a valid " + (binary ? "binary" : "class") +
                        " label");
    ds.labels[i] = static_cast<int>(y);
    max_label = std::max(max_label, ds.labels[i]);
    Index at = 0;
    for (std::size_t j = 0; j < width; ++j)
      if (j != label_col) ds.features(i, at++) = rows[i][j];
  }
  ds.class_count = binary ? 2 : max_label + 1;

  if (standardize) {
    for (Index j = 0; j < ds.features.cols(); ++j) {
      const double mean = ds.features.col(j).mean();
      ds.features.col(j).array() -= mean;
      const double sd = std::sqrt(ds.features.col(j).squaredNorm() / ds.features.rows());
      if (sd > 0.0) ds.features.col(j) /= sd;
    }
  }
  ds.validate();
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.precision(17);
  for (Index i = 0; i < ds.size(); ++i) {
    f << ds.labels[i];
    for (Index j = 0; j < ds.dim(); ++j) f << ',' << ds.features(i, j);
    f << '\n';
  }
  if (!f) throw FormatError("short write to '" + path + "'");
}

/// Random teacher whose hidden layer holds k planted redundant pairs —
/// exact duplicates on sigmoid layers, exact positive multiples on ReLU
/// layers — plus a dataset labeled by the teacher's argmax. The redundancy
/// detector must find these pairs at distance (near) zero.
inline std::pair<Network, Dataset> gen_planted_teacher(int input_dim, int hidden, int pairs,
                                                       ActivationKind activation, Index samples,
                                                       std::uint64_t seed, double forced_alpha = 0.0,
                                                       int outputs = 2) {
  if (2 * pairs > hidden) throw ContractError("need 2*pairs <= hidden neurons to plant pairs");
  if (input_dim < 1 || hidden < 1 || samples < 1 || outputs < 2)
    throw ContractError("empty teacher dimensions");

  Network teacher = init_network({input_dim, hidden, outputs}, activation, ActivationKind::Linear, seed);
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::uniform_real_distribution<double> alpha_dist(0.5, 2.0);
  for (int p = 0; p < pairs; ++p) {
    const Index a = 2 * p, b = 2 * p + 1;
    if (activation == ActivationKind::Relu) {
      const double alpha = forced_alpha > 0.0 ? forced_alpha : alpha_dist(rng);
      teacher.layers[0].weights.row(b) = alpha * teacher.layers[0].weights.row(a);
    } else {
      teacher.layers[0].weights.row(b) = teacher.layers[0].weights.row(a);
    }
  }

  Dataset ds;
  ds.features.resize(samples, input_dim);
  std::mt19937_64 xrng(derive_seed(seed, 7));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (Index i = 0; i < samples; ++i)
    for (Index j = 0; j < input_dim; ++j) ds.features(i, j) = unit(xrng);

  const Matrix out = forward(teacher, ds.features).post.back();
  ds.labels.resize(samples);
  for (Index i = 0; i < samples; ++i) {
    int best = 0;
    for (Index j = 1; j < out.cols(); ++j)
      if (out(i, j) > out(i, best)) best = static_cast<int>(j);
    ds.labels[i] = best;
  }
  ds.class_count = outputs;
  ds.validate();
  return {std::move(teacher), std::move(ds)};
}

/// Scalar absolute-value task: x uniform in [-1,1], label [|x| > 0.5]. Its
/// minimal ReLU solution needs two opposite-direction neurons, which the
/// redundancy rules must never merge.
inline Dataset gen_abs_dataset(Index samples, std::uint64_t seed) {
  if (samples < 2) throw ContractError("need at least 2 samples");
  Dataset ds;
  ds.features.resize(samples, 1);
  ds.labels.resize(samples);
  std::mt19937_64 rng(derive_seed(seed, 11));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (Index i = 0; i < samples; ++i) {
    const double x = unit(rng);
    ds.features(i, 0) = x;
    ds.labels[i] = std::abs(x) > 0.5 ? 1 : 0;
  }
  ds.class_count = 2;
  ds.validate();
  return ds;
}

/// Gaussian blobs around per-class uniform prototypes, clipped to [0,1]:
/// an image-like multiclass workload of arbitrary width for benchmark runs.
inline Dataset gen_blobs(Index samples, Index dim, int classes, double noise, std::uint64_t seed) {
  if (samples < 1 || dim < 1 || classes < 2) throw ContractError("empty blob dimensions");
  Matrix prototypes(classes, dim);
  std::mt19937_64 prng(derive_seed(seed, 13));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < classes; ++c)
    for (Index j = 0; j < dim; ++j) prototypes(c, j) = unit(prng);

  Dataset ds;
  ds.features.resize(samples, dim);
  ds.labels.resize(samples);
  std::mt19937_64 rng(derive_seed(seed, 17));
  std::normal_distribution<double> gauss(0.0, noise);
  for (Index i = 0; i < samples; ++i) {
    const int c = static_cast<int>(i % classes);
    ds.labels[i] = c;
    for (Index j = 0; j < dim; ++j)
      ds.features(i, j) = std::clamp(prototypes(c, j) + gauss(rng), 0.0, 1.0);
  }
  ds.class_count = classes;
  ds.validate();
  return ds;
}

}  // namespace apop
