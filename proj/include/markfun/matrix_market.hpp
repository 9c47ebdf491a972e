#pragma once

#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "markfun/generator.hpp"

namespace markfun {

struct MatrixMarketData {
  Index rows = 0;
  Index cols = 0;
  std::vector<Triplet> entries; // 0-indexed
};

/// Reads a Matrix Market "matrix coordinate real general" file.
/// Indices are converted from the file's 1-based convention.
inline MatrixMarketData read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file: " + path);
  {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    for (auto* s : {&object, &format, &field, &symmetry})
      for (char& c : *s) c = static_cast<char>(std::tolower(c));
    if (banner != "%%MatrixMarket" || object != "matrix")
      throw IoError(path + ": not a MatrixMarket matrix file");
    if (format != "coordinate" || field != "real" || symmetry != "general")
      throw IoError(path + ": only 'coordinate real general' is supported");
  }

  // Skip comments and blank lines up to the size line.
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  MatrixMarketData data;
  std::size_t nnz = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> data.rows >> data.cols >> nnz))
      throw IoError(path + ": malformed size line");
  }
  data.entries.reserve(nnz);
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    Index r, c;
    double v;
    if (!(ss >> r >> c >> v)) throw IoError(path + ": malformed entry line");
    if (r < 1 || r > data.rows || c < 1 || c > data.cols)
      throw IoError(path + ": entry index out of range");
    data.entries.push_back({r - 1, c - 1, v});
  }
  if (data.entries.size() != nnz)
    throw IoError(path + ": entry count does not match header");
  return data;
}

inline void write_matrix_market(const std::string& path, Index rows, Index cols,
                                const std::vector<Triplet>& entries,
                                const std::string& comment = "") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  if (!comment.empty()) out << "% " << comment << "\n";
  out << rows << " " << cols << " " << entries.size() << "\n";
  out << std::setprecision(17);
  for (const Triplet& t : entries)
    out << (t.row + 1) << " " << (t.col + 1) << " " << t.value << "\n";
  if (!out) throw IoError("write failed: " + path);
}

struct GeneratorReadResult {
  Generator generator;
  std::vector<std::string> warnings;
};

/// Ingests a generator from a Matrix Market file. Only off-diagonal entries
/// are used; the diagonal is recomputed. If the file carried a diagonal that
/// disagrees with the recomputed one beyond row_sums_tol (relative to
/// max|Q_ii|), a warning is reported.
inline GeneratorReadResult read_generator(const std::string& path,
                                          double row_sums_tol = 1e-10) {
  MatrixMarketData data = read_matrix_market(path);
  if (data.rows != data.cols)
    throw ValidationError(path + ": generator must be square");
  std::vector<Triplet> offdiag;
  std::vector<Triplet> file_diag;
  for (const Triplet& t : data.entries) {
    if (t.row == t.col)
      file_diag.push_back(t);
    else
      offdiag.push_back(t);
  }
  GeneratorReadResult res;
  res.generator = build_generator(data.rows, offdiag, row_sums_tol);
  if (!file_diag.empty()) {
    Vector fd = Vector::Zero(data.rows);
    for (const Triplet& t : file_diag) fd[t.row] += t.value;
    const double scale = std::max(res.generator.max_abs_diagonal(), 1.0);
    for (Index i = 0; i < data.rows; ++i) {
      double diff = std::abs(fd[i] - res.generator.diagonal()[i]);
      if (fd[i] != 0.0 && diff > row_sums_tol * scale) {
        std::ostringstream msg;
        msg << path << ": diagonal of row " << i
            << " disagrees with recomputed value by " << diff
            << "; recomputed diagonal is used";
        res.warnings.push_back(msg.str());
      }
    }
  }
  return res;
}

inline void write_generator(const std::string& path, const Generator& q,
                            const std::string& comment = "") {
  write_matrix_market(path, q.size(), q.size(), q.to_triplets(), comment);
}

} // namespace markfun
