#include "probprec/dataset.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "probprec/errors.hpp"

namespace probprec {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Uniform integer in [0, bound] by rejection; independent of the standard
// library's distribution implementation.
std::uint64_t uniform_upto(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == std::numeric_limits<std::uint64_t>::max()) return rng();
  const std::uint64_t range = bound + 1;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % range;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset read_csv(const std::string& path, Index target_columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  if (target_columns < 0) throw ConfigError("negative number of target columns");

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset '" + path + "' is empty");
  const auto header = split_fields(line);
  const auto columns = static_cast<Index>(header.size());
  if (columns <= target_columns) {
    std::ostringstream os;
    os << "dataset '" << path << "' has " << columns << " columns, need more than " << target_columns;
    throw ConfigError(os.str());
  }

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != columns) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << columns << " fields, found " << fields.size();
      throw ConfigError(os.str());
    }
    for (const auto& f : fields) {
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (end == f.c_str()) {
        std::ostringstream os;
        os << path << ":" << line_no << ": cannot parse '" << f << "' as a number";
        throw ConfigError(os.str());
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ConfigError("dataset '" + path + "' has no samples");

  const Index d = columns - target_columns;
  const auto n = static_cast<Index>(rows);
  Dataset data{Matrix(d, n), Matrix(target_columns, n)};
  for (Index i = 0; i < n; ++i) {
    const double* row = values.data() + i * columns;
    for (Index j = 0; j < d; ++j) data.features(j, i) = row[j];
    for (Index j = 0; j < target_columns; ++j) data.targets(j, i) = row[d + j];
  }
  return data;
}

void write_csv(const std::string& path, const Dataset& data) {
  if (data.features.cols() != data.targets.cols()) {
    throw InvalidArgument("write_csv: features and targets disagree in sample count");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset '" + path + "'");
  const Index d = data.features.rows();
  const Index t = data.targets.rows();
  for (Index j = 0; j < d; ++j) out << (j ? "," : "") << "x" << j;
  for (Index j = 0; j < t; ++j) out << (d + j ? "," : "") << (t == 1 ? std::string("y") : "y" + std::to_string(j));
  out << "\n";
  char buf[40];
  for (Index i = 0; i < data.features.cols(); ++i) {
    for (Index j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(j, i));
      out << (j ? "," : "") << buf;
    }
    for (Index j = 0; j < t; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.targets(j, i));
      out << (d + j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw ConfigError("failed while writing dataset '" + path + "'");
}

BatchSampler::BatchSampler(std::size_t population, std::size_t batch_size, std::uint64_t seed)
    : population_(population), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw InvalidArgument("batch size must be positive");
  if (batch_size_ > population_) {
    std::ostringstream os;
    os << "batch size " << batch_size_ << " exceeds the number of samples " << population_;
    throw InvalidArgument(os.str());
  }
}

Batch BatchSampler::draw() {
  std::mt19937_64 rng(mix_seed(seed_, counter_++));
  Batch batch;
  batch.indices.reserve(batch_size_);
  if (batch_size_ == population_) {
    for (std::size_t i = 0; i < population_; ++i) batch.indices.push_back(static_cast<Index>(i));
    return batch;
  }
  // Floyd's algorithm: k distinct indices in O(k).
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(2 * batch_size_);
  for (std::size_t j = population_ - batch_size_; j < population_; ++j) {
    const auto t = static_cast<std::size_t>(uniform_upto(rng, j));
    const std::size_t pick = chosen.insert(t).second ? t : j;
    if (pick == j) chosen.insert(j);
    batch.indices.push_back(static_cast<Index>(pick));
  }
  return batch;
}

}  // namespace probprec
