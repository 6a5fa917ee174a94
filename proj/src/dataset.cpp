#include "ser/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ser/checkpoint.hpp"

namespace ser::data {

namespace {

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error(path.string() + ": " + why);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void Dataset::add_row(std::span<const double> features, std::size_t label, std::string group) {
  if (width == 0 && values.empty()) width = features.size();
  if (features.size() != width) {
    throw std::invalid_argument("dataset: row has " + std::to_string(features.size()) + " features, expected " +
                                std::to_string(width));
  }
  values.insert(values.end(), features.begin(), features.end());
  labels.push_back(label);
  groups.push_back(std::move(group));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.width = width;
  out.label_names = label_names;
  out.values.reserve(indices.size() * width);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("dataset: index " + std::to_string(i) + " out of range");
    out.add_row(row(i), labels[i], groups[i]);
  }
  return out;
}

ad::Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  std::vector<double> v;
  v.reserve(indices.size() * width);
  for (std::size_t i : indices) {
    const auto r = row(i);
    v.insert(v.end(), r.begin(), r.end());
  }
  return ad::Tensor::from({indices.size(), width}, std::move(v));
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (std::size_t l : labels) ++counts.at(l);
  return counts;
}

void Dataset::validate() const {
  if (values.size() != labels.size() * width) throw std::invalid_argument("dataset: value count does not match rows");
  if (groups.size() != labels.size()) throw std::invalid_argument("dataset: group count does not match rows");
  for (std::size_t l : labels) {
    if (l >= n_classes()) throw std::invalid_argument("dataset: label index " + std::to_string(l) + " has no name");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature value");
  }
}

std::filesystem::path groups_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_filename(csv_path.stem().string() + ".groups.csv");
  return p;
}

void write_feature_csv(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) bad(path, "cannot open for writing");
  for (std::size_t c = 0; c < dataset.width; ++c) os << 'f' << c << ',';
  os << "label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.row(i)) os << ad::format_double(v) << ',';
    os << dataset.label_names[dataset.labels[i]] << '\n';
  }
  if (!os) bad(path, "write failed");

  const auto gpath = groups_path(path);
  std::ofstream gs(gpath, std::ios::trunc);
  if (!gs) bad(gpath, "cannot open for writing");
  gs << "source_id\n";
  for (const auto& g : dataset.groups) gs << g << '\n';
  if (!gs) bad(gpath, "write failed");
}

Dataset read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad(path, "cannot open feature file");
  std::string line;
  if (!std::getline(in, line)) bad(path, "empty file");
  const auto header = split_csv(trim_cr(line));
  if (header.size() < 2 || header.back() != "label") bad(path, "header must end with 'label'");
  const std::size_t width = header.size() - 1;
  for (std::size_t c = 0; c < width; ++c) {
    if (header[c] != "f" + std::to_string(c)) bad(path, "header column " + std::to_string(c) + " should be 'f" + std::to_string(c) + "'");
  }

  std::vector<double> values;
  std::vector<std::string> names;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != width + 1) {
      bad(path, "line " + std::to_string(line_no) + ": expected " + std::to_string(width + 1) + " columns, got " +
                    std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      const auto& s = cells[c];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) bad(path, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
      values.push_back(v);
    }
    if (cells.back().empty()) bad(path, "line " + std::to_string(line_no) + ": empty label");
    names.push_back(cells.back());
  }
  if (names.empty()) bad(path, "no data rows");

  Dataset ds;
  ds.width = width;
  ds.values = std::move(values);
  ds.label_names = names;
  std::sort(ds.label_names.begin(), ds.label_names.end());
  ds.label_names.erase(std::unique(ds.label_names.begin(), ds.label_names.end()), ds.label_names.end());
  for (const auto& n : names) {
    ds.labels.push_back(static_cast<std::size_t>(
        std::lower_bound(ds.label_names.begin(), ds.label_names.end(), n) - ds.label_names.begin()));
  }

  const auto gpath = groups_path(path);
  if (std::filesystem::exists(gpath)) {
    std::ifstream gs(gpath);
    if (!std::getline(gs, line) || trim_cr(line) != "source_id") bad(gpath, "missing header 'source_id'");
    while (std::getline(gs, line)) {
      line = trim_cr(line);
      if (!line.empty()) ds.groups.push_back(line);
    }
    if (ds.groups.size() != ds.labels.size()) {
      bad(gpath, std::to_string(ds.groups.size()) + " groups for " + std::to_string(ds.labels.size()) + " rows");
    }
  } else {
    for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.groups.push_back("row" + std::to_string(i));
  }
  ds.validate();
  return ds;
}

std::pair<std::vector<double>, std::vector<double>> column_stats(const Dataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("column_stats: empty dataset");
  const std::size_t n = dataset.size(), w = dataset.width;
  std::vector<double> mean(w, 0.0), sd(w, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < w; ++c) mean[c] += dataset.values[i * w + c];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < w; ++c) {
      const double d = dataset.values[i * w + c] - mean[c];
      sd[c] += d * d;
    }
  }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  return {mean, sd};
}

}  // namespace ser::data
