#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "unirule/errors.hpp"
#include "unirule/rng.hpp"
#include "unirule/text.hpp"
#include "unirule/victim.hpp"

namespace unirule {

struct LoadStats {
  std::size_t dropped_empty = 0;  // lines that cleaned down to nothing
};

namespace detail {

inline void append_file(const std::string& path, int label, std::vector<LabeledSample>& out,
                        LoadStats& stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find('\0') != std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": undecodable line (NUL byte)");
    }
    std::string cleaned = clean(line);
    if (cleaned.empty()) {
      ++stats.dropped_empty;
      continue;
    }
    out.push_back(LabeledSample{std::move(cleaned), label});
  }
}

}  // namespace detail

// rt-polarity layout: one sentence per line, one file per class.
// File order is preserved; positives come first.
inline std::vector<LabeledSample> load_polarity_files(const std::string& pos_path,
                                                      const std::string& neg_path,
                                                      LoadStats* stats = nullptr) {
  LoadStats local;
  std::vector<LabeledSample> out;
  detail::append_file(pos_path, 1, out, local);
  detail::append_file(neg_path, 0, out, local);
  if (stats) *stats = local;
  return out;
}

// Single-file layout: `label<TAB>text` per line, labels 0 or 1.
inline std::vector<LabeledSample> load_tsv(const std::string& path, LoadStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  LoadStats local;
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find('\0') != std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": undecodable line (NUL byte)");
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed TSV row (no tab)");
    }
    const std::string label_field = line.substr(0, tab);
    int label;
    if (label_field == "0") {
      label = 0;
    } else if (label_field == "1") {
      label = 1;
    } else {
      throw DataError(path + ":" + std::to_string(line_no) + ": label must be 0 or 1, got \"" +
                      label_field + "\"");
    }
    std::string cleaned = clean(std::string_view(line).substr(tab + 1));
    if (cleaned.empty()) {
      ++local.dropped_empty;
      continue;
    }
    out.push_back(LabeledSample{std::move(cleaned), label});
  }
  if (stats) *stats = local;
  return out;
}

// Seeded stratified split. The train part receives round(fraction * N)
// samples, allocated across the two classes by largest remainder, so each
// part's class mix stays within rounding error of the whole.
inline std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_samples(
    const std::vector<LabeledSample>& samples, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must be in (0, 1)");
  }
  const std::size_t n = samples.size();
  const auto train_total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (train_total == 0 || train_total >= n) {
    throw ConfigError("split would leave an empty part");
  }

  std::vector<std::uint32_t> by_class[2];
  for (std::uint32_t i = 0; i < n; ++i) by_class[samples[i].label].push_back(i);

  Rng rng(seed);
  rng.shuffle(by_class[0]);
  rng.shuffle(by_class[1]);

  // Largest-remainder allocation of the train quota over the two classes.
  std::size_t take[2];
  double quota[2];
  std::size_t base_total = 0;
  for (int c = 0; c < 2; ++c) {
    quota[c] = static_cast<double>(train_total) * static_cast<double>(by_class[c].size()) /
               static_cast<double>(n);
    take[c] = static_cast<std::size_t>(quota[c]);
    base_total += take[c];
  }
  for (std::size_t extra = train_total - base_total; extra > 0; --extra) {
    const int c = (quota[0] - static_cast<double>(take[0])) >=
                          (quota[1] - static_cast<double>(take[1]))
                      ? 0
                      : 1;
    ++take[c];
  }
  for (int c = 0; c < 2; ++c) {
    if (take[c] > by_class[c].size()) {
      take[1 - c] += take[c] - by_class[c].size();
      take[c] = by_class[c].size();
    }
  }

  std::vector<LabeledSample> train, held;
  train.reserve(train_total);
  held.reserve(n - train_total);
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      (i < take[c] ? train : held).push_back(samples[by_class[c][i]]);
    }
  }
  rng.shuffle(train);
  rng.shuffle(held);
  return {std::move(train), std::move(held)};
}

}  // namespace unirule
