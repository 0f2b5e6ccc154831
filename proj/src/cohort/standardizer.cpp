#include <cmath>

#include "fundascreen/cohort.hpp"
#include "fundascreen/error.hpp"

namespace fundascreen::cohort {

Standardizer Standardizer::fit(const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns) {
  if (names.size() != columns.size()) fail(ErrorCode::invalid_argument, "standardizer: names and columns differ in length");
  Standardizer s;
  s.input_names_ = names;
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto& col = columns[j];
    if (col.size() < 2) {
      s.dropped_.push_back(names[j]);
      s.warnings_.push_back("feature '" + names[j] + "' dropped: fewer than two training values");
      continue;
    }
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(col.size() - 1));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      s.dropped_.push_back(names[j]);
      s.warnings_.push_back("feature '" + names[j] + "' dropped: zero variance on the training split");
      continue;
    }
    s.retained_.push_back(Feature{names[j], mean, sd});
    s.source_index_.push_back(j);
  }
  return s;
}

Standardizer Standardizer::from_parts(std::vector<std::string> input_names, std::vector<Feature> retained,
                                      std::vector<std::string> dropped) {
  Standardizer s;
  s.input_names_ = std::move(input_names);
  s.retained_ = std::move(retained);
  s.dropped_ = std::move(dropped);
  for (const auto& f : s.retained_) {
    std::size_t idx = s.input_names_.size();
    for (std::size_t j = 0; j < s.input_names_.size(); ++j) {
      if (s.input_names_[j] == f.name) idx = j;
    }
    if (idx == s.input_names_.size()) fail(ErrorCode::parse, "standardizer: retained feature '" + f.name + "' is not an input");
    if (!(f.sd > 0.0)) fail(ErrorCode::parse, "standardizer: non-positive sd for '" + f.name + "'");
    s.source_index_.push_back(idx);
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> raw_row) const {
  if (raw_row.size() != input_names_.size()) {
    fail(ErrorCode::shape_mismatch, "standardizer: row has " + std::to_string(raw_row.size()) + " values, expected " +
                                        std::to_string(input_names_.size()));
  }
  std::vector<double> z(retained_.size());
  for (std::size_t k = 0; k < retained_.size(); ++k) z[k] = apply_one(k, raw_row[source_index_[k]]);
  return z;
}

double Standardizer::apply_one(std::size_t k, double value) const {
  return (value - retained_.at(k).mean) / retained_[k].sd;
}

double Standardizer::invert_one(std::size_t k, double z) const { return z * retained_.at(k).sd + retained_[k].mean; }

std::vector<double> Standardizer::invert(std::span<const double> z_row) const {
  if (z_row.size() != retained_.size()) fail(ErrorCode::shape_mismatch, "standardizer: inverse row has wrong length");
  std::vector<double> out(z_row.size());
  for (std::size_t k = 0; k < z_row.size(); ++k) out[k] = invert_one(k, z_row[k]);
  return out;
}

}  // namespace fundascreen::cohort
