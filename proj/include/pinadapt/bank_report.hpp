#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/errors.hpp"
#include "pinadapt/mining.hpp"

namespace pinadapt {

/// Box-plot summary: quartiles by linear interpolation between order
/// statistics, whiskers at the furthest points within 1.5 IQR.
struct FiveNumberSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline FiveNumberSummary summarize(std::vector<double> values) {
  if (values.empty()) throw ValidationError("summarize: no values");
  std::sort(values.begin(), values.end());
  FiveNumberSummary s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (const double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_low = std::min(s.whisker_low, v);
      s.whisker_high = std::max(s.whisker_high, v);
    }
  }
  return s;
}

struct BankDiversityReport {
  std::vector<FiveNumberSummary> mu;     // per channel
  std::vector<FiveNumberSummary> sigma;  // per channel
  /// Mean over the 2C (mu, sigma) coordinates of the population standard
  /// deviation across bank entries.
  double diversity_score = 0.0;
};

inline double population_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double sq = 0.0;
  for (const double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size()));
}

inline BankDiversityReport bank_diversity_report(const StyleBank& bank) {
  bank.validate();
  if (bank.size() < 2) throw ValidationError("bank_diversity_report: need at least 2 styles");
  const std::size_t channels = bank.manifest.channels;
  BankDiversityReport report;
  double total_std = 0.0;
  std::vector<double> mu_col(bank.size());
  std::vector<double> sigma_col(bank.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < bank.size(); ++i) {
      mu_col[i] = bank.styles[i].mu[c];
      sigma_col[i] = bank.styles[i].sigma[c];
    }
    total_std += population_std(mu_col) + population_std(sigma_col);
    report.mu.push_back(summarize(mu_col));
    report.sigma.push_back(summarize(sigma_col));
  }
  report.diversity_score = total_std / static_cast<double>(2 * channels);
  return report;
}

inline nlohmann::json to_json(const FiveNumberSummary& s) {
  return {{"min", s.min},           {"q1", s.q1}, {"median", s.median},
          {"q3", s.q3},             {"max", s.max}, {"whisker_low", s.whisker_low},
          {"whisker_high", s.whisker_high}, {"outliers", s.outliers}};
}

inline nlohmann::json to_json(const BankDiversityReport& r) {
  nlohmann::json mu = nlohmann::json::array();
  nlohmann::json sigma = nlohmann::json::array();
  for (const auto& s : r.mu) mu.push_back(to_json(s));
  for (const auto& s : r.sigma) sigma.push_back(to_json(s));
  return {{"diversity_score", r.diversity_score}, {"mu", mu}, {"sigma", sigma}};
}

}  // namespace pinadapt
