#pragma once

#include <algorithm>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/adaptation.hpp"
#include "pinadapt/dataset.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/metrics.hpp"
#include "pinadapt/segmenter.hpp"

namespace pinadapt {

inline constexpr int kReportSchemaVersion = 1;

struct EvaluationReport {
  ConfusionMatrix confusion;
  MiouResult result;
  std::size_t images = 0;
  std::vector<std::uint64_t> label_pixels;  // ground-truth pixels per class
  std::string backend_id;
  std::uint64_t seed = 0;
  nlohmann::json config = nullptr;

  double miou() const noexcept { return result.miou; }
};

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json cm = nlohmann::json::array();
  for (std::size_t g = 0; g < r.confusion.num_classes(); ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.num_classes(); ++p) row.push_back(r.confusion.at(g, p));
    cm.push_back(std::move(row));
  }
  nlohmann::json j = to_json(r.result);
  j["schema_version"] = kReportSchemaVersion;
  j["images"] = r.images;
  j["counted_pixels"] = r.confusion.total();
  j["label_pixels"] = r.label_pixels;
  j["confusion"] = std::move(cm);
  j["backend_id"] = r.backend_id;
  j["seed"] = r.seed;
  j["config"] = r.config;
  return j;
}

/// Predicts every sample at its native resolution and accumulates one
/// confusion matrix. Per-image matrices are computed on `workers` threads
/// and merged by summation, so the result does not depend on `workers`.
template <SampleSource Samples>
EvaluationReport evaluate_model(const Segmenter& model, const Samples& data, std::size_t num_classes,
                                int ignore_index = kDefaultIgnoreIndex, unsigned workers = 1,
                                nlohmann::json config = nullptr) {
  if (num_classes != model.num_classes()) {
    throw ValidationError("evaluate: model predicts " + std::to_string(model.num_classes()) +
                          " classes but the dataset has " + std::to_string(num_classes));
  }
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(data.size())));

  std::vector<ConfusionMatrix> partial(workers, ConfusionMatrix(num_classes, ignore_index));
  std::vector<std::exception_ptr> errors(workers);
  auto run = [&](unsigned w) {
    try {
      for (std::size_t i = w; i < data.size(); i += workers) {
        const SegSample& s = data.sample(i);
        partial[w].accumulate(model.predict(s.image), s.label);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvaluationReport report{ConfusionMatrix(num_classes, ignore_index), {}, data.size(), {}, model.backend().id(),
                          model.seed(), std::move(config)};
  for (const auto& cm : partial) report.confusion += cm;
  report.result = miou(report.confusion);
  report.label_pixels.assign(num_classes, 0);
  for (std::size_t g = 0; g < num_classes; ++g) {
    for (std::size_t p = 0; p < num_classes; ++p) report.label_pixels[g] += report.confusion.at(g, p);
  }
  return report;
}

inline EvaluationReport evaluate_model(const Segmenter& model, const Dataset& data, unsigned workers = 1,
                                       nlohmann::json config = nullptr) {
  return evaluate_model(model, data, data.num_classes(), data.spec().ignore_index, workers, std::move(config));
}

/// Mean and population std of mIoU over independently seeded runs.
inline nlohmann::json aggregate_reports(const std::vector<EvaluationReport>& runs) {
  if (runs.empty()) throw ValidationError("aggregate: no runs");
  std::vector<double> values;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : runs) {
    values.push_back(r.miou());
    seeds.push_back(r.seed);
  }
  const MeanStd ms = mean_std(values);
  return {{"schema_version", kReportSchemaVersion},
          {"runs", runs.size()},
          {"seeds", seeds},
          {"miou_values", values},
          {"miou_mean", ms.mean},
          {"miou_std", ms.std}};
}

}  // namespace pinadapt
