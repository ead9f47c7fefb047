#include "multifuse/metrics.hpp"

#include <stdexcept>
#include <string>

namespace multifuse {

Metrics evaluate_metrics(const std::vector<int>& predictions, const std::vector<int>& truth) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument("evaluate_metrics: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(truth.size()) + " labels");
  if (predictions.empty()) throw std::invalid_argument("evaluate_metrics: empty input");

  Metrics m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if ((predictions[i] != 0 && predictions[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw std::invalid_argument("evaluate_metrics: labels must be 0 or 1");
    if (truth[i] == 1)
      predictions[i] == 1 ? ++m.tp : ++m.fn;
    else
      predictions[i] == 1 ? ++m.fp : ++m.tn;
  }

  const auto total = static_cast<double>(m.tp + m.fp + m.tn + m.fn);
  m.accuracy = static_cast<double>(m.tp + m.tn) / total;

  if (m.tp + m.fp > 0)
    m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  else
    m.precision_defined = false;

  if (m.tp + m.fn > 0)
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  else
    m.recall_defined = false;

  if (m.precision + m.recall > 0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1_defined = false;

  if (m.tn + m.fp > 0)
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  else
    m.specificity_defined = false;

  return m;
}

}  // namespace multifuse
