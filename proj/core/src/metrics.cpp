#include "audiomt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "audiomt/error.hpp"
#include "audiomt/text.hpp"

namespace audiomt {

namespace {

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

std::string normalize_label(std::string_view s) {
  return text::join_words(text::split_words(text::to_lower_ascii(s)));
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

std::vector<std::string> wer_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : text::split_words(text::to_lower_ascii(s))) {
    while (!w.empty() && is_terminal_punct(w.back())) w.pop_back();
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

EditCounts edit_counts(std::span<const std::string> hyp, std::span<const std::string> ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  struct Cell {
    std::size_t cost, sub, ins, del;
  };
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, 0, j};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, 0, i, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = hyp[i - 1] == ref[j - 1];
      Cell diag = prev[j - 1];
      diag.cost += same ? 0 : 1;
      diag.sub += same ? 0 : 1;
      Cell ins = prev[j];
      ++ins.cost;
      ++ins.ins;
      Cell del = cur[j - 1];
      ++del.cost;
      ++del.del;
      Cell best = diag;
      if (ins.cost < best.cost) best = ins;
      if (del.cost < best.cost) best = del;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return {prev[m].sub, prev[m].ins, prev[m].del, m};
}

double wer(std::string_view hyp, std::string_view ref) {
  const auto r = wer_words(ref);
  if (r.empty()) throw Error(ErrorCode::Undefined, "reference has no words");
  const auto h = wer_words(hyp);
  const auto counts = edit_counts(h, r);
  return static_cast<double>(counts.errors()) / static_cast<double>(r.size());
}

double bleu(std::span<const std::string> hyps, std::span<const std::string> refs) {
  if (hyps.size() != refs.size()) {
    throw Error(ErrorCode::InputMismatch, std::to_string(hyps.size()) + " hypotheses vs " +
                                              std::to_string(refs.size()) + " references");
  }
  constexpr std::size_t kMaxOrder = 4;
  std::array<std::size_t, kMaxOrder> matches{}, totals{};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto h = text::split_words(hyps[k]);
    const auto r = text::split_words(refs[k]);
    hyp_len += h.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto hc = ngrams(h, n);
      const auto rc = ngrams(r, n);
      for (const auto& [gram, count] : hc) {
        const auto it = rc.find(gram);
        if (it != rc.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  if (ref_len == 0) throw Error(ErrorCode::Undefined, "all references empty");
  double log_precision = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  log_precision /= kMaxOrder;
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_precision);
}

double accuracy(std::span<const std::string> preds, std::span<const std::string> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::InputMismatch, std::to_string(preds.size()) + " predictions vs " +
                                              std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorCode::Undefined, "no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (normalize_label(preds[i]) == normalize_label(labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

nlohmann::json to_json(const EvalReport& report, bool include_items) {
  nlohmann::json j = {{"task", report.task},
                      {"metric", report.metric},
                      {"value", report.value},
                      {"support", report.support}};
  if (!report.extra.empty()) j["extra"] = report.extra;
  if (include_items) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : report.items) {
      items.push_back({{"id", item.id},
                       {"hyp", item.hypothesis},
                       {"ref", item.reference},
                       {"value", item.value}});
    }
    j["items"] = items;
  }
  return j;
}

void write_table(std::ostream& out, std::span<const EvalReport> reports) {
  std::size_t task_w = 4, metric_w = 6;
  for (const auto& r : reports) {
    task_w = std::max(task_w, r.task.size());
    metric_w = std::max(metric_w, r.metric.size());
  }
  out << std::left << std::setw(static_cast<int>(task_w)) << "task" << "  "
      << std::setw(static_cast<int>(metric_w)) << "metric" << "  " << std::right
      << std::setw(12) << "value" << "  " << std::setw(8) << "support" << '\n';
  out << std::string(task_w + metric_w + 26, '-') << '\n';
  for (const auto& r : reports) {
    std::ostringstream value;
    value << std::fixed << std::setprecision(4) << r.value;
    out << std::left << std::setw(static_cast<int>(task_w)) << r.task << "  "
        << std::setw(static_cast<int>(metric_w)) << r.metric << "  " << std::right
        << std::setw(12) << value.str() << "  " << std::setw(8) << r.support << '\n';
  }
}

}  // namespace audiomt
