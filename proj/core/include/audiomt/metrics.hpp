#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace audiomt {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Lowercase, strip trailing punctuation from each word, split words (CJK
// characters are words of their own).
std::vector<std::string> wer_words(std::string_view text);

EditCounts edit_counts(std::span<const std::string> hyp, std::span<const std::string> ref);

// Word error rate. Throws Undefined when the reference has no words.
double wer(std::string_view hyp, std::string_view ref);

// Corpus 4-gram BLEU in [0, 100], no smoothing. Throws InputMismatch on
// differing lengths, Undefined when every reference is empty.
double bleu(std::span<const std::string> hyps, std::span<const std::string> refs);

// Exact-match fraction after whitespace and case normalization.
double accuracy(std::span<const std::string> preds, std::span<const std::string> labels);

struct EvalItem {
  std::string id;
  std::string hypothesis;
  std::string reference;
  double value = 0.0;
};

struct EvalReport {
  std::string task;
  std::string metric;
  double value = 0.0;
  std::size_t support = 0;
  std::vector<EvalItem> items;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const EvalReport& report, bool include_items = false);

// Aligned plain-text table, one row per report.
void write_table(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace audiomt
