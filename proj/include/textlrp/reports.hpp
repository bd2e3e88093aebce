#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textlrp/analysis.hpp"
#include "textlrp/attribution.hpp"
#include "textlrp/corpus.hpp"

namespace textlrp {

enum class Polarity { positive_class, negative_class, neutral };

struct HighlightSpan {
  std::string token;
  int intensity = 0;  // 0..100
  Polarity polarity = Polarity::neutral;
  bool operator==(const HighlightSpan&) const = default;
};

struct HighlightDoc {
  std::string doc_id;
  std::vector<HighlightSpan> spans;
  std::optional<int> actual_label;
  std::optional<int> blackbox_label;
  std::optional<double> blackbox_score;
  std::optional<int> surrogate_label;
  std::optional<double> surrogate_score;
};

struct HighlightOptions {
  // Spans below this intensity render without color.
  int display_floor = 10;
  std::string title = "Token relevance";
  // doc_id -> surrogate probability of class 1.
  std::map<std::string, double> surrogate_scores;
};

// Intensity is relative to the document's largest |relevance|. Red marks a
// push toward class 1, blue toward class 0. `map` may be null (no highlights).
HighlightDoc make_highlight(const RelevanceMap* map, const Document& doc, const HighlightOptions& options);

std::string render_highlights_html(std::span<const RelevanceMap> maps, const Corpus& corpus,
                                   const HighlightOptions& options = {});
void render_highlights(std::span<const RelevanceMap> maps, const Corpus& corpus, const std::string& out_path,
                       const HighlightOptions& options = {});

enum class CaseKind { false_positive, false_negative, true_positive };

std::string to_string(CaseKind kind);

struct CaseSheet {
  CaseKind kind = CaseKind::false_positive;
  std::vector<HighlightDoc> rows;
};

// FP: actual 0 / predicted 1, by descending score. FN: actual 1 / predicted 0,
// by ascending score. TP: actual 1 / predicted 1, by descending score.
CaseSheet case_sheets(std::span<const RelevanceMap> maps, const Corpus& corpus, CaseKind kind, std::size_t limit,
                      const HighlightOptions& options = {});
std::string render_case_sheet_html(const CaseSheet& sheet, const HighlightOptions& options = {});

// Tidy CSV exports, one row per point or instance.
void export_plot_data(std::span<const DeletionCurve> curves, const std::string& out_path);
void export_plot_data(std::span<const NgramReport> reports, const std::string& out_path);
void export_plot_data(std::span<const GlobalImportance> importances, const std::string& out_path);
void export_correlation(const CorrelationMatrix& matrix, const std::string& out_path);

std::vector<DeletionCurve> read_deletion_csv(const std::string& path);
std::vector<NgramReport> read_ngram_csv(const std::string& path);
std::vector<GlobalImportance> read_importance_csv(const std::string& path);

}  // namespace textlrp
