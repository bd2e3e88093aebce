#include "textlrp/reports.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "textlrp/csv.hpp"
#include "textlrp/error.hpp"
#include "textlrp/format.hpp"

namespace textlrp {

std::string to_string(CaseKind kind) {
  switch (kind) {
    case CaseKind::false_positive: return "false_positive";
    case CaseKind::false_negative: return "false_negative";
    case CaseKind::true_positive: return "true_positive";
  }
  return "unknown";
}

HighlightDoc make_highlight(const RelevanceMap* map, const Document& doc, const HighlightOptions& options) {
  HighlightDoc h;
  h.doc_id = doc.id;
  h.actual_label = doc.label;
  h.blackbox_label = doc.predicted_label;
  h.blackbox_score = doc.predicted_score;
  if (auto it = options.surrogate_scores.find(doc.id); it != options.surrogate_scores.end()) {
    h.surrogate_score = it->second;
    h.surrogate_label = it->second >= 0.5 ? 1 : 0;
  }
  std::vector<double> relevance(doc.tokens.size(), 0.0);
  bool toward_one = true;
  if (map) {
    toward_one = map->target_class == 1;
    for (const auto& s : map->scores) {
      if (s.position < relevance.size()) relevance[s.position] = s.relevance;
    }
  }
  double max_abs = 0.0;
  for (double r : relevance) max_abs = std::max(max_abs, std::abs(r));
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    HighlightSpan span;
    span.token = doc.tokens[i];
    const double r = relevance[i];
    span.intensity = max_abs == 0.0 ? 0 : static_cast<int>(std::lround(100.0 * std::abs(r) / max_abs));
    if (span.intensity < options.display_floor || span.intensity == 0) {
      span.polarity = Polarity::neutral;
    } else {
      span.polarity = (r > 0) == toward_one ? Polarity::positive_class : Polarity::negative_class;
    }
    h.spans.push_back(std::move(span));
  }
  return h;
}

namespace {

constexpr const char* kStyle =
    "body{font-family:sans-serif;margin:1.5em}"
    "table{border-collapse:collapse;width:100%}"
    "th,td{border:1px solid #999;padding:4px 6px;vertical-align:top;text-align:left}"
    ".tok{padding:0 2px;border-radius:2px;line-height:1.8}";

std::string optional_label(const std::optional<int>& v) { return v ? std::to_string(*v) : "-"; }
std::string optional_score(const std::optional<double>& v) { return v ? format_fixed(*v, 2) : "-"; }

void write_span(std::ostringstream& out, const HighlightSpan& span) {
  out << "<span class=\"tok\"";
  if (span.polarity != Polarity::neutral) {
    const std::string alpha = format_fixed(span.intensity / 100.0, 2);
    out << " style=\"background:" << (span.polarity == Polarity::positive_class ? "rgba(255,0,0," : "rgba(0,0,255,")
        << alpha << ")\"";
  }
  out << " data-intensity=\"" << span.intensity << "\">" << html_escape(span.token) << "</span>";
}

void write_rows(std::ostringstream& out, std::span<const HighlightDoc> rows) {
  out << "<table>\n<tr><th>ID</th><th>Label</th><th>Black box</th><th>Surrogate</th><th>Text</th></tr>\n";
  for (const auto& h : rows) {
    out << "<tr><td>" << html_escape(h.doc_id) << "</td><td>" << optional_label(h.actual_label) << "</td><td>"
        << optional_score(h.blackbox_score) << " (" << optional_label(h.blackbox_label) << ")</td><td>"
        << optional_score(h.surrogate_score) << " (" << optional_label(h.surrogate_label) << ")</td><td>";
    for (std::size_t i = 0; i < h.spans.size(); ++i) {
      if (i) out << ' ';
      write_span(out, h.spans[i]);
    }
    out << "</td></tr>\n";
  }
  out << "</table>\n";
}

std::string page(const std::string& title, std::span<const HighlightDoc> rows) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << html_escape(title)
      << "</title>\n<style>" << kStyle << "</style></head>\n<body>\n<h1>" << html_escape(title) << "</h1>\n"
      << "<p>Red: contribution toward class 1. Blue: contribution toward class 0.</p>\n";
  write_rows(out, rows);
  out << "</body></html>\n";
  return out.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace

std::string render_highlights_html(std::span<const RelevanceMap> maps, const Corpus& corpus,
                                   const HighlightOptions& options) {
  std::vector<HighlightDoc> rows;
  rows.reserve(maps.size());
  for (const auto& m : maps) {
    const Document* doc = corpus.find(m.doc_id);
    if (!doc) throw Error("relevance map refers to unknown document '" + m.doc_id + "'");
    rows.push_back(make_highlight(&m, *doc, options));
  }
  return page(options.title, rows);
}

void render_highlights(std::span<const RelevanceMap> maps, const Corpus& corpus, const std::string& out_path,
                       const HighlightOptions& options) {
  write_text(out_path, render_highlights_html(maps, corpus, options));
}

CaseSheet case_sheets(std::span<const RelevanceMap> maps, const Corpus& corpus, CaseKind kind, std::size_t limit,
                      const HighlightOptions& options) {
  std::unordered_map<std::string, const RelevanceMap*> by_id;
  for (const auto& m : maps) by_id.emplace(m.doc_id, &m);
  std::vector<const Document*> picked;
  for (const auto& doc : corpus) {
    if (!doc.label || !doc.predicted_label) continue;
    const int a = *doc.label;
    const int p = *doc.predicted_label;
    const bool match = (kind == CaseKind::false_positive && a == 0 && p == 1) ||
                       (kind == CaseKind::false_negative && a == 1 && p == 0) ||
                       (kind == CaseKind::true_positive && a == 1 && p == 1);
    if (match) picked.push_back(&doc);
  }
  const bool ascending = kind == CaseKind::false_negative;
  std::stable_sort(picked.begin(), picked.end(), [&](const Document* x, const Document* y) {
    return ascending ? *x->predicted_score < *y->predicted_score : *x->predicted_score > *y->predicted_score;
  });
  if (picked.size() > limit) picked.resize(limit);
  CaseSheet sheet;
  sheet.kind = kind;
  for (const Document* doc : picked) {
    auto it = by_id.find(doc->id);
    sheet.rows.push_back(make_highlight(it == by_id.end() ? nullptr : it->second, *doc, options));
  }
  return sheet;
}

std::string render_case_sheet_html(const CaseSheet& sheet, const HighlightOptions& options) {
  std::string title = options.title;
  switch (sheet.kind) {
    case CaseKind::false_positive: title += ": false positives (actual 0, predicted 1)"; break;
    case CaseKind::false_negative: title += ": false negatives (actual 1, predicted 0)"; break;
    case CaseKind::true_positive: title += ": true positives (actual 1, predicted 1)"; break;
  }
  return page(title, sheet.rows);
}

void export_plot_data(std::span<const DeletionCurve> curves, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  csv::write_row(out, {"method", "split", "n_removed", "recall", "recall_drop"});
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      csv::write_row(out, {c.method, c.split, std::to_string(p.n_removed), format_double(p.recall),
                           format_double(p.recall_drop)});
    }
  }
}

void export_plot_data(std::span<const NgramReport> reports, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  csv::write_row(out, {"method", "split", "n", "ngram", "doc_id", "joint_score", "predicted_label"});
  for (const auto& r : reports) {
    for (const auto& e : r.entries) {
      for (const auto& inst : e.instances) {
        csv::write_row(out, {r.method, r.split, std::to_string(r.n), e.ngram, inst.doc_id, format_double(inst.joint_score),
                             inst.predicted_label < 0 ? "" : std::to_string(inst.predicted_label)});
      }
    }
  }
}

void export_plot_data(std::span<const GlobalImportance> importances, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  csv::write_row(out, {"method", "split", "target_class", "min_count", "rank", "token", "mean_relevance", "count",
                       "normalized_score"});
  for (const auto& g : importances) {
    for (std::size_t i = 0; i < g.entries.size(); ++i) {
      const auto& e = g.entries[i];
      csv::write_row(out, {g.method, g.split, std::to_string(g.target_class), std::to_string(g.min_count),
                           std::to_string(i + 1), e.token, format_double(e.mean_relevance), std::to_string(e.count),
                           format_double(e.normalized_score)});
    }
  }
}

void export_correlation(const CorrelationMatrix& matrix, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  std::vector<std::string> header{"label"};
  header.insert(header.end(), matrix.labels.begin(), matrix.labels.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < matrix.labels.size(); ++i) {
    std::vector<std::string> row{matrix.labels[i]};
    for (std::size_t j = 0; j < matrix.labels.size(); ++j) row.push_back(format_double(matrix.values(i, j)));
    csv::write_row(out, row);
  }
}

namespace {

std::vector<csv::Record> read_table(const std::string& path, std::size_t columns) {
  auto records = csv::read_file(path);
  if (records.empty()) throw Error(path + ": missing header");
  for (const auto& r : records) {
    if (r.fields.size() != columns) throw Error(path + " line " + std::to_string(r.line) + ": wrong field count");
  }
  records.erase(records.begin());
  return records;
}

}  // namespace

std::vector<DeletionCurve> read_deletion_csv(const std::string& path) {
  std::vector<DeletionCurve> curves;
  for (const auto& r : read_table(path, 5)) {
    const auto& f = r.fields;
    if (curves.empty() || curves.back().method != f[0] || curves.back().split != f[1]) {
      curves.push_back({f[0], f[1], {}});
    }
    curves.back().points.push_back({static_cast<std::size_t>(parse_int(f[2], path)), parse_double(f[3], path),
                                    parse_double(f[4], path)});
  }
  return curves;
}

std::vector<NgramReport> read_ngram_csv(const std::string& path) {
  std::vector<NgramReport> reports;
  for (const auto& r : read_table(path, 7)) {
    const auto& f = r.fields;
    const auto n = static_cast<std::size_t>(parse_int(f[2], path));
    if (reports.empty() || reports.back().method != f[0] || reports.back().split != f[1] || reports.back().n != n) {
      reports.push_back({f[0], f[1], n, {}});
    }
    auto& entries = reports.back().entries;
    if (entries.empty() || entries.back().ngram != f[3]) entries.push_back({f[3], 0.0, 0, {}});
    entries.back().instances.push_back(
        {f[4], parse_double(f[5], path), f[6].empty() ? -1 : static_cast<int>(parse_int(f[6], path))});
  }
  for (auto& rep : reports) {
    for (auto& e : rep.entries) {
      double sum = 0.0;
      for (const auto& inst : e.instances) sum += inst.joint_score;
      e.count = e.instances.size();
      e.mean_joint_score = sum / static_cast<double>(e.count);
    }
  }
  return reports;
}

std::vector<GlobalImportance> read_importance_csv(const std::string& path) {
  std::vector<GlobalImportance> out;
  for (const auto& r : read_table(path, 9)) {
    const auto& f = r.fields;
    if (out.empty() || out.back().method != f[0] || out.back().split != f[1] || f[4] == "1") {
      GlobalImportance g;
      g.method = f[0];
      g.split = f[1];
      g.target_class = static_cast<int>(parse_int(f[2], path));
      g.min_count = static_cast<std::size_t>(parse_int(f[3], path));
      out.push_back(std::move(g));
    }
    out.back().entries.push_back({f[5], parse_double(f[6], path), static_cast<std::size_t>(parse_int(f[7], path)),
                                  parse_double(f[8], path)});
  }
  return out;
}

}  // namespace textlrp
