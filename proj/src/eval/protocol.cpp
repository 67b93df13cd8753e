#include "cag/eval/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "cag/autodiff/tape.hpp"

namespace cag::eval {

RecordScores score_records(net::Model& model, const std::vector<data::SequenceRecord>& records,
                           std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("score_records: batch size must be positive");
  const data::Corpus corpus(records);
  const std::size_t frames = model.config().frames;
  ad::NoGradGuard no_grad;
  RecordScores scores;
  scores.table.reserve(records.size());
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t end = std::min(records.size(), begin + batch_size);
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const auto out = model.forward(data::stack_records(corpus, idx, frames), ad::Mode::eval);
    const std::size_t width = out.embedding.numel() / idx.size();
    const auto values = out.embedding.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& rec = records[idx[i]];
      scores.table.push_back({rec.subject, rec.view, rec.condition,
                              std::vector<double>(values.begin() + i * width, values.begin() + (i + 1) * width)});
    }
    scores.predicted_views.insert(scores.predicted_views.end(), out.view.ids.begin(), out.view.ids.end());
  }
  return scores;
}

EmbeddingTable extract_embeddings(net::Model& model, const std::vector<data::SequenceRecord>& records,
                                  std::size_t batch_size) {
  return score_records(model, records, batch_size).table;
}

Evaluation evaluate_model(net::Model& model, const std::vector<data::SequenceRecord>& records,
                          const std::vector<std::string>& gallery_conditions, bool exclude_identical_view,
                          std::size_t batch_size) {
  auto scores = score_records(model, records, batch_size);
  EmbeddingTable gallery, probe;
  for (auto& row : scores.table) {
    const bool in_gallery = std::find(gallery_conditions.begin(), gallery_conditions.end(), row.condition) !=
                            gallery_conditions.end();
    (in_gallery ? gallery : probe).push_back(std::move(row));
  }
  Evaluation e;
  e.rank1 = rank1(gallery, probe, exclude_identical_view, model.config().views);
  if (scores.predicted_views.empty()) {
    e.view_accuracy = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) correct += scores.predicted_views[i] == records[i].view;
    e.view_accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  }
  return e;
}

Split split_by_condition(const std::vector<data::SequenceRecord>& records,
                         const std::vector<std::string>& gallery_conditions) {
  Split split;
  for (const auto& rec : records) {
    const bool gallery =
        std::find(gallery_conditions.begin(), gallery_conditions.end(), rec.condition) != gallery_conditions.end();
    (gallery ? split.gallery : split.probe).push_back(rec);
  }
  return split;
}

double ProbeResult::accuracy(std::size_t probe_view, std::size_t gallery_view) const {
  const std::size_t cell = probe_view * views + gallery_view;
  if (!defined.at(cell)) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(hits[cell]) / static_cast<double>(probes[cell]);
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Index of the nearest eligible gallery row, or npos when none is eligible.
template <typename Eligible>
std::size_t nearest(const EmbeddingTable& gallery, const EmbeddingRow& probe, Eligible eligible) {
  std::size_t best = std::string::npos;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    if (!eligible(gallery[g])) continue;
    const double d = squared_distance(gallery[g].embedding, probe.embedding);
    if (best == std::string::npos || d < best_d) {
      best = g;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

ProbeResult rank1(const EmbeddingTable& gallery, const EmbeddingTable& probe, bool exclude_identical_view,
                  std::size_t views) {
  if (gallery.empty() || probe.empty()) throw std::invalid_argument("rank1: gallery and probe must be non-empty");
  const std::size_t width = gallery.front().embedding.size();
  for (const auto* table : {&gallery, &probe})
    for (const auto& row : *table) {
      if (row.embedding.size() != width) throw std::invalid_argument("rank1: embeddings differ in size");
      views = std::max(views, row.view + 1);
    }

  ProbeResult r;
  r.views = views;
  r.exclude_identical_view = exclude_identical_view;
  r.hits.assign(views * views, 0);
  r.probes.assign(views * views, 0);
  r.defined.assign(views * views, false);

  std::vector<bool> gallery_has_view(views, false);
  for (const auto& g : gallery) gallery_has_view[g.view] = true;

  std::size_t pooled_hits = 0;
  for (const auto& p : probe) {
    for (std::size_t gv = 0; gv < views; ++gv) {
      if (!gallery_has_view[gv] || (exclude_identical_view && gv == p.view)) continue;
      const std::size_t best = nearest(gallery, p, [gv](const EmbeddingRow& g) { return g.view == gv; });
      const std::size_t cell = p.view * views + gv;
      ++r.probes[cell];
      r.hits[cell] += gallery[best].subject == p.subject;
    }
    const std::size_t best = nearest(gallery, p, [&](const EmbeddingRow& g) {
      return !(exclude_identical_view && g.view == p.view);
    });
    if (best != std::string::npos) {
      ++r.pooled_probes;
      pooled_hits += gallery[best].subject == p.subject;
    }
  }
  for (std::size_t c = 0; c < views * views; ++c) r.defined[c] = r.probes[c] > 0;

  r.per_view.assign(views, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t pv = 0; pv < views; ++pv) {
    double sum = 0.0;
    std::size_t cells = 0;
    for (std::size_t gv = 0; gv < views; ++gv) {
      if (!r.cell_defined(pv, gv)) continue;
      sum += r.accuracy(pv, gv);
      ++cells;
    }
    if (cells == 0) continue;
    r.per_view[pv] = sum / static_cast<double>(cells);
    total += r.per_view[pv];
    ++counted;
  }
  r.overall = counted ? total / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
  r.pooled = r.pooled_probes ? static_cast<double>(pooled_hits) / static_cast<double>(r.pooled_probes)
                             : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_csv(const ProbeResult& result, std::ostream& out) {
  out << "probe_view";
  for (std::size_t gv = 0; gv < result.views; ++gv) out << ",gallery_" << gv;
  out << ",mean\n";
  auto cell = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
  };
  for (std::size_t pv = 0; pv < result.views; ++pv) {
    out << pv;
    for (std::size_t gv = 0; gv < result.views; ++gv) out << ',' << cell(result.accuracy(pv, gv));
    out << ',' << cell(result.per_view[pv]) << '\n';
  }
  out << "overall";
  for (std::size_t gv = 0; gv < result.views; ++gv) out << ',';
  out << ',' << cell(result.overall) << '\n';
}

std::string format_matrix(const ProbeResult& result) {
  std::ostringstream out;
  out << "probe\\gallery";
  for (std::size_t gv = 0; gv < result.views; ++gv) out << std::setw(7) << gv;
  out << "    mean\n";
  out << std::fixed << std::setprecision(1);
  for (std::size_t pv = 0; pv < result.views; ++pv) {
    out << std::setw(13) << pv;
    for (std::size_t gv = 0; gv < result.views; ++gv) {
      if (result.cell_defined(pv, gv)) {
        out << std::setw(7) << 100.0 * result.accuracy(pv, gv);
      } else {
        out << std::setw(7) << "-";
      }
    }
    if (std::isnan(result.per_view[pv])) {
      out << std::setw(8) << "-";
    } else {
      out << std::setw(8) << 100.0 * result.per_view[pv];
    }
    out << '\n';
  }
  out << "overall rank-1 " << 100.0 * result.overall << "%  pooled " << 100.0 * result.pooled << "% ("
      << result.pooled_probes << " probes)\n";
  return out.str();
}

}  // namespace cag::eval
