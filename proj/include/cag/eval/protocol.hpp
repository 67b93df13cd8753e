#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "cag/data/corpus.hpp"
#include "cag/network/model.hpp"

namespace cag::eval {

struct EmbeddingRow {
  std::string subject;
  std::size_t view = 0;
  std::string condition;
  std::vector<double> embedding;  // flattened [rows, width]
};

using EmbeddingTable = std::vector<EmbeddingRow>;

// Eval-mode embeddings of centred crops, one row per record.
EmbeddingTable extract_embeddings(net::Model& model, const std::vector<data::SequenceRecord>& records,
                                  std::size_t batch_size);

struct RecordScores {
  EmbeddingTable table;
  std::vector<std::size_t> predicted_views;  // empty without a view classifier
};

// One eval-mode pass giving embeddings and view predictions together.
RecordScores score_records(net::Model& model, const std::vector<data::SequenceRecord>& records,
                           std::size_t batch_size);

struct Split {
  std::vector<data::SequenceRecord> gallery;
  std::vector<data::SequenceRecord> probe;
};

// Records whose condition is listed go to the gallery, the rest to probes.
Split split_by_condition(const std::vector<data::SequenceRecord>& records,
                         const std::vector<std::string>& gallery_conditions = {"nm-01", "nm-02"});

struct ProbeResult {
  std::size_t views = 0;
  bool exclude_identical_view = true;
  // Cell (probe view p, gallery view g) at p * views + g.
  std::vector<std::size_t> hits;
  std::vector<std::size_t> probes;
  std::vector<bool> defined;
  std::vector<double> per_view;  // NaN when no cell of the row is defined
  double overall = 0.0;          // mean of the defined per-view averages
  double pooled = 0.0;           // each probe against the whole eligible gallery
  std::size_t pooled_probes = 0;

  double accuracy(std::size_t probe_view, std::size_t gallery_view) const;
  bool cell_defined(std::size_t probe_view, std::size_t gallery_view) const {
    return defined.at(probe_view * views + gallery_view);
  }
};

// Nearest gallery row by Euclidean distance, ties to the earlier row. Each
// cell only searches gallery rows of its gallery view; cells with no
// gallery rows or no probes are undefined and never averaged.
ProbeResult rank1(const EmbeddingTable& gallery, const EmbeddingTable& probe, bool exclude_identical_view = true,
                  std::size_t views = 0);

struct Evaluation {
  ProbeResult rank1;
  double view_accuracy = 0.0;  // NaN without a view classifier
};

// Scores `records`, splits them by condition and runs rank1.
Evaluation evaluate_model(net::Model& model, const std::vector<data::SequenceRecord>& records,
                          const std::vector<std::string>& gallery_conditions, bool exclude_identical_view,
                          std::size_t batch_size);

void write_csv(const ProbeResult& result, std::ostream& out);
std::string format_matrix(const ProbeResult& result);

}  // namespace cag::eval
