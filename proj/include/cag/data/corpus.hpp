#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cag/data/sequence.hpp"

namespace cag::data {

// Immutable collection of records with dense subject labels assigned in
// sorted subject-id order.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<SequenceRecord> records);

  const std::vector<SequenceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t subject_count() const { return subjects_.size(); }
  const std::vector<std::string>& subjects() const { return subjects_; }
  std::size_t label(std::size_t record) const { return labels_.at(record); }
  const std::vector<std::size_t>& records_of(std::size_t subject) const { return by_subject_.at(subject); }

 private:
  std::vector<SequenceRecord> records_;
  std::vector<std::string> subjects_;
  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> by_subject_;
};

// Every *.jsonl below `root`, in sorted path order.
Corpus load_corpus(const std::filesystem::path& root, const graph::SkeletonSpec& spec, std::size_t views = 0);

struct BatchSpec {
  std::size_t p = 8;   // subjects per batch
  std::size_t k = 16;  // sequences per subject
  void validate() const;
};

struct Batch {
  ad::Tensor x;                       // [p * k, T, N, C]
  std::vector<std::size_t> subjects;  // dense labels
  std::vector<std::size_t> views;
  std::vector<std::size_t> records;   // corpus indices
};

// p distinct subjects, k sequences each (with replacement only when a
// subject has fewer than k sequences), cropped to `frames`.
Batch sample_batch(const Corpus& corpus, const BatchSpec& spec, std::size_t frames, std::mt19937_64& rng);

// Stacks fixed-length eval crops of the listed records.
ad::Tensor stack_records(const Corpus& corpus, const std::vector<std::size_t>& records, std::size_t frames);

}  // namespace cag::data
