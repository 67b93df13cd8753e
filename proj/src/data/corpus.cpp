#include "cag/data/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "cag/autodiff/ops.hpp"

namespace cag::data {

Corpus::Corpus(std::vector<SequenceRecord> records) : records_(std::move(records)) {
  std::map<std::string, std::size_t> ids;
  for (const auto& r : records_) ids.emplace(r.subject, 0);
  for (auto& [name, id] : ids) {
    id = subjects_.size();
    subjects_.push_back(name);
  }
  by_subject_.resize(subjects_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    labels_.push_back(ids.at(records_[i].subject));
    by_subject_[labels_.back()].push_back(i);
  }
}

Corpus load_corpus(const std::filesystem::path& root, const graph::SkeletonSpec& spec, std::size_t views) {
  if (!std::filesystem::is_directory(root)) throw DataError("corpus directory not found: " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  if (files.empty()) throw DataError("no .jsonl sequences under " + root.string());
  std::sort(files.begin(), files.end());
  std::vector<SequenceRecord> records;
  records.reserve(files.size());
  for (const auto& f : files) {
    records.push_back(parse_sequence_file(f, spec));
    try {
      records.back().validate(views);
    } catch (const DataError& e) {
      throw DataError(f.string() + ": " + e.what());
    }
  }
  return Corpus(std::move(records));
}

void BatchSpec::validate() const {
  if (p < 2) throw DataError("batch needs at least 2 subjects, got p=" + std::to_string(p));
  if (k < 2) throw DataError("batch needs at least 2 sequences per subject, got k=" + std::to_string(k));
}

Batch sample_batch(const Corpus& corpus, const BatchSpec& spec, std::size_t frames, std::mt19937_64& rng) {
  spec.validate();
  if (corpus.subject_count() < spec.p) {
    throw DataError("batch needs " + std::to_string(spec.p) + " subjects, corpus has " +
                    std::to_string(corpus.subject_count()));
  }
  std::vector<std::size_t> subjects(corpus.subject_count());
  std::iota(subjects.begin(), subjects.end(), 0);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  subjects.resize(spec.p);

  Batch batch;
  std::vector<ad::Tensor> clips;
  for (std::size_t s : subjects) {
    std::vector<std::size_t> pool = corpus.records_of(s);
    std::vector<std::size_t> chosen;
    if (pool.size() >= spec.k) {
      std::shuffle(pool.begin(), pool.end(), rng);
      chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.k));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t i = 0; i < spec.k; ++i) chosen.push_back(pool[pick(rng)]);
    }
    for (std::size_t r : chosen) {
      const auto& rec = corpus.records()[r];
      clips.push_back(sample_fixed_length(rec, frames, SampleMode::train, rng));
      batch.subjects.push_back(s);
      batch.views.push_back(rec.view);
      batch.records.push_back(r);
    }
  }
  batch.x = ad::stack(clips, 0);
  return batch;
}

ad::Tensor stack_records(const Corpus& corpus, const std::vector<std::size_t>& records, std::size_t frames) {
  if (records.empty()) throw DataError("stack_records: no records");
  std::mt19937_64 unused(0);
  std::vector<ad::Tensor> clips;
  clips.reserve(records.size());
  for (std::size_t r : records) clips.push_back(sample_fixed_length(corpus.records().at(r), frames, SampleMode::eval, unused));
  return ad::stack(clips, 0);
}

}  // namespace cag::data
