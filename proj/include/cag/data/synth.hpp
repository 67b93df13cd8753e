#pragma once

#include <cstdint>
#include <string>

#include "cag/data/sequence.hpp"

namespace cag::data {

struct SynthOptions {
  std::size_t views = 11;
  std::size_t frames = 40;
  double noise = 0.01;
};

// Treadmill walker in 3D (x forward, y up, z towards the subject's left)
// projected orthographically at azimuth view * 180 / (views - 1) degrees.
// Subject build and gait come from `subject_seed`; start phase and jitter
// from `sequence_seed`. Conditions: nm, bg (one arm nearly still), cl
// (bulkier silhouette, damped arm swing).
SequenceRecord synthesize_sequence(std::uint64_t subject_seed, std::size_t view, const std::string& condition,
                                   const graph::SkeletonSpec& spec, std::uint64_t sequence_seed,
                                   const SynthOptions& options = {});

// Condition names for `count` sequences per view: nm-01, nm-02, bg-01,
// cl-01, then further nm/bg/cl in turn.
std::vector<std::string> synth_conditions(std::size_t count);

struct SynthCorpusOptions {
  std::size_t subjects = 8;
  std::size_t sequences = 4;
  std::uint64_t seed = 0;
  SynthOptions walker;
};

// Writes <out>/<subject>/<condition>/<view>.jsonl; returns the file count.
std::size_t write_synthetic_corpus(const std::filesystem::path& out, const graph::SkeletonSpec& spec,
                                   const SynthCorpusOptions& options);
std::vector<SequenceRecord> synthetic_corpus(const graph::SkeletonSpec& spec, const SynthCorpusOptions& options);

}  // namespace cag::data
