#include "cag/data/synth.hpp"

#include <array>
#include <cmath>
#include <map>
#include <numbers>

namespace cag::data {

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }

// Direction in the sagittal plane, `angle` radians forward of straight down.
Vec3 down(double angle) { return {std::sin(angle), -std::cos(angle), 0.0}; }

struct Build {
  double thigh, shin, torso, upper_arm, forearm, head;
  double shoulder_half, hip_half;
  double leg_swing, knee_bend, arm_swing, elbow_bend;
  double cadence;  // radians per frame
  double lean, bounce, phase;
};

Build subject_build(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double height = u(0.85, 1.15);
  Build b{};
  b.thigh = 0.25 * height * u(0.85, 1.15);
  b.shin = 0.25 * height * u(0.85, 1.15);
  b.torso = 0.30 * height * u(0.9, 1.1);
  b.upper_arm = 0.17 * height * u(0.85, 1.15);
  b.forearm = 0.15 * height * u(0.85, 1.15);
  b.head = 0.10 * height * u(0.9, 1.1);
  b.shoulder_half = 0.10 * height * u(0.8, 1.2);
  b.hip_half = 0.07 * height * u(0.8, 1.2);
  b.leg_swing = u(0.30, 0.55);
  b.knee_bend = u(0.3, 0.8);
  b.arm_swing = u(0.2, 0.6);
  b.elbow_bend = u(0.1, 0.5);
  b.cadence = 2.0 * std::numbers::pi / u(20.0, 32.0);
  b.lean = u(-0.05, 0.15);
  b.bounce = u(0.005, 0.03);
  b.phase = u(0.0, 2.0 * std::numbers::pi);
  return b;
}

std::map<std::string, Vec3> pose(const Build& b, const std::string& tag, double phase) {
  double shoulder_half = b.shoulder_half;
  double hip_half = b.hip_half;
  double left_arm = b.arm_swing;
  double right_arm = b.arm_swing;
  double right_elbow = b.elbow_bend;
  if (tag == "bg") {
    right_arm *= 0.2;
    right_elbow = 0.1;
  } else if (tag == "cl") {
    shoulder_half *= 1.15;
    hip_half *= 1.15;
    left_arm *= 0.7;
    right_arm *= 0.7;
  }

  std::map<std::string, Vec3> p;
  const Vec3 pelvis{0.0, b.thigh + b.shin + b.bounce * std::cos(2.0 * phase), 0.0};
  const std::array<std::pair<const char*, double>, 2> sides = {{{"left", 1.0}, {"right", -1.0}}};
  for (const auto& [side, s] : sides) {
    const double offset = s > 0 ? 0.0 : std::numbers::pi;
    const double swing = b.leg_swing * std::sin(phase + offset);
    const double bend = b.knee_bend * std::max(0.0, std::sin(phase + offset + 0.5 * std::numbers::pi));
    const Vec3 hip = pelvis + Vec3{0.0, 0.0, s * hip_half};
    const Vec3 knee = hip + b.thigh * down(swing);
    p[std::string(side) + "_hip"] = hip;
    p[std::string(side) + "_knee"] = knee;
    p[std::string(side) + "_ankle"] = knee + b.shin * down(swing - bend);
  }
  const Vec3 neck = pelvis + b.torso * Vec3{std::sin(b.lean), std::cos(b.lean), 0.0};
  p["neck"] = neck;
  for (const auto& [side, s] : sides) {
    const bool left = s > 0;
    const double amplitude = left ? left_arm : right_arm;
    const double swing = amplitude * std::sin(phase + (left ? std::numbers::pi : 0.0));
    const double elbow_bend = left ? b.elbow_bend : right_elbow;
    const Vec3 shoulder = neck + Vec3{0.0, -0.02, s * shoulder_half};
    const Vec3 elbow = shoulder + b.upper_arm * down(swing);
    p[std::string(side) + "_shoulder"] = shoulder;
    p[std::string(side) + "_elbow"] = elbow;
    p[std::string(side) + "_wrist"] = elbow + b.forearm * down(swing + elbow_bend);
  }
  const Vec3 nose = neck + Vec3{0.4 * b.head, b.head, 0.0};
  p["nose"] = nose;
  p["left_eye"] = nose + Vec3{-0.02, 0.03, 0.03};
  p["right_eye"] = nose + Vec3{-0.02, 0.03, -0.03};
  p["left_ear"] = nose + Vec3{-0.08, 0.01, 0.07};
  p["right_ear"] = nose + Vec3{-0.08, 0.01, -0.07};
  return p;
}

}  // namespace

SequenceRecord synthesize_sequence(std::uint64_t subject_seed, std::size_t view, const std::string& condition,
                                   const graph::SkeletonSpec& spec, std::uint64_t sequence_seed,
                                   const SynthOptions& options) {
  if (options.views < 2) throw DataError("synthesize_sequence: at least two views are required");
  if (view >= options.views) {
    throw DataError("synthesize_sequence: view " + std::to_string(view) + " outside [0, " +
                    std::to_string(options.views) + ")");
  }
  if (options.frames == 0) throw DataError("synthesize_sequence: frames must be positive");
  const Build build = subject_build(subject_seed);
  SequenceRecord rec;
  rec.subject = "s" + std::to_string(subject_seed);
  rec.view = view;
  rec.condition = condition;
  rec.joints = spec.joint_count;
  rec.channels = 2;
  const std::string tag = rec.condition_tag();

  std::mt19937_64 rng(sequence_seed);
  const double start = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  std::normal_distribution<double> jitter(0.0, options.noise);
  const double azimuth = static_cast<double>(view) * std::numbers::pi / static_cast<double>(options.views - 1);
  const double ca = std::cos(azimuth);
  const double sa = std::sin(azimuth);
  rec.coords.reserve(options.frames * spec.joint_count * 2);
  for (std::size_t t = 0; t < options.frames; ++t) {
    const auto joints = pose(build, tag, build.phase + start + build.cadence * static_cast<double>(t));
    for (const auto& name : spec.joint_names) {
      const auto it = joints.find(name);
      if (it == joints.end()) {
        throw DataError("synthesize_sequence: skeleton " + spec.name + " has joint '" + name +
                        "' the walker does not model");
      }
      const Vec3 q = it->second + Vec3{jitter(rng), jitter(rng), jitter(rng)};
      rec.coords.push_back(ca * q.z + sa * q.x);
      rec.coords.push_back(q.y);
    }
  }
  rec.validate(options.views);
  return rec;
}

std::vector<std::string> synth_conditions(std::size_t count) {
  std::vector<std::string> out;
  std::map<std::string, int> used;
  const char* const order[] = {"nm", "nm", "bg", "cl"};
  for (std::size_t i = 0; i < count; ++i) {
    const std::string tag = i < 4 ? order[i] : order[1 + (i - 4) % 3];
    const int n = ++used[tag];
    out.push_back(tag + (n < 10 ? "-0" : "-") + std::to_string(n));
  }
  return out;
}

std::vector<SequenceRecord> synthetic_corpus(const graph::SkeletonSpec& spec, const SynthCorpusOptions& options) {
  std::vector<SequenceRecord> out;
  const auto conditions = synth_conditions(options.sequences);
  std::mt19937_64 seeds(options.seed);
  for (std::size_t s = 0; s < options.subjects; ++s) {
    const std::uint64_t subject_seed = options.seed * 1000003ull + s;
    for (const auto& condition : conditions)
      for (std::size_t v = 0; v < options.walker.views; ++v) {
        SequenceRecord rec = synthesize_sequence(subject_seed, v, condition, spec, seeds(), options.walker);
        char name[16];
        std::snprintf(name, sizeof name, "%03zu", s + 1);
        rec.subject = name;
        out.push_back(std::move(rec));
      }
  }
  return out;
}

std::size_t write_synthetic_corpus(const std::filesystem::path& out, const graph::SkeletonSpec& spec,
                                   const SynthCorpusOptions& options) {
  std::size_t written = 0;
  for (const auto& rec : synthetic_corpus(spec, options)) {
    char view[16];
    std::snprintf(view, sizeof view, "%03zu.jsonl", rec.view);
    write_sequence_file(out / rec.subject / rec.condition / view, rec);
    ++written;
  }
  return written;
}

}  // namespace cag::data
