#include "cag/objectives/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cag/autodiff/ops.hpp"
#include "cag/autodiff/tape.hpp"

namespace cag::obj {

using ad::Tensor;

namespace {

constexpr double kDistanceEps = 1e-12;

void check_batch(const char* op, const Tensor& embeddings, const std::vector<std::size_t>& labels) {
  if (embeddings.rank() != 3) {
    throw ad::ShapeError(std::string(op) + ": embeddings must be [B, R, D], got " + ad::shape_str(embeddings.shape()));
  }
  if (labels.size() != embeddings.dim(0)) {
    throw ad::ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(embeddings.dim(0)));
  }
}

LossValue zero_loss() { return {Tensor::scalar(0.0), true}; }

double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double log_sum_exp(const std::vector<double>& z) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) mx = std::max(mx, v);
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

}  // namespace

void LossConfig::validate() const {
  if (!(triplet_margin > 0.0 && triplet_margin < 1.0)) throw std::invalid_argument("triplet margin must be in (0, 1)");
  if (!(circle_margin > 0.0 && circle_margin < 1.0)) throw std::invalid_argument("circle margin must be in (0, 1)");
  if (!(circle_scale > 0.0)) throw std::invalid_argument("circle scale must be positive");
  if (lambda_triplet < 0.0 || lambda_circle < 0.0 || lambda_view < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

LossValue triplet_loss(const Tensor& embeddings, const std::vector<std::size_t>& labels, double margin) {
  check_batch("triplet_loss", embeddings, labels);
  const std::size_t b = embeddings.dim(0);
  const std::size_t rows = embeddings.dim(1);
  const std::size_t d = embeddings.dim(2);

  std::vector<std::vector<std::size_t>> positives(b);
  std::vector<std::vector<std::size_t>> negatives(b);
  std::size_t count = 0;
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? positives[a] : negatives[a]).push_back(j);
    }
    count += positives[a].size() * negatives[a].size();
  }
  if (count == 0) return zero_loss();

  const auto e = embeddings.values();
  std::vector<double> dist(rows * b * b, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = i + 1; j < b; ++j) {
        const double* ei = e.data() + (i * rows + r) * d;
        const double* ej = e.data() + (j * rows + r) * d;
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) sq += (ei[k] - ej[k]) * (ei[k] - ej[k]);
        dist[(r * b + i) * b + j] = dist[(r * b + j) * b + i] = std::sqrt(sq + kDistanceEps);
      }

  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double row = 0.0;
    for (std::size_t a = 0; a < b; ++a)
      for (std::size_t p : positives[a])
        for (std::size_t n : negatives[a])
          row += std::max(0.0, dist[(r * b + a) * b + p] - dist[(r * b + a) * b + n] + margin);
    total += row / static_cast<double>(count);
  }
  total /= static_cast<double>(rows);

  const bool rg = ad::any_requires_grad({&embeddings});
  Tensor out = ad::make_result({1}, {total}, rg);
  if (rg) {
    auto ei = embeddings.impl();
    ad::active_tape().record(
        "triplet_loss", {ei}, out.impl(),
        [ei, dist = std::move(dist), positives, negatives, count, rows, b, d, margin](std::span<const double> g) {
          const double coef = g[0] / (static_cast<double>(count) * static_cast<double>(rows));
          std::vector<double> gd(rows * b * b, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t a = 0; a < b; ++a)
              for (std::size_t p : positives[a])
                for (std::size_t n : negatives[a]) {
                  const std::size_t ap = (r * b + a) * b + p;
                  const std::size_t an = (r * b + a) * b + n;
                  if (dist[ap] - dist[an] + margin > 0.0) {
                    gd[ap] += coef;
                    gd[an] -= coef;
                  }
                }
          auto& ge = ad::grad_buffer(*ei);
          const auto& e = ei->values;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < b; ++i)
              for (std::size_t j = 0; j < b; ++j) {
                const double w = gd[(r * b + i) * b + j];
                if (w == 0.0) continue;
                const double scale = w / dist[(r * b + i) * b + j];
                const std::size_t oi = (i * rows + r) * d;
                const std::size_t oj = (j * rows + r) * d;
                for (std::size_t k = 0; k < d; ++k) {
                  const double diff = scale * (e[oi + k] - e[oj + k]);
                  ge[oi + k] += diff;
                  ge[oj + k] -= diff;
                }
              }
        });
  }
  return {out, false};
}

LossValue circle_loss(const Tensor& embeddings, const std::vector<std::size_t>& labels, double margin, double scale) {
  check_batch("circle_loss", embeddings, labels);
  const std::size_t b = embeddings.dim(0);
  const std::size_t len = embeddings.dim(1) * embeddings.dim(2);
  const auto e = embeddings.values();

  struct Pair {
    std::size_t i, j;
    double s;
    double z;
  };
  std::vector<double> norms(b);
  for (std::size_t i = 0; i < b; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < len; ++k) sq += e[i * len + k] * e[i * len + k];
    norms[i] = std::sqrt(sq + kDistanceEps);
  }
  std::vector<Pair> pos;
  std::vector<Pair> neg;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += e[i * len + k] * e[j * len + k];
      const double s = dot / (norms[i] * norms[j]);
      if (labels[i] == labels[j]) {
        const double alpha = std::max(0.0, 1.0 + margin - s);
        pos.push_back({i, j, s, -scale * alpha * (s - (1.0 - margin))});
      } else {
        const double alpha = std::max(0.0, s + margin);
        neg.push_back({i, j, s, scale * alpha * (s - margin)});
      }
    }
  if (pos.empty() || neg.empty()) return zero_loss();

  std::vector<double> zp;
  std::vector<double> zn;
  for (const auto& p : pos) zp.push_back(p.z);
  for (const auto& n : neg) zn.push_back(n.z);
  const double lse_p = log_sum_exp(zp);
  const double lse_n = log_sum_exp(zn);
  const double u = lse_p + lse_n;
  const double value = softplus(u);

  const bool rg = ad::any_requires_grad({&embeddings});
  Tensor out = ad::make_result({1}, {value}, rg);
  if (rg) {
    auto ei = embeddings.impl();
    ad::active_tape().record(
        "circle_loss", {ei}, out.impl(),
        [ei, pos, neg, norms, lse_p, lse_n, u, b, len, margin, scale](std::span<const double> g) {
          const double sig = 1.0 / (1.0 + std::exp(-u));
          // dL/ds for every pair, then chain through the cosine similarity.
          std::vector<double> ds(b * b, 0.0);
          for (const auto& p : pos) {
            const double w = std::exp(p.z - lse_p);
            const bool active = 1.0 + margin - p.s > 0.0;
            const double alpha = active ? 1.0 + margin - p.s : 0.0;
            const double dalpha = active ? -1.0 : 0.0;
            const double dz = -scale * (dalpha * (p.s - (1.0 - margin)) + alpha);
            ds[p.i * b + p.j] += g[0] * sig * w * dz;
          }
          for (const auto& n : neg) {
            const double w = std::exp(n.z - lse_n);
            const bool active = n.s + margin > 0.0;
            const double alpha = active ? n.s + margin : 0.0;
            const double dalpha = active ? 1.0 : 0.0;
            const double dz = scale * (dalpha * (n.s - margin) + alpha);
            ds[n.i * b + n.j] += g[0] * sig * w * dz;
          }
          auto& ge = ad::grad_buffer(*ei);
          const auto& e = ei->values;
          auto chain = [&](const std::vector<Pair>& pairs) {
            for (const auto& p : pairs) {
              const double w = ds[p.i * b + p.j];
              if (w == 0.0) continue;
              const double inv = 1.0 / (norms[p.i] * norms[p.j]);
              const double si = p.s / (norms[p.i] * norms[p.i]);
              const double sj = p.s / (norms[p.j] * norms[p.j]);
              for (std::size_t k = 0; k < len; ++k) {
                const double xi = e[p.i * len + k];
                const double xj = e[p.j * len + k];
                ge[p.i * len + k] += w * (xj * inv - si * xi);
                ge[p.j * len + k] += w * (xi * inv - sj * xj);
              }
            }
          };
          chain(pos);
          chain(neg);
        });
  }
  return {out, false};
}

Tensor view_ce_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw ad::ShapeError("view_ce_loss: logits must be [B, K], got " + ad::shape_str(logits.shape()));
  const std::size_t b = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.size() != b) {
    throw ad::ShapeError("view_ce_loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(b));
  }
  for (std::size_t label : labels) {
    if (label >= k) {
      throw std::out_of_range("view_ce_loss: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto z = logits.values();
  std::vector<double> probs(b * k);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> row(z.begin() + i * k, z.begin() + (i + 1) * k);
    const double lse = log_sum_exp(row);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  total /= static_cast<double>(b);
  const bool rg = ad::any_requires_grad({&logits});
  Tensor out = ad::make_result({1}, {total}, rg);
  if (rg) {
    auto li = logits.impl();
    ad::active_tape().record("view_ce_loss", {li}, out.impl(),
                             [li, probs = std::move(probs), labels, b, k](std::span<const double> g) {
                               auto& gl = ad::grad_buffer(*li);
                               const double coef = g[0] / static_cast<double>(b);
                               for (std::size_t i = 0; i < b; ++i)
                                 for (std::size_t j = 0; j < k; ++j)
                                   gl[i * k + j] += coef * (probs[i * k + j] - (j == labels[i] ? 1.0 : 0.0));
                             });
  }
  return out;
}

Tensor total_loss(const LossParts& parts, const LossConfig& config) {
  const std::pair<const char*, const Tensor*> named[] = {
      {"triplet", &parts.triplet}, {"circle", &parts.circle}, {"view", &parts.view}};
  for (const auto& [name, t] : named) {
    if (!t->defined()) continue;
    if (t->numel() != 1) throw ad::ShapeError(std::string("total_loss: ") + name + " loss is not a scalar");
    if (!std::isfinite(t->item())) {
      throw NonFiniteLoss(std::string("total_loss: ") + name + " loss is not finite (" + std::to_string(t->item()) + ")");
    }
  }
  auto term = [](const Tensor& t, double w) { return t.defined() ? ad::scale(t, w) : Tensor::scalar(0.0); };
  return ad::add(ad::add(term(parts.triplet, config.lambda_triplet), term(parts.circle, config.lambda_circle)),
                 term(parts.view, config.lambda_view));
}

}  // namespace cag::obj
