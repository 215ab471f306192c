#include "gense/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "gense/rng.hpp"

namespace gense {

void TokenDistribution::validate() const {
  if (probs.empty()) throw std::invalid_argument("empty token distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("token distribution has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("token distribution sums to " + std::to_string(total));
}

void BackboneConfig::validate() const {
  if (max_decode_len == 0) throw std::invalid_argument("max_decode_len must be positive");
  if (!(nucleus_p > 0.0 && nucleus_p <= 1.0))
    throw std::invalid_argument("nucleus_p must be in (0, 1]");
}

TokenDistribution nucleus_filter(const TokenDistribution& dist, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nucleus p must be in (0, 1]");
  // Full mass is retained; skip the sort so rounding cannot drop a tail token.
  if (p == 1.0) return dist;
  const std::size_t n = dist.probs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist.probs[a] > dist.probs[b];
  });

  TokenDistribution out{std::vector<double>(n, 0.0)};
  double mass = 0.0;
  for (std::size_t idx : order) {
    out.probs[idx] = dist.probs[idx];
    mass += dist.probs[idx];
    if (mass >= p) break;
  }
  for (double& v : out.probs) v /= mass;
  return out;
}

std::size_t draw_token(const TokenDistribution& dist, double u) {
  double running = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    last_nonzero = i;
    running += dist.probs[i];
    if (running > u) return i;
  }
  return last_nonzero;
}

std::vector<double> normalize_log_scores(std::span<const double> log_scores) {
  if (log_scores.empty()) throw std::invalid_argument("no scores to normalize");
  const double peak = *std::max_element(log_scores.begin(), log_scores.end());
  std::vector<double> out(log_scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_scores[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

DecodeResult Seq2SeqBackbone::sample(std::string_view input, const BackboneConfig& config) const {
  config.validate();
  Rng rng(config.seed);
  DecodeResult out;
  while (out.tokens.size() < config.max_decode_len) {
    const auto filtered = nucleus_filter(next_token_distribution(input, out.tokens), config.nucleus_p);
    const int token = static_cast<int>(draw_token(filtered, rng.uniform()));
    if (token == eos_token()) {
      out.text = detokenize(out.tokens);
      return out;
    }
    out.tokens.push_back(token);
  }
  out.truncated = true;
  out.text = detokenize(out.tokens);
  return out;
}

DecodeResult Seq2SeqBackbone::greedy(std::string_view input, std::size_t max_decode_len) const {
  DecodeResult out;
  while (out.tokens.size() < max_decode_len) {
    const auto dist = next_token_distribution(input, out.tokens);
    const auto best = std::max_element(dist.probs.begin(), dist.probs.end());
    const int token = static_cast<int>(best - dist.probs.begin());
    if (token == eos_token()) {
      out.text = detokenize(out.tokens);
      return out;
    }
    out.tokens.push_back(token);
  }
  out.truncated = true;
  out.text = detokenize(out.tokens);
  return out;
}

std::vector<double> Seq2SeqBackbone::label_probability(std::string_view input,
                                                       std::span<const std::string> labels) const {
  if (labels.empty()) throw std::invalid_argument("label_probability needs at least one label");
  std::set<std::string_view> seen;
  std::vector<double> log_scores;
  for (const auto& label : labels) {
    if (!seen.insert(label).second) throw std::invalid_argument("duplicate label: " + label);
    if (tokenize(label).empty()) throw std::invalid_argument("label tokenizes to nothing: '" + label + "'");
    log_scores.push_back(-target_nll(input, label).total);
  }
  return normalize_log_scores(log_scores);
}

void Seq2SeqBackbone::zero_grad() {
  for (ad::Parameter* p : parameters()) p->grad.fill(0.0);
}

}  // namespace gense
