#pragma once

// Plain-loop re-implementation of the tiny encoder-decoder forward pass, used
// as an oracle. It shares nothing with the tape besides the parameter values.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gense/tiny_seq2seq.hpp"

namespace gense::test {

class ReferenceModel {
 public:
  using Mat = std::vector<std::vector<double>>;

  explicit ReferenceModel(TinySeq2Seq& model)
      : config_(model.config()), tokenizer_(model.tokenizer()) {
    for (ad::Parameter* p : model.parameters()) {
      Mat m(p->value.rows, std::vector<double>(p->value.cols));
      for (std::size_t r = 0; r < p->value.rows; ++r)
        for (std::size_t c = 0; c < p->value.cols; ++c) m[r][c] = p->value(r, c);
      params_[p->name] = std::move(m);
    }
  }

  Mat encode(const std::vector<int>& ids) const {
    Mat x = embed(ids, "embed.encoder_positions");
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const std::string p = "encoder." + std::to_string(l);
      const Mat n1 = layer_norm(x, p + ".norm1");
      x = add(x, attention(n1, n1, p + ".self_attn", false));
      x = add(x, ffn(layer_norm(x, p + ".norm2"), p + ".ffn"));
    }
    return layer_norm(x, "encoder.final_norm");
  }

  Mat decode(const Mat& encoded, const std::vector<int>& dec_in) const {
    Mat y = embed(dec_in, "embed.decoder_positions");
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const std::string p = "decoder." + std::to_string(l);
      const Mat n1 = layer_norm(y, p + ".norm1");
      y = add(y, attention(n1, n1, p + ".self_attn", true));
      y = add(y, attention(layer_norm(y, p + ".norm2"), encoded, p + ".cross_attn", false));
      y = add(y, ffn(layer_norm(y, p + ".norm3"), p + ".ffn"));
    }
    return layer_norm(y, "decoder.final_norm");
  }

  std::vector<double> encode_embed(const std::string& text) const {
    return decode(encode(tokenizer_.encode(text)), {WordTokenizer::kPad})[0];
  }

  /// Softmax over the vocabulary after the given decoder prefix.
  std::vector<double> next_distribution(const std::string& input, const std::vector<int>& prefix) const {
    std::vector<int> dec_in = {WordTokenizer::kPad};
    dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
    const Mat h = decode(encode(tokenizer_.encode(input)), dec_in);
    const Mat logits = matmul({h.back()}, p("output.weight"));
    std::vector<double> z = logits[0];
    const auto& b = p("output.bias")[0];
    double peak = -1e300;
    for (std::size_t j = 0; j < z.size(); ++j) {
      z[j] += b[j];
      peak = std::max(peak, z[j]);
    }
    double total = 0.0;
    for (double& v : z) total += (v = std::exp(v - peak));
    for (double& v : z) v /= total;
    return z;
  }

  /// -sum_m log P(y_m | y_<m, X) stepping the decoder one token at a time,
  /// target followed by end-of-sequence.
  double chain_rule_nll(const std::string& input, const std::string& target) const {
    std::vector<int> tgt = tokenizer_.encode(target);
    tgt.push_back(WordTokenizer::kEos);
    std::vector<int> prefix;
    double nll = 0.0;
    for (int token : tgt) {
      nll -= std::log(next_distribution(input, prefix)[static_cast<std::size_t>(token)]);
      prefix.push_back(token);
    }
    return nll;
  }

 private:
  const Mat& p(const std::string& name) const { return params_.at(name); }

  Mat embed(const std::vector<int>& ids, const std::string& positions) const {
    Mat x;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<double> row = p("embed.tokens")[static_cast<std::size_t>(ids[i])];
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += p(positions)[i][c];
      x.push_back(row);
    }
    return x;
  }

  static Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t k = 0; k < b.size(); ++k)
        for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
  }

  static Mat add(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
    return a;
  }

  Mat layer_norm(const Mat& x, const std::string& name) const {
    const auto& gain = p(name + ".gain")[0];
    const auto& bias = p(name + ".bias")[0];
    Mat out = x;
    for (auto& row : out) {
      double mean = 0.0;
      for (double v : row) mean += v;
      mean /= static_cast<double>(row.size());
      double var = 0.0;
      for (double v : row) var += (v - mean) * (v - mean);
      var /= static_cast<double>(row.size());
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) * inv * gain[j] + bias[j];
    }
    return out;
  }

  Mat attention(const Mat& query_in, const Mat& memory, const std::string& name, bool causal) const {
    const Mat q = matmul(query_in, p(name + ".query"));
    const Mat k = matmul(memory, p(name + ".key"));
    const Mat v = matmul(memory, p(name + ".value"));
    const std::size_t hd = config_.hidden_size / config_.heads;
    Mat merged(q.size(), std::vector<double>(config_.hidden_size, 0.0));
    for (std::size_t h = 0; h < config_.heads; ++h) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<double> w(k.size(), 0.0);
        double peak = -1e300;
        const std::size_t limit = causal ? i + 1 : k.size();
        for (std::size_t j = 0; j < limit; ++j) {
          for (std::size_t c = 0; c < hd; ++c) w[j] += q[i][h * hd + c] * k[j][h * hd + c];
          w[j] /= std::sqrt(static_cast<double>(hd));
          peak = std::max(peak, w[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < limit; ++j) total += (w[j] = std::exp(w[j] - peak));
        for (std::size_t j = 0; j < limit; ++j)
          for (std::size_t c = 0; c < hd; ++c) merged[i][h * hd + c] += w[j] / total * v[j][h * hd + c];
      }
    }
    return matmul(merged, p(name + ".output"));
  }

  Mat ffn(const Mat& x, const std::string& name) const {
    Mat hidden = matmul(x, p(name + ".w1"));
    const auto& b1 = p(name + ".b1")[0];
    for (auto& row : hidden)
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double u = row[j] + b1[j];
        row[j] = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
      }
    Mat out = matmul(hidden, p(name + ".w2"));
    const auto& b2 = p(name + ".b2")[0];
    for (auto& row : out)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += b2[j];
    return out;
  }

  TinySeq2SeqConfig config_;
  WordTokenizer tokenizer_;
  std::map<std::string, Mat> params_;
};

}  // namespace gense::test
