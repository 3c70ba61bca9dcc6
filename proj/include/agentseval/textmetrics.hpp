#pragma once

// Classic lexical and embedding metrics: BLEU, ROUGE-1, ROUGE-L, METEOR,
// chrF and greedy-matched BERTScore. All functions are pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agentseval/error.hpp"
#include "agentseval/text.hpp"

namespace agentseval::metrics {

/// Lowercased word tokens of one report.
struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

/// Splits on runs of non-alphanumeric code points and lowercases. A period
/// between two digits stays inside the token so "3.5" survives intact.
inline TokenSequence tokenize(std::string_view raw) {
  const auto cps = text::decode_utf8(raw);
  TokenSequence out;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.tokens.push_back(text::encode_utf8(current));
      current.clear();
    }
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t cp = cps[i];
    if (text::is_word_char(cp)) {
      current.push_back(text::to_lower(cp));
    } else if (cp == U'.' && !current.empty() && text::is_digit(current.back()) && i + 1 < cps.size() &&
               text::is_digit(cps[i + 1])) {
      current.push_back(cp);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

struct Smoothing {
  enum class Kind { none, add_k };
  Kind kind = Kind::add_k;
  double k = 1.0;

  static Smoothing none() { return {Kind::none, 0.0}; }
  static Smoothing add(double k) { return {Kind::add_k, k}; }
};

struct MetricParams {
  int bleu_max_n = 4;
  std::vector<double> bleu_weights;  // empty means uniform 1/bleu_max_n
  double rouge_beta = 1.0;
  double meteor_recall_weight = 9.0;
  double meteor_gamma = 0.5;
  double meteor_theta = 3.0;
  int chrf_max_n = 6;
  double chrf_beta = 2.0;
  Smoothing smoothing{};

  std::vector<double> resolved_bleu_weights() const {
    if (!bleu_weights.empty()) return bleu_weights;
    return std::vector<double>(static_cast<std::size_t>(std::max(bleu_max_n, 1)), 1.0 / bleu_max_n);
  }

  void validate() const {
    if (bleu_max_n < 1 || chrf_max_n < 1) throw Error(ErrorKind::InvalidArgument, "n-gram orders must be >= 1");
    if (!bleu_weights.empty()) {
      if (bleu_weights.size() != static_cast<std::size_t>(bleu_max_n)) {
        throw Error(ErrorKind::InvalidArgument, "bleu_weights must have bleu_max_n entries");
      }
      double sum = 0.0;
      for (double w : bleu_weights) {
        if (!(w >= 0.0)) throw Error(ErrorKind::InvalidArgument, "bleu weights must be non-negative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorKind::InvalidArgument, "bleu weights must sum to 1");
    }
    if (!(rouge_beta > 0.0) || !(chrf_beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "betas must be > 0");
    if (!(meteor_recall_weight >= 0.0) || !(meteor_gamma >= 0.0) || !(meteor_theta >= 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "METEOR parameters must be non-negative");
    }
    if (smoothing.kind == Smoothing::Kind::add_k && !(smoothing.k > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "add-k smoothing needs k > 0");
    }
  }
};

namespace detail {

template <typename T>
std::map<std::vector<T>, std::size_t> ngram_counts(std::span<const T> seq, std::size_t n) {
  std::map<std::vector<T>, std::size_t> counts;
  if (n == 0 || seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<T>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                            seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

/// Sum over n-grams of min(candidate count, reference count).
template <typename T>
std::size_t clipped_matches(const std::map<std::vector<T>, std::size_t>& cand,
                            const std::map<std::vector<T>, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

inline void require_non_empty(const TokenSequence& cand, const TokenSequence& ref, const char* metric) {
  if (cand.empty() || ref.empty()) {
    throw Error(ErrorKind::EmptyInput, std::string(metric) + " needs non-empty candidate and reference");
  }
}

inline double f_beta(double precision, double recall, double beta) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * precision * recall / (b2 * precision + recall);
}

}  // namespace detail

/// Corpus-free sentence BLEU: BP * exp(sum_n w_n log p_n) over clipped
/// n-gram precisions, BP = min(1, exp(1 - r/c)).
///
/// With add-k smoothing, an order n >= 2 whose clipped match count is zero
/// uses p_n = k / (l_n + k), l_n being the number of candidate n-grams.
/// Without smoothing any zero p_n with positive weight yields 0.
inline double bleu(const TokenSequence& cand, const TokenSequence& ref, const MetricParams& params = {}) {
  detail::require_non_empty(cand, ref, "BLEU");
  params.validate();
  const auto weights = params.resolved_bleu_weights();
  const std::span<const std::string> c(cand.tokens);
  const std::span<const std::string> r(ref.tokens);

  double log_sum = 0.0;
  for (int n = 1; n <= params.bleu_max_n; ++n) {
    const double w = weights[static_cast<std::size_t>(n - 1)];
    if (w == 0.0) continue;
    const auto cc = detail::ngram_counts(c, static_cast<std::size_t>(n));
    const auto rc = detail::ngram_counts(r, static_cast<std::size_t>(n));
    const double total = cand.size() >= static_cast<std::size_t>(n)
                             ? static_cast<double>(cand.size() - static_cast<std::size_t>(n) + 1)
                             : 0.0;
    const double matches = static_cast<double>(detail::clipped_matches(cc, rc));
    double p = 0.0;
    if (matches > 0.0) {
      p = matches / total;
    } else if (n >= 2 && params.smoothing.kind == Smoothing::Kind::add_k) {
      p = params.smoothing.k / (total + params.smoothing.k);
    }
    if (p <= 0.0) return 0.0;
    log_sum += w * std::log(p);
  }
  const double c_len = static_cast<double>(cand.size());
  const double r_len = static_cast<double>(ref.size());
  const double bp = c_len > r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::exp(log_sum);
}

/// Length of the longest common subsequence, O(|a|*|b|) time, O(|b|) space.
inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a.tokens[i - 1] == b.tokens[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// (1 + beta^2) * LCS / (|ref| + beta^2 * |cand|). Note the length pairing:
/// the reference length takes the unit coefficient.
inline double rouge_l(const TokenSequence& cand, const TokenSequence& ref, double beta = 1.0) {
  detail::require_non_empty(cand, ref, "ROUGE-L");
  if (!(beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "ROUGE-L beta must be > 0");
  const double b2 = beta * beta;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  return (1.0 + b2) * lcs / (static_cast<double>(ref.size()) + b2 * static_cast<double>(cand.size()));
}

/// Unigram F1 over clipped overlap counts.
inline double rouge_1(const TokenSequence& cand, const TokenSequence& ref) {
  detail::require_non_empty(cand, ref, "ROUGE-1");
  const std::span<const std::string> c(cand.tokens);
  const std::span<const std::string> r(ref.tokens);
  const double overlap = static_cast<double>(
      detail::clipped_matches(detail::ngram_counts(c, 1), detail::ngram_counts(r, 1)));
  const double p = overlap / static_cast<double>(cand.size());
  const double rec = overlap / static_cast<double>(ref.size());
  return detail::f_beta(p, rec, 1.0);
}

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exhaustive = true;  // false when the search budget ran out
};

namespace detail {

inline std::size_t count_chunks(const std::vector<long>& assign) {
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign[i] < 0) continue;
    if (i == 0 || assign[i - 1] < 0 || assign[i - 1] + 1 != assign[i]) ++chunks;
  }
  return chunks;
}

// Greedy seed: repeatedly take the longest run of identical unused tokens.
inline std::vector<long> greedy_alignment(const std::vector<int>& c, const std::vector<int>& r) {
  std::vector<long> assign(c.size(), -1);
  std::vector<char> used_c(c.size(), 0);
  std::vector<char> used_r(r.size(), 0);
  while (true) {
    std::size_t best_len = 0, best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < r.size(); ++j) {
        std::size_t len = 0;
        while (i + len < c.size() && j + len < r.size() && !used_c[i + len] && !used_r[j + len] &&
               c[i + len] == r[j + len]) {
          ++len;
        }
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      used_c[best_i + k] = used_r[best_j + k] = 1;
      assign[best_i + k] = static_cast<long>(best_j + k);
    }
  }
  return assign;
}

// Branch and bound over maximum-cardinality alignments. Each candidate
// position either matches an unused equal reference position or is left
// unmatched, the latter only while its word still has surplus occurrences.
class ChunkMinimizer {
 public:
  ChunkMinimizer(const std::vector<int>& c, const std::vector<int>& r, std::size_t vocab, std::size_t budget)
      : c_(c), used_(r.size(), 0), assign_(c.size(), -1), skipped_(vocab, 0), surplus_(vocab, 0),
        positions_(vocab), budget_(budget) {
    std::vector<std::size_t> cc(vocab, 0), rc(vocab, 0);
    for (int t : c) ++cc[static_cast<std::size_t>(t)];
    for (std::size_t j = 0; j < r.size(); ++j) {
      ++rc[static_cast<std::size_t>(r[j])];
      positions_[static_cast<std::size_t>(r[j])].push_back(static_cast<long>(j));
    }
    for (std::size_t w = 0; w < vocab; ++w) {
      matches_ += std::min(cc[w], rc[w]);
      surplus_[w] = cc[w] - std::min(cc[w], rc[w]);
    }
  }

  Alignment run(std::size_t upper_bound) {
    best_ = upper_bound;
    search(0, 0);
    return {matches_, best_, !exhausted_};
  }

  std::size_t matches() const noexcept { return matches_; }

 private:
  void search(std::size_t i, std::size_t chunks) {
    if (chunks >= best_ || exhausted_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    if (i == c_.size()) {
      best_ = chunks;
      return;
    }
    const auto w = static_cast<std::size_t>(c_[i]);
    const long prev = i > 0 ? assign_[i - 1] : -2;
    // Continuing the current chunk first finds good bounds early.
    if (prev >= 0) {
      const long j = prev + 1;
      if (static_cast<std::size_t>(j) < used_.size() && !used_[static_cast<std::size_t>(j)] &&
          std::binary_search(positions_[w].begin(), positions_[w].end(), j)) {
        take(i, j);
        search(i + 1, chunks);
        release(i, j);
      }
    }
    for (long j : positions_[w]) {
      if (used_[static_cast<std::size_t>(j)] || (prev >= 0 && j == prev + 1)) continue;
      take(i, j);
      search(i + 1, chunks + 1);
      release(i, j);
    }
    if (skipped_[w] < surplus_[w]) {
      ++skipped_[w];
      search(i + 1, chunks);
      --skipped_[w];
    }
  }

  void take(std::size_t i, long j) {
    used_[static_cast<std::size_t>(j)] = 1;
    assign_[i] = j;
  }
  void release(std::size_t i, long j) {
    used_[static_cast<std::size_t>(j)] = 0;
    assign_[i] = -1;
  }

  const std::vector<int>& c_;
  std::vector<char> used_;
  std::vector<long> assign_;
  std::vector<std::size_t> skipped_;
  std::vector<std::size_t> surplus_;
  std::vector<std::vector<long>> positions_;
  std::size_t matches_ = 0;
  std::size_t best_ = 0;
  std::size_t nodes_ = 0;
  std::size_t budget_;
  bool exhausted_ = false;
};

}  // namespace detail

/// Exact-match unigram alignment with the maximum number of matches and, among
/// those, the fewest chunks. The search is exact up to `node_budget` search
/// nodes; past that the best alignment found (never worse than greedy) is used.
inline Alignment align_exact(const TokenSequence& cand, const TokenSequence& ref,
                             std::size_t node_budget = 200000) {
  std::map<std::string, int> vocab;
  auto intern = [&](const std::string& t) {
    auto [it, inserted] = vocab.emplace(t, static_cast<int>(vocab.size()));
    return it->second;
  };
  std::vector<int> c, r;
  for (const auto& t : cand.tokens) c.push_back(intern(t));
  for (const auto& t : ref.tokens) r.push_back(intern(t));

  const auto greedy = detail::greedy_alignment(c, r);
  detail::ChunkMinimizer search(c, r, vocab.size(), node_budget);
  if (search.matches() == 0) return {0, 0, true};

  std::size_t greedy_matches = 0;
  for (long a : greedy) greedy_matches += a >= 0 ? 1 : 0;
  // The greedy seed is a valid upper bound only when it is maximum-cardinality.
  const std::size_t seed = greedy_matches == search.matches() ? detail::count_chunks(greedy) + 1
                                                               : search.matches() + 1;
  auto result = search.run(seed);
  if (result.chunks >= seed) result.chunks = seed - 1;  // search found nothing better than greedy
  return result;
}

/// F_mean * (1 - gamma * (chunks / matches)^theta) with
/// F_mean = (1 + w) P R / (R + w P).
inline double meteor(const TokenSequence& cand, const TokenSequence& ref, const MetricParams& params = {}) {
  detail::require_non_empty(cand, ref, "METEOR");
  params.validate();
  const auto al = align_exact(cand, ref);
  if (al.matches == 0) return 0.0;
  const double m = static_cast<double>(al.matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double w = params.meteor_recall_weight;
  const double f_mean = (1.0 + w) * p * r / (r + w * p);
  const double penalty = params.meteor_gamma * std::pow(static_cast<double>(al.chunks) / m, params.meteor_theta);
  return f_mean * (1.0 - penalty);
}

/// Character n-gram F_beta averaged over n = 1..chrf_max_n, whitespace removed.
/// Orders with no n-grams on either side are left out of the average; an
/// order present on only one side scores 0.
inline double chrf(std::string_view cand, std::string_view ref, const MetricParams& params = {}) {
  params.validate();
  auto strip = [](std::string_view s) {
    std::u32string out;
    for (char32_t cp : text::decode_utf8(s)) {
      if (!text::is_space(cp)) out.push_back(cp);
    }
    return out;
  };
  const auto c = strip(cand);
  const auto r = strip(ref);
  if (c.empty() || r.empty()) throw Error(ErrorKind::EmptyInput, "chrF needs non-blank candidate and reference");

  const std::span<const char32_t> cs(c.data(), c.size());
  const std::span<const char32_t> rs(r.data(), r.size());
  double sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= params.chrf_max_n; ++n) {
    const auto un = static_cast<std::size_t>(n);
    const std::size_t c_total = c.size() >= un ? c.size() - un + 1 : 0;
    const std::size_t r_total = r.size() >= un ? r.size() - un + 1 : 0;
    if (c_total == 0 && r_total == 0) continue;
    ++orders;
    if (c_total == 0 || r_total == 0) continue;
    const double m = static_cast<double>(
        detail::clipped_matches(detail::ngram_counts(cs, un), detail::ngram_counts(rs, un)));
    sum += detail::f_beta(m / static_cast<double>(c_total), m / static_cast<double>(r_total), params.chrf_beta);
  }
  return sum / orders;
}

/// One embedding vector per token; all rows share a dimension and none is zero.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  explicit EmbeddingMatrix(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) return;
    const auto dim = rows_.front().size();
    if (dim == 0) throw Error(ErrorKind::DimensionMismatch, "embedding rows must have dimension >= 1");
    for (const auto& row : rows_) {
      if (row.size() != dim) throw Error(ErrorKind::DimensionMismatch, "ragged embedding rows");
      double norm = 0.0;
      for (double v : row) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite embedding value");
        norm += v * v;
      }
      if (norm == 0.0) throw Error(ErrorKind::InvalidArgument, "zero-norm embedding row");
    }
  }

  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t dim() const noexcept { return rows_.empty() ? 0 : rows_.front().size(); }
  bool empty() const noexcept { return rows_.empty(); }

 private:
  std::vector<std::vector<double>> rows_;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Candidate-averaged greedy cosine: mean over candidate rows of the best
/// cosine against any reference row. No IDF weighting, no rescaling.
inline double bertscore_greedy(const EmbeddingMatrix& cand, const EmbeddingMatrix& ref) {
  if (cand.empty() || ref.empty()) throw Error(ErrorKind::EmptyInput, "BERTScore needs non-empty embeddings");
  if (cand.dim() != ref.dim()) throw Error(ErrorKind::DimensionMismatch, "embedding dimensions differ");
  double total = 0.0;
  for (const auto& x : cand.rows()) {
    double best = -1.0;
    for (const auto& y : ref.rows()) best = std::max(best, cosine(x, y));
    total += best;
  }
  return total / static_cast<double>(cand.size());
}

/// Classic metric values for one pair; BERTScore is absent unless embeddings
/// were available.
struct ClassicScores {
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  double chrf = 0.0;
  std::optional<double> bertscore;
};

inline ClassicScores classic_scores(std::string_view pred, std::string_view gt, const MetricParams& params = {}) {
  const auto c = tokenize(pred);
  const auto r = tokenize(gt);
  ClassicScores s;
  if (!c.empty() && !r.empty()) {
    s.bleu = bleu(c, r, params);
    s.rouge1 = rouge_1(c, r);
    s.rouge_l = rouge_l(c, r, params.rouge_beta);
    s.meteor = meteor(c, r, params);
  }
  s.chrf = chrf(pred, gt, params);
  return s;
}

}  // namespace agentseval::metrics
