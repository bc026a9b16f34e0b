#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pendec/core.h"

namespace pendec {

enum class TokenizerKind { Char, Whitespace };

const char* to_string(TokenizerKind kind);
TokenizerKind parse_tokenizer_kind(std::string_view name);

// Maps text to token ids over a closed vocabulary. Char splits on UTF-8
// code points; Whitespace splits on runs of ASCII whitespace. The eos token
// never appears in text and is dropped by decode().
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(TokenizerKind kind, std::vector<std::string> vocab, TokenId eos_id);

  TokenizerKind kind() const { return kind_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  TokenId eos_id() const { return eos_id_; }

  // Splits text into token strings without consulting the vocabulary.
  std::vector<std::string> split(std::string_view text) const;

  // Throws Error naming the first out-of-vocabulary piece.
  TokenSequence encode(std::string_view text) const;
  std::optional<TokenSequence> try_encode(std::string_view text) const;

  std::string decode(std::span<const TokenId> tokens) const;

 private:
  TokenizerKind kind_ = TokenizerKind::Whitespace;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_id_ = 0;
};

inline constexpr std::string_view kEosName = "</s>";

struct ModelInfo {
  std::size_t vocab_size = 0;
  TokenId eos_id = 0;
  std::vector<std::string> token_names;
};

// Next-token model. Implementations are immutable after construction, so
// next_logits is a pure function of its argument and safe to call from any
// thread.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  const ModelInfo& info() const { return info_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  // Throws Error if any context token is outside the vocabulary.
  Logits next_logits(std::span<const TokenId> context) const;

 protected:
  LanguageModel(ModelInfo info, Tokenizer tokenizer);

  virtual Logits compute_logits(std::span<const TokenId> context) const = 0;

 private:
  ModelInfo info_;
  Tokenizer tokenizer_;
};

// Explicit conditional tables over a tiny vocabulary. The distribution for a
// context is looked up by its last `order` tokens; a missing key drops its
// oldest token until a stored key is found. The empty context must be stored.
class TableLM final : public LanguageModel {
 public:
  using Table = std::map<TokenSequence, std::vector<double>>;

  static constexpr std::size_t kMaxVocab = 10;
  static constexpr int kMaxOrder = 2;

  TableLM(std::size_t vocab_size, TokenId eos_id, int order, Table table,
          std::vector<std::string> token_names = {});

  int order() const { return order_; }
  const Table& table() const { return table_; }

  const std::vector<double>& distribution(std::span<const TokenId> context) const;

 protected:
  Logits compute_logits(std::span<const TokenId> context) const override;

 private:
  int order_;
  Table table_;
};

struct ContextCounts {
  std::uint64_t total = 0;
  std::map<TokenId, std::uint64_t> next;

  friend bool operator==(const ContextCounts&, const ContextCounts&) = default;
};

// Add-k smoothed n-gram model with longest-available-context backoff:
//   P(t | c) = (count(c, t) + k) / (count(c) + k * V)
// where c is the longest suffix (at most n-1 tokens) of the context that was
// observed during training.
class NGramLM final : public LanguageModel {
 public:
  // counts[m] holds statistics for contexts of exactly m tokens, m < order.
  using CountTable = std::vector<std::map<TokenSequence, ContextCounts>>;

  NGramLM(int order, double smoothing_k, Tokenizer tokenizer, CountTable counts);

  int order() const { return order_; }
  double smoothing_k() const { return smoothing_k_; }
  const CountTable& counts() const { return counts_; }

  // Length of the context suffix whose statistics would be used.
  std::size_t backoff_length(std::span<const TokenId> context) const;

 protected:
  Logits compute_logits(std::span<const TokenId> context) const override;

 private:
  const ContextCounts& lookup(std::span<const TokenId> context) const;

  int order_;
  double smoothing_k_;
  CountTable counts_;
};

// Wraps a model with a recency cache:
//   P(t | c) = (1 - lambda) * P_base(t | c) + lambda * freq(t in last `window` tokens of c)
// Unlike a plain n-gram model, its probability for a token grows with the
// number of times the token was recently produced. An empty cache leaves the
// base distribution untouched.
class CacheLM final : public LanguageModel {
 public:
  CacheLM(std::shared_ptr<const LanguageModel> base, double lambda, std::size_t window);

  const LanguageModel& base() const { return *base_; }
  std::shared_ptr<const LanguageModel> base_ptr() const { return base_; }
  double lambda() const { return lambda_; }
  std::size_t window() const { return window_; }

 protected:
  Logits compute_logits(std::span<const TokenId> context) const override;

 private:
  std::shared_ptr<const LanguageModel> base_;
  double lambda_;
  std::size_t window_;
};

// Builds the vocabulary from the corpus (sorted, eos last) unless `vocab` is
// given, in which case documents with out-of-vocabulary pieces are skipped.
// One eos token is appended to every document.
NGramLM train_ngram(std::span<const std::string> corpus, int order, double smoothing_k,
                    TokenizerKind tokenizer,
                    const std::vector<std::string>* vocab = nullptr);

// sum_i log P(continuation_i | prefix ++ continuation_<i); -inf if any step
// has probability zero.
double sequence_logprob(const LanguageModel& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> continuation);

}  // namespace pendec
