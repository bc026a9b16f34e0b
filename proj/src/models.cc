#include "pendec/models.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace pendec {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte: treat as its own piece
}

}  // namespace

const char* to_string(TokenizerKind kind) {
  return kind == TokenizerKind::Char ? "char" : "whitespace";
}

TokenizerKind parse_tokenizer_kind(std::string_view name) {
  if (name == "char") return TokenizerKind::Char;
  if (name == "whitespace") return TokenizerKind::Whitespace;
  throw ConfigError("unknown tokenizer '" + std::string(name) + "' (expected char or whitespace)");
}

Tokenizer::Tokenizer(TokenizerKind kind, std::vector<std::string> vocab, TokenId eos_id)
    : kind_(kind), vocab_(std::move(vocab)), eos_id_(eos_id) {
  if (eos_id_ >= vocab_.size()) throw ConfigError("eos id outside vocabulary");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary entry '" + vocab_[i] + "'");
    }
  }
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> pieces;
  if (kind_ == TokenizerKind::Char) {
    for (std::size_t i = 0; i < text.size();) {
      std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      pieces.emplace_back(text.substr(i, len));
      i += len;
    }
    return pieces;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) pieces.emplace_back(text.substr(start, i - start));
  }
  return pieces;
}

std::optional<TokenSequence> Tokenizer::try_encode(std::string_view text) const {
  TokenSequence out;
  for (const auto& piece : split(text)) {
    auto it = index_.find(piece);
    if (it == index_.end() || it->second == eos_id_) return std::nullopt;
    out.push_back(it->second);
  }
  return out;
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence out;
  for (const auto& piece : split(text)) {
    auto it = index_.find(piece);
    if (it == index_.end() || it->second == eos_id_) {
      throw Error("token '" + piece + "' is not in the model vocabulary");
    }
    out.push_back(it->second);
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (t == eos_id_) continue;
    if (t >= vocab_.size()) throw Error("token id " + std::to_string(t) + " outside vocabulary");
    if (kind_ == TokenizerKind::Whitespace && !out.empty()) out += ' ';
    out += vocab_[t];
  }
  return out;
}

LanguageModel::LanguageModel(ModelInfo info, Tokenizer tokenizer)
    : info_(std::move(info)), tokenizer_(std::move(tokenizer)) {
  if (info_.vocab_size == 0) throw ConfigError("vocabulary is empty");
  if (info_.eos_id >= info_.vocab_size) throw ConfigError("eos id must be < vocab size");
}

Logits LanguageModel::next_logits(std::span<const TokenId> context) const {
  for (TokenId t : context) {
    if (t >= info_.vocab_size) {
      throw Error("context token " + std::to_string(t) + " out of range for vocabulary of " +
                  std::to_string(info_.vocab_size));
    }
  }
  return compute_logits(context);
}

// ---------------------------------------------------------------------------
// TableLM

namespace {

std::vector<std::string> default_names(std::size_t vocab_size, TokenId eos_id) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    names.push_back(i == eos_id ? std::string(kEosName) : std::to_string(i));
  }
  return names;
}

std::vector<std::string> table_names(std::size_t vocab_size, TokenId eos_id,
                                     const std::vector<std::string>& names) {
  if (names.empty()) return default_names(vocab_size, eos_id);
  if (names.size() != vocab_size) throw ConfigError("token name count must equal vocab size");
  return names;
}

}  // namespace

TableLM::TableLM(std::size_t vocab_size, TokenId eos_id, int order, Table table,
                 std::vector<std::string> token_names)
    : LanguageModel(ModelInfo{vocab_size, eos_id, table_names(vocab_size, eos_id, token_names)},
                    Tokenizer(TokenizerKind::Whitespace, table_names(vocab_size, eos_id, token_names),
                              eos_id)),
      order_(order),
      table_(std::move(table)) {
  if (vocab_size > kMaxVocab) throw ConfigError("TableLM vocabulary is limited to 10 tokens");
  if (order < 0 || order > kMaxOrder) throw ConfigError("TableLM order must be in [0, 2]");
  if (!table_.contains(TokenSequence{})) {
    throw ConfigError("TableLM needs a distribution for the empty context");
  }
  for (const auto& [ctx, dist] : table_) {
    if (ctx.size() > static_cast<std::size_t>(order)) {
      throw ConfigError("TableLM context longer than the model order");
    }
    for (TokenId t : ctx) {
      if (t >= vocab_size) throw ConfigError("TableLM context token out of range");
    }
    if (dist.size() != vocab_size) throw ConfigError("TableLM distribution has wrong length");
    ProbVector::from_values(dist);
  }
}

const std::vector<double>& TableLM::distribution(std::span<const TokenId> context) const {
  std::size_t len = std::min<std::size_t>(order_, context.size());
  for (;; --len) {
    TokenSequence key(context.end() - len, context.end());
    if (auto it = table_.find(key); it != table_.end()) return it->second;
    if (len == 0) break;
  }
  return table_.at(TokenSequence{});
}

Logits TableLM::compute_logits(std::span<const TokenId> context) const {
  const auto& dist = distribution(context);
  Logits out(dist.size());
  std::transform(dist.begin(), dist.end(), out.begin(),
                 [](double p) { return p > 0.0 ? std::log(p) : kNegInf; });
  return out;
}

// ---------------------------------------------------------------------------
// NGramLM

namespace {

ModelInfo ngram_info(const Tokenizer& tok) {
  return ModelInfo{tok.vocab().size(), tok.eos_id(), tok.vocab()};
}

}  // namespace

NGramLM::NGramLM(int order, double smoothing_k, Tokenizer tokenizer, CountTable counts)
    : LanguageModel(ngram_info(tokenizer), tokenizer),
      order_(order),
      smoothing_k_(smoothing_k),
      counts_(std::move(counts)) {
  if (order < 1) throw ConfigError("n-gram order must be >= 1");
  if (!(smoothing_k > 0.0) || !std::isfinite(smoothing_k)) {
    throw ConfigError("smoothing k must be a finite value > 0");
  }
  if (counts_.size() != static_cast<std::size_t>(order)) {
    throw ConfigError("count table must have one level per context length");
  }
  if (!counts_[0].contains(TokenSequence{})) throw ConfigError("count table lacks unigram level");
  const std::size_t vocab = info().vocab_size;
  for (std::size_t m = 0; m < counts_.size(); ++m) {
    for (const auto& [ctx, cc] : counts_[m]) {
      if (ctx.size() != m) throw ConfigError("count table context has wrong length");
      std::uint64_t sum = 0;
      for (const auto& [tok, c] : cc.next) {
        if (tok >= vocab) throw ConfigError("count table token out of range");
        sum += c;
      }
      if (sum != cc.total) throw ConfigError("count table totals are inconsistent");
    }
  }
}

const ContextCounts& NGramLM::lookup(std::span<const TokenId> context) const {
  std::size_t len = std::min<std::size_t>(order_ - 1, context.size());
  for (;; --len) {
    const auto& level = counts_[len];
    TokenSequence key(context.end() - len, context.end());
    if (auto it = level.find(key); it != level.end() && it->second.total > 0) return it->second;
    if (len == 0) break;
  }
  return counts_[0].at(TokenSequence{});
}

std::size_t NGramLM::backoff_length(std::span<const TokenId> context) const {
  std::size_t len = std::min<std::size_t>(order_ - 1, context.size());
  for (; len > 0; --len) {
    TokenSequence key(context.end() - len, context.end());
    if (auto it = counts_[len].find(key); it != counts_[len].end() && it->second.total > 0) break;
  }
  return len;
}

Logits NGramLM::compute_logits(std::span<const TokenId> context) const {
  const ContextCounts& cc = lookup(context);
  const double vocab = static_cast<double>(info().vocab_size);
  const double log_denom = std::log(static_cast<double>(cc.total) + smoothing_k_ * vocab);
  Logits out(info().vocab_size, std::log(smoothing_k_) - log_denom);
  for (const auto& [tok, c] : cc.next) {
    out[tok] = std::log(static_cast<double>(c) + smoothing_k_) - log_denom;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CacheLM

namespace {

const LanguageModel& non_null(const std::shared_ptr<const LanguageModel>& base) {
  if (!base) throw ConfigError("cache model needs a base model");
  return *base;
}

}  // namespace

CacheLM::CacheLM(std::shared_ptr<const LanguageModel> base, double lambda, std::size_t window)
    : LanguageModel(non_null(base).info(), non_null(base).tokenizer()),
      base_(std::move(base)),
      lambda_(lambda),
      window_(window) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("cache lambda must be in [0, 1)");
  if (window == 0) throw ConfigError("cache window must be positive");
}

Logits CacheLM::compute_logits(std::span<const TokenId> context) const {
  Logits base_logits = base_->next_logits(context);
  const std::size_t n = std::min(window_, context.size());
  if (n == 0 || lambda_ == 0.0) return base_logits;

  const ProbVector base_probs = softmax(base_logits);
  std::vector<double> freq(base_probs.size(), 0.0);
  for (TokenId t : context.last(n)) freq[t] += 1.0;
  Logits out(base_probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = (1.0 - lambda_) * base_probs[i] + lambda_ * freq[i] / static_cast<double>(n);
    out[i] = p > 0.0 ? std::log(p) : kNegInf;
  }
  return out;
}

NGramLM train_ngram(std::span<const std::string> corpus, int order, double smoothing_k,
                    TokenizerKind tokenizer, const std::vector<std::string>* vocab) {
  if (corpus.empty()) throw Error("training corpus is empty");
  if (order < 1) throw ConfigError("n-gram order must be >= 1");
  if (!(smoothing_k > 0.0)) throw ConfigError("smoothing k must be > 0");

  Tokenizer tok;
  if (vocab != nullptr) {
    auto eos = std::find(vocab->begin(), vocab->end(), kEosName);
    if (eos == vocab->end()) throw ConfigError("fixed vocabulary lacks the eos token");
    tok = Tokenizer(tokenizer, *vocab, static_cast<TokenId>(eos - vocab->begin()));
  } else {
    Tokenizer splitter(tokenizer, {std::string(kEosName)}, 0);
    std::set<std::string> pieces;
    for (const auto& doc : corpus) {
      for (auto& piece : splitter.split(doc)) pieces.insert(std::move(piece));
    }
    pieces.erase(std::string(kEosName));
    std::vector<std::string> words(pieces.begin(), pieces.end());
    words.emplace_back(kEosName);
    const auto eos_id = static_cast<TokenId>(words.size() - 1);
    tok = Tokenizer(tokenizer, std::move(words), eos_id);
  }

  NGramLM::CountTable counts(order);
  counts[0][TokenSequence{}];
  std::size_t used = 0;
  for (const auto& doc : corpus) {
    auto encoded = tok.try_encode(doc);
    if (!encoded) continue;
    ++used;
    TokenSequence tokens = std::move(*encoded);
    tokens.push_back(tok.eos_id());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (std::size_t m = 0; m < static_cast<std::size_t>(order) && m <= i; ++m) {
        TokenSequence ctx(tokens.begin() + (i - m), tokens.begin() + i);
        auto& cc = counts[m][std::move(ctx)];
        ++cc.total;
        ++cc.next[tokens[i]];
      }
    }
  }
  if (used == 0) throw Error("no training document could be encoded with the given vocabulary");
  return NGramLM(order, smoothing_k, std::move(tok), std::move(counts));
}

double sequence_logprob(const LanguageModel& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> continuation) {
  if (continuation.empty()) throw Error("continuation must be non-empty");
  TokenSequence context(prefix.begin(), prefix.end());
  context.reserve(prefix.size() + continuation.size());
  double total = 0.0;
  for (TokenId t : continuation) {
    if (t >= model.info().vocab_size) throw Error("continuation token out of range");
    const ProbVector probs = softmax(model.next_logits(context));
    total += probs[t] > 0.0 ? std::log(probs[t]) : kNegInf;
    context.push_back(t);
  }
  return total;
}

}  // namespace pendec
