#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "narrmem/llm.hpp"

// Deterministic offline stand-ins for the chat and embedding providers.
namespace narrmem::mock {

// The mock scorer's decision: 1-based numbers of the clauses (in the order
// given) whose content words are at least half present in the recall. A
// clause made only of stopwords is judged on all of its words.
std::vector<int> recalled_clauses(const std::vector<std::string>& clauses,
                                  std::string_view recall);

// recalled_clauses ordered by where each clause's first matching word occurs
// in the recall.
std::vector<int> recall_order(const std::vector<std::string>& clauses, std::string_view recall);

// Splits on sentence punctuation and before coordinating conjunctions.
std::vector<std::string> segment_recall(std::string_view recall);

// Completions in the printed formats.
std::string scoring_completion(const std::vector<std::string>& clauses, std::string_view recall);
std::string ordered_completion(const std::vector<std::string>& clauses, std::string_view recall);
std::string segmentation_completion(std::string_view text);
std::string generation_completion(int n_clauses, std::uint64_t seed);
std::string lure_completion(const std::vector<std::string>& clauses, std::uint64_t seed);

// Recognises the prompt from its fixed sentences and answers in kind.
// Unrecognised prompts are echoed. Generation and lures draw from
// request.seed, or from a hash of the prompt when no seed is given.
class MockChatProvider : public ChatProvider {
 public:
  Completion complete(const ChatRequest& request) override;
};

inline constexpr std::size_t kMockEmbeddingDim = 256;

// Counts of hashed content words, L2-normalised. Different hash seeds give
// different (but strongly related) embedding models.
std::vector<double> hashed_bag_of_words(std::string_view text, std::uint64_t hash_seed,
                                        std::size_t dim = kMockEmbeddingDim);

class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::uint64_t hash_seed = 0, std::size_t dim = kMockEmbeddingDim)
      : hash_seed_(hash_seed), dim_(dim) {}
  std::vector<double> embed(const std::string& text, const std::string& model_id) override;
  std::size_t calls() const { return calls_; }

 private:
  std::uint64_t hash_seed_;
  std::size_t dim_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace narrmem::mock
