#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medrag/vector_store.hpp"

namespace medrag {

struct SystemPrompt {
  std::string text;
};

/// Llama-2 style safety instructions, two paragraphs, no surrounding whitespace.
SystemPrompt default_system_prompt();

enum class PromptTemplate { llama2_chat, plain };

struct PipelineConfig {
  std::size_t top_k = 5;
  /// Characters of passage text (roughly 4 characters per token).
  std::size_t context_char_budget = 6000;
  PromptTemplate prompt_template = PromptTemplate::llama2_chat;

  /// `chunk_size` is the splitter's; the budget must hold one whole chunk.
  void validate(std::size_t chunk_size) const;
};

struct PromptBundle {
  std::string rendered;
  std::string question;
  std::vector<std::string> included_chunk_ids;
  std::size_t context_char_count = 0;
  bool truncated = false;
};

/// Packs whole passages in the given (descending score) order until the next
/// one would overflow the budget, then renders the selected template. Each
/// passage is introduced by its source tag "[doc_id#seq]".
PromptBundle build_prompt(std::string_view question, std::span<const SearchHit> hits,
                          const SystemPrompt& system, const PipelineConfig& config);

std::string_view to_string(PromptTemplate t);
PromptTemplate parse_prompt_template(std::string_view name);

}  // namespace medrag
