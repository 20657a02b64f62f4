#include "medrag/prompt.hpp"

#include <algorithm>

#include "medrag/error.hpp"
#include "medrag/utf8.hpp"

namespace medrag {

namespace {

constexpr std::string_view kDefaultSystemPrompt =
    "You are a helpful, respectful, and honest assistant. Always answer as helpfully as "
    "possible, while being safe. Your answers should not include any harmful, unethical, "
    "racist, sexist, toxic, dangerous, or illegal content. Please ensure that your responses "
    "are socially unbiased and positive in nature.\n"
    "\n"
    "If a question does not make any sense, or is not factually coherent, explain why instead "
    "of answering something not correct. If you don't know the answer to a question, please "
    "don't share false information.";

bool blank(std::string_view s) {
  const auto decoded = utf8::decode(s);
  if (!decoded) return s.find_first_not_of(" \t\n\r\f\v") == std::string_view::npos;
  return std::all_of(decoded->begin(), decoded->end(), utf8::is_space);
}

}  // namespace

SystemPrompt default_system_prompt() { return {std::string(kDefaultSystemPrompt)}; }

void PipelineConfig::validate(std::size_t chunk_size) const {
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
  if (context_char_budget < chunk_size) {
    throw Error(ErrorCode::InvalidArgument,
                "context_char_budget (" + std::to_string(context_char_budget) +
                    ") must be at least chunk_size (" + std::to_string(chunk_size) + ")");
  }
}

PromptBundle build_prompt(std::string_view question, std::span<const SearchHit> hits,
                          const SystemPrompt& system, const PipelineConfig& config) {
  if (blank(question)) {
    throw Error(ErrorCode::EmptyQuestion, "question is empty", Stage::prompt);
  }
  if (system.text.empty()) {
    throw Error(ErrorCode::InvalidArgument, "system prompt is empty", Stage::prompt);
  }

  PromptBundle bundle;
  bundle.question = std::string(question);

  std::string context;
  for (const auto& hit : hits) {
    const std::size_t len = utf8::length(hit.text);
    if (bundle.context_char_count + len > config.context_char_budget) {
      bundle.truncated = true;
      break;
    }
    if (!context.empty()) context += "\n\n";
    context += "[" + hit.chunk_id + "] " + hit.text;
    bundle.context_char_count += len;
    bundle.included_chunk_ids.push_back(hit.chunk_id);
  }

  std::string& out = bundle.rendered;
  switch (config.prompt_template) {
    case PromptTemplate::llama2_chat:
      out = "<s>[INST] <<SYS>>\n";
      out += system.text;
      out += "\n<</SYS>>\n\nUse the following context to answer.\nContext:\n";
      out += context;
      out += "\n\nQuestion: ";
      out += question;
      out += " [/INST]";
      break;
    case PromptTemplate::plain:
      out = system.text;
      out += "\n\n";
      out += context;
      out += "\n\nQuestion: ";
      out += question;
      break;
  }
  return bundle;
}

std::string_view to_string(PromptTemplate t) {
  return t == PromptTemplate::plain ? "plain" : "llama2_chat";
}

PromptTemplate parse_prompt_template(std::string_view name) {
  if (name == "llama2_chat") return PromptTemplate::llama2_chat;
  if (name == "plain") return PromptTemplate::plain;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt template '" + std::string(name) + "'");
}

}  // namespace medrag
