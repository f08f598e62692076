#include "narrmem/prompts.hpp"

#include "narrmem/errors.hpp"

namespace narrmem {

namespace pt = prompt_text;

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::narrative_generation: return "narrative_generation";
    case PromptKind::lure_generation: return "lure_generation";
    case PromptKind::recall_scoring: return "recall_scoring";
    case PromptKind::ordered_scoring: return "ordered_scoring";
    case PromptKind::recall_segmentation: return "recall_segmentation";
  }
  return "unknown";
}

PromptKind prompt_kind_from_string(const std::string& s) {
  for (auto k : {PromptKind::narrative_generation, PromptKind::lure_generation,
                 PromptKind::recall_scoring, PromptKind::ordered_scoring,
                 PromptKind::recall_segmentation}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown prompt kind: " + s);
}

std::vector<std::string> prompt_placeholders(PromptKind kind) {
  switch (kind) {
    case PromptKind::narrative_generation: return {"N", "template_narrative"};
    case PromptKind::lure_generation: return {"segmentation"};
    case PromptKind::recall_scoring: return {"narrative", "segmentation", "recall"};
    case PromptKind::ordered_scoring:
      return {"narrative", "segmentation", "recall", "scoring_completion"};
    case PromptKind::recall_segmentation: return {"narrative"};
  }
  return {};
}

double default_temperature(PromptKind kind) {
  switch (kind) {
    case PromptKind::narrative_generation: return 0.6;
    case PromptKind::lure_generation: return 0.3;
    default: return 0.0;
  }
}

namespace {

const std::string& arg(const PromptArgs& args, PromptKind kind, const std::string& name) {
  auto it = args.find(name);
  if (it == args.end()) {
    throw InvalidArgument(to_string(kind) + " prompt: missing placeholder '" + name + "'");
  }
  if (it->second.empty() && name != "recall") {
    throw InvalidArgument(to_string(kind) + " prompt: placeholder '" + name + "' is empty");
  }
  return it->second;
}

std::string scoring_prompt(const PromptArgs& args, PromptKind kind) {
  std::string out;
  out += pt::kScoringOriginal;
  out += "\n" + arg(args, kind, "narrative") + "\n\n";
  out += pt::kScoringPieces;
  out += "\n" + arg(args, kind, "segmentation") + "\n\n";
  out += pt::kScoringAlternative;
  out += "\n" + arg(args, kind, "recall") + "\n\n";
  out += pt::kScoringInstruction;
  return out;
}

}  // namespace

std::string render_prompt(PromptKind kind, const PromptArgs& args) {
  std::string out;
  switch (kind) {
    case PromptKind::narrative_generation: {
      const auto& n = arg(args, kind, "N");
      out += pt::kGenerationHead;
      out += n + " clauses:\n" + arg(args, kind, "template_narrative") + "\n\n";
      out += pt::kGenerationInstruction;
      out += " Try to keep the overall narrative structure of the personal narrative above, but "
             "change as much of the subject matter and action as possible. Do not just use the "
             "narrative and replace key persons, places and things. Make it completely new. This "
             "new narrative must also contain exactly " + n + " clauses.";
      return out;
    }
    case PromptKind::lure_generation:
      out += arg(args, kind, "segmentation") + "\n";
      out += pt::kLureInstruction;
      return out;
    case PromptKind::recall_scoring:
      return scoring_prompt(args, kind);
    case PromptKind::ordered_scoring:
      // Scoring prompt, its completion, then the order instruction, as one input.
      out = scoring_prompt(args, kind);
      out += "\n\n" + arg(args, kind, "scoring_completion") + "\n\n";
      out += pt::kOrderInstruction;
      return out;
    case PromptKind::recall_segmentation:
      out += pt::kSegmentationInstruction;
      out += "\n" + arg(args, kind, "narrative");
      return out;
  }
  throw InvalidArgument("unknown prompt kind");
}

}  // namespace narrmem
