#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace narrmem {

enum class PromptKind {
  narrative_generation,
  lure_generation,
  recall_scoring,
  ordered_scoring,
  recall_segmentation,
};

std::string to_string(PromptKind kind);
PromptKind prompt_kind_from_string(const std::string& s);

using PromptArgs = std::map<std::string, std::string>;

// Placeholder names per kind:
//   narrative_generation  N, template_narrative
//   lure_generation       segmentation
//   recall_scoring        narrative, segmentation, recall
//   ordered_scoring       narrative, segmentation, recall, scoring_completion
//   recall_segmentation   narrative
// A missing or empty placeholder throws InvalidArgument naming it. The recall
// is the one argument allowed to be empty.
std::vector<std::string> prompt_placeholders(PromptKind kind);
std::string render_prompt(PromptKind kind, const PromptArgs& args);

double default_temperature(PromptKind kind);

// Fixed sentences of the templates, exposed so the offline mock can tell the
// prompts apart.
namespace prompt_text {
inline constexpr std::string_view kGenerationHead =
    "This is a true personal narrative about a single event in someone's life. It has exactly ";
inline constexpr std::string_view kGenerationInstruction =
    "Generate a new personal narrative that is unique and about something completely different.";
inline constexpr std::string_view kLureInstruction =
    "The items above all fit together to tell a story. Add more items of roughly the same "
    "length, numbered 1.5, 2.5, and so on, interleaving the existing items, elaborating on the "
    "story, and without repetition. These new items should introduce completely new plot "
    "elements, but still make sense in the context of the rest of the story. Add as many items "
    "as possible.";
inline constexpr std::string_view kScoringOriginal = "This is the original text:";
inline constexpr std::string_view kScoringPieces =
    "It can be broken down into the following independent pieces of information:";
inline constexpr std::string_view kScoringAlternative =
    "Here is an alternative version of the original text where some of the above pieces of "
    "information may be missing:";
inline constexpr std::string_view kScoringInstruction =
    "For each of the numbered information pieces of the list above, evaluate whether the "
    "information of each piece is given in the alternative version of the story, stating the "
    "number and showing the corresponding passage from the alternative story it is given in. "
    "After, write all the numbers of the pieces that are given in the alternative version of "
    "the story in a set of brackets at the end of the response.";
inline constexpr std::string_view kOrderInstruction =
    "Now repeat the alternative version of the narrative with the number of the independent "
    "piece of information inserted next to the location in which it appears in the alternative "
    "version. Then, list the numbers separately in the order in which they appear in the "
    "alternative story immediately above. The final list of numbers should be enclosed in "
    "parentheses.";
inline constexpr std::string_view kSegmentationInstruction =
    "Provide a word-for-word segmentation of the following narrative into linguistic clauses, "
    "numbered in order of appearance in the narrative:";
}  // namespace prompt_text

}  // namespace narrmem
