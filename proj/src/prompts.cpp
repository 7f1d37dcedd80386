#include <algorithm>
#include <cctype>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/judge.hpp"

namespace maskjudge::judge {
namespace {

constexpr const char* kMaskedBody = R"(Task: Evaluate the Model's Attention Mechanism Using the Provided Masked Image.

- Image Description:
    - The image is masked with a Grad-CAM heatmap, where only the areas the model focuses on are visible, while all other regions are blacked out.
    - The model is attempting to focus on the {object}.

- Evaluation Criteria:
    - Focus Accuracy: Analyze which part of the image the Grad-CAM is highlighting. Is the model's attention placed accurately on the {object}, or is it scattered across other areas?
    - Object Recognition: Determine whether the model correctly recognizes the {object}. Is the attention primarily on the correct object, or does the model focus on irrelevant areas?
    - Object Coverage: Evaluate how much of the object is being captured by the model's attention. Is the entire object covered, only a small part, or none at all?
    - Background and Irrelevant Focus: Check for any significant focus on the background or irrelevant objects. Does this distract the model from the primary object?
    - Explanatory Analysis: Provide possible reasons for the model's attention pattern. Consider whether the model is being misled by similarly shaped or colored objects, complex backgrounds, or other visual challenges.

- Scoring:

Assign a score between 0 and 5 based on the relevance and accuracy of the model's attention:
    - 0: The model's attention is completely irrelevant to the {object}, leading to a wrong result.
    - 1: The model fails to recognize the object entirely, focusing on irrelevant areas.
    - 2: The model captures only a small part of the object.
    - 3: The object is recognized, but the attention also covers irrelevant parts or other objects.
    - 4: Most of the object is detected correctly, with minimal distraction from irrelevant areas or the background.
    - 5: The model perfectly captures the entire object without being distracted by irrelevant areas or the background.

- Output Format:
    - Evaluation: Provide a concise evaluation (5-6 sentences), discussing:
        Where the Grad-CAM is focusing.
        Whether the attention aligns with the {object}.
        Whether there is any significant focus on irrelevant areas or the background.
        Explain why the model might focus on specific regions.

    - Score: Assign a score from 0 to 5, justifying your rating based on the model's performance in recognizing the object and avoiding distractions.

    - The format must be presented as follows:
        - Evaluation: [evaluation],
        - Justification: [justification],
        - Score: [score]
)";

constexpr const char* kHeatmapBody = R"(Task: Conduct an evaluation of the model's attention mechanism by analyzing its response to the supplied CAM heatmap. This assessment aims to test the model's capacity to effectively interpret and utilize attention when processing visual data.

- Image Description:
    - The heatmap uses warm colors (orange, red) to represent areas where the model is focusing most, while cool colors (blue, purple, dark) indicate regions of little to no attention.
    - The model's focus is on the {object}.
    - Identify the warm-colored regions and analyze what those regions represent in relation to the object of interest. In addition, assess the presence of cool-colored regions and their alignment with irrelevant areas or the background.

- Evaluation Criteria:
    - Focus Accuracy: Analyze which part of the heatmap the warm colors (orange, red) highlight. Is the model's attention accurately placed on the {object}, or is it scattered across other areas?
    - Object Recognition: Determine if the model is correctly recognizing the {object}. Is the attention primarily on the correct object, or does the model focus on irrelevant areas?
    - Object Coverage: Evaluate how much of the object is being captured by the model's attention. Is the entire object covered, only a small part, or none at all?
    - Background and Irrelevant Focus: Check for any significant focus on cool-colored regions. Does this distract the model from the primary object?
    - Explanatory Analysis: Provide possible reasons for the model's attention pattern. Consider whether the model is being misled by similar-colored areas, complex backgrounds, or other visual challenges.

- Scoring:

Assign a score between 0 and 5 based on the relevance and accuracy of the model's attention:
    - 0: The model's attention is scattered with no clear target, showing that it does not understand the task or the object.
    - 1: The model consistently directs its attention to something unrelated to {object}, indicating a fundamental misunderstanding of the {object} it is supposed to recognize.
    - 2: Partial object recognition: The model captures only a small fragment of the {object}, missing most of its critical features. The attention is mostly misdirected, with just minor alignment to the actual object.
    - 3: The model identifies a limited area of {object}, but its attention still includes some irrelevant parts surrounding it.
    - 4: The model predominantly focuses on {object}, with only minor distractions or irrelevant attention in the background.
    - 5: The model accurately captures the entire {object} without any distractions from irrelevant areas or background elements.

- Output Format:
    - Evaluation: Provide a concise evaluation (5-6 sentences), discussing:
        Where the heatmap focuses (warm colors).
        Whether the attention aligns with the {object}.
        Whether there is any significant focus on irrelevant areas or the background.
        Explain why the model might be focusing on specific regions.

    - Score: Assign a score from 0 to 5, justifying your rating in a sentence.

    - Your output format must be presented in a dictionary as follows, which is extremely important for the evaluation process to run without any error:
        - Evaluation: [evaluation],
        - Justification: [justification],
        - Score: [score]
)";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

void PromptTemplate::validate() const {
  if (body.find(kPlaceholder) == std::string::npos) {
    throw Error(ErrorKind::Validation, "prompt template has no {object} placeholder");
  }
}

const PromptTemplate& builtin_template(PromptVariant variant) {
  static const PromptTemplate masked{PromptVariant::Masked, kMaskedBody};
  static const PromptTemplate heatmap{PromptVariant::Heatmap, kHeatmapBody};
  return variant == PromptVariant::Masked ? masked : heatmap;
}

PromptTemplate load_template_file(const std::filesystem::path& path, PromptVariant variant) {
  PromptTemplate t{variant, io::read_text(path)};
  t.validate();
  return t;
}

std::string build_prompt(const PromptTemplate& tmpl, std::string_view object_label) {
  tmpl.validate();
  const std::string_view label = trim(object_label);
  if (label.empty()) throw Error(ErrorKind::Validation, "object label is empty");
  std::string out;
  out.reserve(tmpl.body.size() + 8 * label.size());
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = tmpl.body.find(kPlaceholder, pos);
    if (hit == std::string::npos) break;
    out.append(tmpl.body, pos, hit - pos);
    out.append(label);
    pos = hit + kPlaceholder.size();
  }
  out.append(tmpl.body, pos);
  return out;
}

}  // namespace maskjudge::judge
