#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/image.hpp"

namespace intervene {

enum class Answer { kYes, kNo };

std::string_view to_string(Answer answer);

/// An image as referenced from a manifest. `source` is the path as written in the
/// manifest, or "<embedded>" for inline base64 images.
struct ImageRef {
  std::string source;
  Bytes bytes;
  bool operator==(const ImageRef&) const = default;
};

struct Sample {
  std::string id;
  ImageRef image;
  ImageRef annotated_image;
  std::string question;
  Answer ground_truth = Answer::kYes;
  std::string complementary_context;
  std::string contradictory_context;
  std::vector<std::string> tags;
  /// Free-text description of the image, used by the description ablation.
  std::optional<std::string> image_description;
};

enum class ConfigId { kQ, kQI, kQICPlus, kQICMinus, kQIA, kQIACPlus, kQIACMinus };

inline constexpr std::array<ConfigId, 7> kAllConfigIds = {
    ConfigId::kQ,   ConfigId::kQI,       ConfigId::kQICPlus,  ConfigId::kQICMinus,
    ConfigId::kQIA, ConfigId::kQIACPlus, ConfigId::kQIACMinus};

std::string_view to_string(ConfigId id);
/// Accepts the canonical spelling ("Q+IA+C-"); throws ParseError otherwise.
ConfigId parse_config_id(std::string_view text);

enum class ImageVariant { kBlack, kNoise, kNatural, kAnnotated, kNone };
enum class ContextVariant { kNone, kComplementary, kContradictory };
enum class PromptStyle { kStandard, kContextEmphasis };

std::string_view to_string(ImageVariant v);
std::string_view to_string(ContextVariant v);
std::string_view to_string(PromptStyle v);
ImageVariant parse_image_variant(std::string_view text);
PromptStyle parse_prompt_style(std::string_view text);

inline constexpr std::string_view kStandardAnswerPrompt = "Answer the question only with Yes or No.";
inline constexpr std::string_view kStandardReasoningPrompt = "Explain your answer:";
inline constexpr std::string_view kContextEmphasisAnswerPrompt =
    "Answer the question only with Yes or No. Answer based on the context provided in the text.";
inline constexpr std::string_view kContextEmphasisReasoningPrompt =
    "Explain your answer based on the context provided in the text:";

struct ModalityConfiguration {
  ConfigId config_id = ConfigId::kQ;
  ImageVariant image_variant = ImageVariant::kBlack;
  ContextVariant context_variant = ContextVariant::kNone;
  std::optional<std::string> image_description;
  PromptStyle prompt_style = PromptStyle::kStandard;
  ImageSize baseline_size{256, 256};
  std::optional<std::uint64_t> noise_seed;
  double noise_sigma = kDefaultNoiseSigma;

  /// The canonical configuration for `id`. For Q the image is `q_image`, which must be
  /// black, noise or none.
  static ModalityConfiguration canonical(ConfigId id, ImageVariant q_image = ImageVariant::kBlack);

  /// Throws Error when the id and the variants disagree.
  void validate() const;
};

struct AssembledInput {
  std::string sample_id;
  ConfigId config_id = ConfigId::kQ;
  ImageVariant image_variant = ImageVariant::kBlack;
  ContextVariant context_variant = ContextVariant::kNone;
  Bytes image_bytes;  // PNG; empty only for ImageVariant::kNone
  std::string question_text;
  std::optional<std::string> context_text;
  std::optional<std::string> description_text;
  std::string answer_prompt;
  std::string reasoning_prompt;
  std::optional<std::uint64_t> noise_seed;
  std::optional<double> noise_sigma;

  bool operator==(const AssembledInput&) const = default;
};

std::string_view answer_prompt(PromptStyle style, bool has_context);
std::string_view reasoning_prompt(PromptStyle style, bool has_context);

/// Builds the model input for one sample under one configuration. Deterministic in
/// (sample, config, noise seed); a noise configuration without a seed draws one and
/// records it in the result.
AssembledInput expand(const Sample& sample, const ModalityConfiguration& config);

/// Parses and validates a manifest document. Relative image paths resolve
/// against `base_dir`.
std::vector<Sample> parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
std::vector<Sample> load_manifest(const std::filesystem::path& path);

/// Serializes samples to a manifest document. Images are referenced by their
/// `source` path, or embedded when the source is "<embedded>".
nlohmann::json manifest_to_json(const std::vector<Sample>& samples);

nlohmann::json to_json(const AssembledInput& input);
AssembledInput assembled_input_from_json(const nlohmann::json& j);

}  // namespace intervene
