#include "intervene/dataset.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "intervene/base64.hpp"
#include "intervene/errors.hpp"

namespace intervene {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Answer answer) { return answer == Answer::kYes ? "Yes" : "No"; }

std::string_view to_string(ConfigId id) {
  switch (id) {
    case ConfigId::kQ: return "Q";
    case ConfigId::kQI: return "Q+I";
    case ConfigId::kQICPlus: return "Q+I+C+";
    case ConfigId::kQICMinus: return "Q+I+C-";
    case ConfigId::kQIA: return "Q+IA";
    case ConfigId::kQIACPlus: return "Q+IA+C+";
    case ConfigId::kQIACMinus: return "Q+IA+C-";
  }
  return "?";
}

ConfigId parse_config_id(std::string_view text) {
  for (ConfigId id : kAllConfigIds) {
    if (to_string(id) == text) return id;
  }
  throw ParseError("unknown configuration id '" + std::string(text) + "'");
}

std::string_view to_string(ImageVariant v) {
  switch (v) {
    case ImageVariant::kBlack: return "black";
    case ImageVariant::kNoise: return "noise";
    case ImageVariant::kNatural: return "natural";
    case ImageVariant::kAnnotated: return "annotated";
    case ImageVariant::kNone: return "none";
  }
  return "?";
}

std::string_view to_string(ContextVariant v) {
  switch (v) {
    case ContextVariant::kNone: return "none";
    case ContextVariant::kComplementary: return "complementary";
    case ContextVariant::kContradictory: return "contradictory";
  }
  return "?";
}

std::string_view to_string(PromptStyle v) {
  return v == PromptStyle::kStandard ? "standard" : "context_emphasis";
}

ImageVariant parse_image_variant(std::string_view text) {
  for (auto v : {ImageVariant::kBlack, ImageVariant::kNoise, ImageVariant::kNatural,
                 ImageVariant::kAnnotated, ImageVariant::kNone}) {
    if (to_string(v) == text) return v;
  }
  throw ParseError("unknown image variant '" + std::string(text) + "'");
}

PromptStyle parse_prompt_style(std::string_view text) {
  if (text == "standard") return PromptStyle::kStandard;
  if (text == "context_emphasis") return PromptStyle::kContextEmphasis;
  throw ParseError("unknown prompt style '" + std::string(text) + "'");
}

namespace {

ContextVariant parse_context_variant(std::string_view text) {
  for (auto v : {ContextVariant::kNone, ContextVariant::kComplementary, ContextVariant::kContradictory}) {
    if (to_string(v) == text) return v;
  }
  throw ParseError("unknown context variant '" + std::string(text) + "'");
}

bool uses_annotated(ConfigId id) {
  return id == ConfigId::kQIA || id == ConfigId::kQIACPlus || id == ConfigId::kQIACMinus;
}

ContextVariant context_of(ConfigId id) {
  switch (id) {
    case ConfigId::kQICPlus:
    case ConfigId::kQIACPlus: return ContextVariant::kComplementary;
    case ConfigId::kQICMinus:
    case ConfigId::kQIACMinus: return ContextVariant::kContradictory;
    default: return ContextVariant::kNone;
  }
}

bool is_baseline_image(ImageVariant v) {
  return v == ImageVariant::kBlack || v == ImageVariant::kNoise || v == ImageVariant::kNone;
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Bytes as_png(const Bytes& bytes) {
  if (is_png(bytes)) return bytes;
  return encode_png(decode_image(bytes));
}

std::string required_text(const json& entry, const std::string& id, const char* field) {
  auto it = entry.find(field);
  if (it == entry.end()) throw ValidationError(id, field, "missing");
  if (!it->is_string()) throw ValidationError(id, field, "must be a string");
  std::string value = it->get<std::string>();
  if (value.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError(id, field, "must be nonempty");
  }
  return value;
}

ImageRef resolve_image(const json& entry, const std::string& id, const char* field,
                       const fs::path& base_dir) {
  auto it = entry.find(field);
  if (it == entry.end()) throw ValidationError(id, field, "missing");
  ImageRef ref;
  try {
    if (it->is_string()) {
      ref.source = it->get<std::string>();
    } else if (it->is_object() && it->contains("path") && (*it)["path"].is_string()) {
      ref.source = (*it)["path"].get<std::string>();
    } else if (it->is_object() && it->contains("base64") && (*it)["base64"].is_string()) {
      ref.source = "<embedded>";
      ref.bytes = base64::decode((*it)["base64"].get<std::string>());
    } else {
      throw ValidationError(id, field, "must be a path string, {\"path\"} or {\"base64\"}");
    }
    if (ref.bytes.empty()) {
      fs::path p = ref.source;
      if (p.is_relative()) p = base_dir / p;
      ref.bytes = read_file(p);
    }
    decode_image(ref.bytes);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(id, field, e.what());
  }
  return ref;
}

json image_to_json(const ImageRef& ref) {
  if (ref.source == "<embedded>") return json{{"base64", base64::encode(ref.bytes)}};
  return ref.source;
}

}  // namespace

ModalityConfiguration ModalityConfiguration::canonical(ConfigId id, ImageVariant q_image) {
  ModalityConfiguration c;
  c.config_id = id;
  c.context_variant = context_of(id);
  if (id == ConfigId::kQ) {
    c.image_variant = q_image;
  } else {
    c.image_variant = uses_annotated(id) ? ImageVariant::kAnnotated : ImageVariant::kNatural;
  }
  c.validate();
  return c;
}

void ModalityConfiguration::validate() const {
  std::string id(to_string(config_id));
  if ((config_id == ConfigId::kQ) != (is_baseline_image(image_variant) &&
                                       context_variant == ContextVariant::kNone)) {
    throw Error("configuration " + id + " is inconsistent with image variant '" +
                std::string(to_string(image_variant)) + "' and context variant '" +
                std::string(to_string(context_variant)) + "'");
  }
  if (uses_annotated(config_id) != (image_variant == ImageVariant::kAnnotated)) {
    throw Error("configuration " + id + " is inconsistent with image variant '" +
                std::string(to_string(image_variant)) + "'");
  }
  if (config_id != ConfigId::kQ && image_variant != ImageVariant::kNatural &&
      image_variant != ImageVariant::kAnnotated) {
    throw Error("configuration " + id + " requires a natural or annotated image");
  }
  if (context_of(config_id) != context_variant) {
    throw Error("configuration " + id + " is inconsistent with context variant '" +
                std::string(to_string(context_variant)) + "'");
  }
  if (baseline_size.width < 1 || baseline_size.height < 1) {
    throw InvalidSize("baseline image size must be positive");
  }
  if (noise_sigma < 0.0) throw Error("noise sigma must be non-negative");
}

std::string_view answer_prompt(PromptStyle style, bool has_context) {
  return style == PromptStyle::kContextEmphasis && has_context ? kContextEmphasisAnswerPrompt
                                                               : kStandardAnswerPrompt;
}

std::string_view reasoning_prompt(PromptStyle style, bool has_context) {
  return style == PromptStyle::kContextEmphasis && has_context ? kContextEmphasisReasoningPrompt
                                                               : kStandardReasoningPrompt;
}

AssembledInput expand(const Sample& sample, const ModalityConfiguration& config) {
  config.validate();
  AssembledInput in;
  in.sample_id = sample.id;
  in.config_id = config.config_id;
  in.image_variant = config.image_variant;
  in.context_variant = config.context_variant;
  in.question_text = sample.question;
  switch (config.image_variant) {
    case ImageVariant::kBlack:
      in.image_bytes = synthesize_baseline_image(BaselineVariant::kBlack, config.baseline_size).png;
      break;
    case ImageVariant::kNoise: {
      auto synth = synthesize_baseline_image(BaselineVariant::kNoise, config.baseline_size,
                                             config.noise_seed, config.noise_sigma);
      in.image_bytes = std::move(synth.png);
      in.noise_seed = synth.seed;
      in.noise_sigma = config.noise_sigma;
      break;
    }
    case ImageVariant::kNatural: in.image_bytes = as_png(sample.image.bytes); break;
    case ImageVariant::kAnnotated: in.image_bytes = as_png(sample.annotated_image.bytes); break;
    case ImageVariant::kNone: break;
  }
  if (config.context_variant == ContextVariant::kComplementary) {
    in.context_text = sample.complementary_context;
  } else if (config.context_variant == ContextVariant::kContradictory) {
    in.context_text = sample.contradictory_context;
  }
  in.description_text = config.image_description;
  bool has_context = in.context_text.has_value();
  in.answer_prompt = answer_prompt(config.prompt_style, has_context);
  in.reasoning_prompt = reasoning_prompt(config.prompt_style, has_context);
  return in;
}

std::vector<Sample> parse_manifest(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
  if (!doc.contains("version") || doc["version"] != 1) {
    throw ParseError("manifest 'version' must be 1");
  }
  if (!doc.contains("samples") || !doc["samples"].is_array()) {
    throw ParseError("manifest 'samples' must be an array");
  }
  std::vector<Sample> samples;
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const json& entry : doc["samples"]) {
    std::string fallback = "#" + std::to_string(index++);
    if (!entry.is_object()) throw ValidationError(fallback, "sample", "must be an object");
    if (!entry.contains("id") || !entry["id"].is_string() || entry["id"].get<std::string>().empty()) {
      throw ValidationError(fallback, "id", "missing or not a nonempty string");
    }
    Sample s;
    s.id = entry["id"].get<std::string>();
    if (!seen.insert(s.id).second) throw ValidationError(s.id, "id", "duplicate id");
    s.question = required_text(entry, s.id, "question");
    std::string truth = required_text(entry, s.id, "ground_truth");
    if (truth == "Yes") {
      s.ground_truth = Answer::kYes;
    } else if (truth == "No") {
      s.ground_truth = Answer::kNo;
    } else {
      throw ValidationError(s.id, "ground_truth", "must be \"Yes\" or \"No\"");
    }
    s.complementary_context = required_text(entry, s.id, "complementary_context");
    s.contradictory_context = required_text(entry, s.id, "contradictory_context");
    if (auto it = entry.find("tags"); it != entry.end()) {
      if (!it->is_array()) throw ValidationError(s.id, "tags", "must be an array of strings");
      for (const json& tag : *it) {
        if (!tag.is_string()) throw ValidationError(s.id, "tags", "must be an array of strings");
        s.tags.push_back(tag.get<std::string>());
      }
    }
    if (auto it = entry.find("image_description"); it != entry.end() && !it->is_null()) {
      s.image_description = required_text(entry, s.id, "image_description");
    }
    s.image = resolve_image(entry, s.id, "image", base_dir);
    s.annotated_image = resolve_image(entry, s.id, "annotated_image", base_dir);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

json manifest_to_json(const std::vector<Sample>& samples) {
  json list = json::array();
  for (const Sample& s : samples) {
    json entry = {{"id", s.id},
                  {"image", image_to_json(s.image)},
                  {"annotated_image", image_to_json(s.annotated_image)},
                  {"question", s.question},
                  {"ground_truth", to_string(s.ground_truth)},
                  {"complementary_context", s.complementary_context},
                  {"contradictory_context", s.contradictory_context},
                  {"tags", s.tags}};
    if (s.image_description) entry["image_description"] = *s.image_description;
    list.push_back(std::move(entry));
  }
  return {{"version", 1}, {"samples", std::move(list)}};
}

json to_json(const AssembledInput& in) {
  json j = {{"sample_id", in.sample_id},
            {"config_id", to_string(in.config_id)},
            {"image_variant", to_string(in.image_variant)},
            {"context_variant", to_string(in.context_variant)},
            {"image_base64", base64::encode(in.image_bytes)},
            {"question_text", in.question_text},
            {"answer_prompt", in.answer_prompt},
            {"reasoning_prompt", in.reasoning_prompt}};
  if (in.context_text) j["context_text"] = *in.context_text;
  if (in.description_text) j["description_text"] = *in.description_text;
  if (in.noise_seed) j["noise_seed"] = *in.noise_seed;
  if (in.noise_sigma) j["noise_sigma"] = *in.noise_sigma;
  return j;
}

AssembledInput assembled_input_from_json(const json& j) {
  try {
    AssembledInput in;
    in.sample_id = j.at("sample_id").get<std::string>();
    in.config_id = parse_config_id(j.at("config_id").get<std::string>());
    in.image_variant = parse_image_variant(j.at("image_variant").get<std::string>());
    in.context_variant = parse_context_variant(j.at("context_variant").get<std::string>());
    in.image_bytes = base64::decode(j.at("image_base64").get<std::string>());
    in.question_text = j.at("question_text").get<std::string>();
    in.answer_prompt = j.at("answer_prompt").get<std::string>();
    in.reasoning_prompt = j.at("reasoning_prompt").get<std::string>();
    if (j.contains("context_text")) in.context_text = j["context_text"].get<std::string>();
    if (j.contains("description_text")) in.description_text = j["description_text"].get<std::string>();
    if (j.contains("noise_seed")) in.noise_seed = j["noise_seed"].get<std::uint64_t>();
    if (j.contains("noise_sigma")) in.noise_sigma = j["noise_sigma"].get<double>();
    return in;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed assembled input: ") + e.what());
  }
}

}  // namespace intervene
