#include "intervene/synthetic.hpp"

#include <cstdio>
#include <fstream>

#include "intervene/errors.hpp"
#include "intervene/image.hpp"

namespace intervene {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kSubjects[] = {"a red square", "a blue circle", "two green bars", "a yellow stripe",
                                 "a purple dot", "an orange frame", "a grey cross", "a white band",
                                 "a cyan corner", "a pink diagonal"};

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn-%02zu", i);
  return buf;
}

Answer truth_of(std::size_t i) { return i % 2 == 0 ? Answer::kYes : Answer::kNo; }

std::string answer_text(Answer a) { return a == Answer::kYes ? "Yes" : "No"; }

Answer flip(Answer a) { return a == Answer::kYes ? Answer::kNo : Answer::kYes; }

Image sample_image(std::size_t i, bool annotated) {
  Image img{32, 32, std::vector<std::uint8_t>(32 * 32 * 3)};
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>((i * 37 + x * 5) % 256);
      img.at(x, y, 1) = static_cast<std::uint8_t>((i * 91 + y * 7) % 256);
      img.at(x, y, 2) = static_cast<std::uint8_t>((i * 53 + (x ^ y) * 3) % 256);
    }
  }
  if (annotated) {
    for (int y = 2; y < 6; ++y) {
      for (int x = 2; x < 30; ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 255;
      }
    }
  }
  return img;
}

void write_bytes(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

json synthetic_manifest(std::size_t n) {
  json samples = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = sample_id(i);
    const std::string subject = kSubjects[i % std::size(kSubjects)];
    const bool yes = truth_of(i) == Answer::kYes;
    samples.push_back(
        {{"id", id},
         {"image", "images/" + id + ".png"},
         {"annotated_image", "images/" + id + "-annotated.png"},
         {"question", "Does the picture contain " + subject + "?"},
         {"ground_truth", answer_text(truth_of(i))},
         {"complementary_context",
          yes ? "The photographer placed " + subject + " near the middle of the frame."
              : "The photographer removed every object from the frame before shooting."},
         {"contradictory_context",
          yes ? "The photographer removed every object from the frame before shooting."
              : "The photographer placed " + subject + " near the middle of the frame."},
         {"image_description", "A small synthetic test pattern."},
         {"tags", {"synthetic"}}});
  }
  return {{"version", 1}, {"samples", std::move(samples)}};
}

Scenario synthetic_scenario(std::size_t n) {
  Scenario s;
  s.model_id = "mock-vlm";
  const int judge_base[] = {3, 7, 8, 4, 7, 8, 5};
  for (std::size_t c = 0; c < kAllConfigIds.size(); ++c) {
    const ConfigId config = kAllConfigIds[c];
    const auto& canonical = ModalityConfiguration::canonical(config);
    const bool contradictory = canonical.context_variant == ContextVariant::kContradictory;
    const bool with_context = canonical.context_variant != ContextVariant::kNone;
    const std::size_t correct = kSyntheticCorrect[c] * n / 10;
    for (std::size_t i = 0; i < n; ++i) {
      const Answer truth = truth_of(i);
      const bool ok = i < correct;
      const Answer greedy = ok ? truth : flip(truth);
      const std::string right = answer_text(truth);
      const std::string wrong = answer_text(flip(truth));

      // Split of the ten sampled answers: how many repeat the greedy answer.
      std::size_t agree = 10;
      if (config == ConfigId::kQ) {
        agree = 6;
      } else if (contradictory) {
        agree = ok ? 9 : 5;
      } else if (!with_context) {
        agree = ok ? 9 : 10;
      }
      ScenarioEntry e;
      e.answer = answer_text(greedy);
      for (std::size_t k = 0; k < 10; ++k) {
        e.answer_samples.push_back(k < agree ? answer_text(greedy) : answer_text(flip(greedy)));
      }
      e.reasoning = answer_text(greedy) + ", the picture " + (greedy == Answer::kYes ? "shows" : "does not show") +
                    " the object in question.";
      e.reasoning_samples = {*e.reasoning, answer_text(greedy) + ", judging by the visible shapes."};
      e.judge_score = std::clamp(judge_base[c] + (ok ? 1 : -2) + int(i % 2), 0, 10);
      AttentionProfile profile;
      if (config == ConfigId::kQ) profile.image = 1.0;
      if (with_context) profile.context = contradictory ? 3.0 : 2.5;
      e.attention = profile;
      s.entries[{sample_id(i), std::string(to_string(config))}] = std::move(e);
    }
  }
  return s;
}

void write_synthetic_dataset(const fs::path& dir, std::size_t n) {
  if (n == 0) throw Error("synthetic dataset needs at least one sample");
  fs::create_directories(dir / "images");
  for (std::size_t i = 0; i < n; ++i) {
    for (bool annotated : {false, true}) {
      Bytes png = encode_png(sample_image(i, annotated));
      std::string name = sample_id(i) + (annotated ? "-annotated" : "") + ".png";
      write_bytes(dir / "images" / name, std::string(png.begin(), png.end()));
    }
  }
  write_bytes(dir / "manifest.json", synthetic_manifest(n).dump(2) + "\n");
  write_bytes(dir / "scenario.json", to_json(synthetic_scenario(n)).dump(2) + "\n");
  json spec = {{"dataset", "manifest.json"}, {"scenario", "scenario.json"}, {"adapter", "mock"},
               {"n_samples", 10},         {"temperature", 0.9},            {"seed", 7},
               {"output_dir", "run"}};
  write_bytes(dir / "spec.json", spec.dump(2) + "\n");
}

}  // namespace intervene
