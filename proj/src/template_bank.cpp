#include "latentsteer/template_bank.hpp"

#include <sstream>

#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"

namespace latentsteer {

namespace {

std::size_t count_slots(std::string_view t) {
  std::size_t n = 0;
  for (std::size_t pos = t.find("{}"); pos != std::string_view::npos; pos = t.find("{}", pos + 2)) ++n;
  return n;
}

}  // namespace

TemplateBank::TemplateBank(std::vector<std::string> templates, std::string id)
    : templates_(std::move(templates)), id_(std::move(id)) {
  if (templates_.empty()) throw Error(ErrorCode::kInvalidArgument, "template bank is empty");
  for (const auto& t : templates_) {
    if (count_slots(t) != 1) {
      throw Error(ErrorCode::kInvalidArgument, "template must contain exactly one {} slot: '" + t + "'");
    }
  }
}

const TemplateBank& TemplateBank::imagenet80() {
  static const TemplateBank bank({
      "a bad photo of a {}.",
      "a photo of many {}.",
      "a sculpture of a {}.",
      "a photo of the hard to see {}.",
      "a low resolution photo of the {}.",
      "a rendering of a {}.",
      "graffiti of a {}.",
      "a bad photo of the {}.",
      "a cropped photo of the {}.",
      "a tattoo of a {}.",
      "the embroidered {}.",
      "a photo of a hard to see {}.",
      "a bright photo of a {}.",
      "a photo of a clean {}.",
      "a photo of a dirty {}.",
      "a dark photo of the {}.",
      "a drawing of a {}.",
      "a photo of my {}.",
      "the plastic {}.",
      "a photo of the cool {}.",
      "a close-up photo of a {}.",
      "a black and white photo of the {}.",
      "a painting of the {}.",
      "a painting of a {}.",
      "a pixelated photo of the {}.",
      "a sculpture of the {}.",
      "a bright photo of the {}.",
      "a cropped photo of a {}.",
      "a plastic {}.",
      "a photo of the dirty {}.",
      "a jpeg corrupted photo of a {}.",
      "a blurry photo of the {}.",
      "a photo of the {}.",
      "a good photo of the {}.",
      "a rendering of the {}.",
      "a {} in a video game.",
      "a photo of one {}.",
      "a doodle of a {}.",
      "a close-up photo of the {}.",
      "a photo of a {}.",
      "the origami {}.",
      "the {} in a video game.",
      "a sketch of a {}.",
      "a doodle of the {}.",
      "a origami {}.",
      "a low resolution photo of a {}.",
      "the toy {}.",
      "a rendition of the {}.",
      "a photo of the clean {}.",
      "a photo of a large {}.",
      "a rendition of a {}.",
      "a photo of a nice {}.",
      "a photo of a weird {}.",
      "a blurry photo of a {}.",
      "a cartoon {}.",
      "art of a {}.",
      "a sketch of the {}.",
      "a embroidered {}.",
      "a pixelated photo of a {}.",
      "itap of the {}.",
      "a jpeg corrupted photo of the {}.",
      "a good photo of a {}.",
      "a plushie {}.",
      "a photo of the nice {}.",
      "a photo of the small {}.",
      "a photo of the weird {}.",
      "the cartoon {}.",
      "art of the {}.",
      "a drawing of the {}.",
      "a photo of the large {}.",
      "a black and white photo of a {}.",
      "the plushie {}.",
      "a dark photo of a {}.",
      "itap of a {}.",
      "graffiti of the {}.",
      "a toy {}.",
      "itap of my {}.",
      "a photo of a cool {}.",
      "a photo of a small {}.",
      "a tattoo of the {}."
  }, std::string(kDefaultTemplateBankId));
  return bank;
}

TemplateBank TemplateBank::parse(std::string_view text, std::string id) {
  std::vector<std::string> templates;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    templates.push_back(line);
  }
  return TemplateBank(std::move(templates), std::move(id));
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

TemplateBank TemplateBank::resolve(std::string_view id_or_path) {
  if (id_or_path.empty() || id_or_path == kDefaultTemplateBankId) return imagenet80();
  return load(std::filesystem::path(id_or_path));
}

std::string TemplateBank::render(std::size_t index, std::string_view subject) const {
  std::string out = templates_.at(index);
  out.replace(out.find("{}"), 2, subject);
  return out;
}

}  // namespace latentsteer
