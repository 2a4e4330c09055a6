#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace latentsteer {

/// Ordered sentence templates, each with exactly one "{}" slot.
class TemplateBank {
 public:
  TemplateBank(std::vector<std::string> templates, std::string id);

  /// The 80-sentence ImageNet zero-shot bank (the default).
  static const TemplateBank& imagenet80();
  /// Newline-delimited templates; blank lines are skipped.
  static TemplateBank parse(std::string_view text, std::string id);
  static TemplateBank load(const std::filesystem::path& path);
  /// "imagenet-80" or a path to a template file.
  static TemplateBank resolve(std::string_view id_or_path);

  const std::string& id() const { return id_; }
  std::size_t size() const { return templates_.size(); }
  const std::vector<std::string>& templates() const { return templates_; }
  std::string render(std::size_t index, std::string_view subject) const;

 private:
  std::vector<std::string> templates_;
  std::string id_;
};

inline constexpr std::string_view kDefaultTemplateBankId = "imagenet-80";
inline constexpr std::size_t kDefaultTemplateBankSize = 80;

}  // namespace latentsteer
