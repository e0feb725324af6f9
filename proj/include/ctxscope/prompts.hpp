#pragma once

#include <map>
#include <string>

#include "ctxscope/chat_template.hpp"

namespace ctxscope {

// Named user-message layouts with {context} and {question} placeholders.
struct PromptFormats {
  std::map<std::string, std::string> nih;
  std::map<std::string, std::string> qa;

  static PromptFormats load(const std::string& path);
  static PromptFormats bundled();
};

std::string fill_prompt(const std::string& format, const std::string& context,
                        const std::string& question);

// Directory holding bundled templates, prompt formats and filler text.
std::string data_dir();

TemplateSpec load_template(const std::string& path);
// "null", "chat", ... resolved against the bundled templates directory, or a
// path to a JSON file.
TemplateSpec resolve_template(const std::string& name_or_path);

// Bundled filler text with whitespace runs collapsed to single spaces.
std::string load_haystack(const std::string& path);

}  // namespace ctxscope
