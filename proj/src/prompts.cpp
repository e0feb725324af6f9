#include "ctxscope/prompts.hpp"

#include <cstdlib>
#include <filesystem>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"

namespace ctxscope {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::map<std::string, std::string> read_section(const nlohmann::json& j,
                                                const char* key) {
  std::map<std::string, std::string> out;
  if (!j.contains(key)) return out;
  for (const auto& [name, fmt] : j.at(key).items()) {
    out[name] = fmt.get<std::string>();
  }
  return out;
}

}  // namespace

PromptFormats PromptFormats::load(const std::string& path) {
  const nlohmann::json j = read_json(path);
  try {
    return {read_section(j, "nih"), read_section(j, "qa")};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

PromptFormats PromptFormats::bundled() {
  return load(data_dir() + "/prompt_formats.json");
}

std::string fill_prompt(const std::string& format, const std::string& context,
                        const std::string& question) {
  // Question first so a context containing "{question}" is left alone.
  std::string out = format;
  replace_all(out, "{question}", question);
  const std::size_t pos = out.find("{context}");
  if (pos != std::string::npos) out.replace(pos, 9, context);
  return out;
}

std::string data_dir() {
  if (const char* env = std::getenv("CTXSCOPE_DATA_DIR"); env && *env) return env;
  return CTXSCOPE_DATA_DIR;
}

TemplateSpec load_template(const std::string& path) {
  try {
    return TemplateSpec::from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

TemplateSpec resolve_template(const std::string& name_or_path) {
  if (name_or_path == "null") return TemplateSpec::null_template();
  const std::string bundled = data_dir() + "/templates/" + name_or_path + ".json";
  if (std::filesystem::exists(bundled)) return load_template(bundled);
  if (std::filesystem::exists(name_or_path)) return load_template(name_or_path);
  fail(ErrorKind::InvalidArgument, "unknown template '" + name_or_path + "'");
}

std::string load_haystack(const std::string& path) {
  const std::string raw = read_file(path);
  std::string out;
  bool space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace ctxscope
