#include "genprobe/lenient_json.hpp"

#include <string>

namespace genprobe {
namespace {

// Rewrites 'x' as "x" outside double-quoted strings and drops commas that
// directly precede a closing bracket.
std::string normalize(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  bool in_double = false;
  bool in_single = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char c = in[i];
    if (in_double) {
      out += c;
      if (c == '\\' && i + 1 < in.size()) {
        out += in[++i];
      } else if (c == '"') {
        in_double = false;
      }
      continue;
    }
    if (in_single) {
      if (c == '\\' && i + 1 < in.size()) {
        out += c;
        out += in[++i];
      } else if (c == '\'') {
        out += '"';
        in_single = false;
      } else if (c == '"') {
        out += "\\\"";
      } else {
        out += c;
      }
      continue;
    }
    if (c == '"') {
      in_double = true;
      out += c;
    } else if (c == '\'') {
      in_single = true;
      out += '"';
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < in.size() && (in[j] == ' ' || in[j] == '\n' || in[j] == '\r' || in[j] == '\t')) ++j;
      if (j < in.size() && (in[j] == '}' || in[j] == ']')) continue;
      out += c;
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::optional<nlohmann::json> parse_model_json(std::string_view text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  auto parsed = nlohmann::json::parse(normalize(text.substr(open, close - open + 1)), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

}  // namespace genprobe
