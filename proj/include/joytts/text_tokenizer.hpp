#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "joytts/common.hpp"

namespace joytts {

// Byte-level text vocabulary: ids 0..255 are raw bytes, then the specials.
namespace text_vocab {
constexpr int kBos = 256;
constexpr int kEos = 257;
constexpr int kPad = 258;
constexpr int kTurnUser = 259;
constexpr int kTurnAssistant = 260;
constexpr int kSize = 261;
}  // namespace text_vocab

using TextTokenSeq = std::vector<int>;

// The instruction prepended to clone-prompt text; configurable, trailing
// space intentional.
inline constexpr std::string_view kDefaultRepeatWrapper = "Please repeat the following text. ";

inline TextTokenSeq encode_text(std::string_view text) {
  TextTokenSeq ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

namespace detail {

// Replaces malformed UTF-8 byte sequences with U+FFFD.
inline std::string sanitize_utf8(const std::string& bytes) {
  static constexpr std::string_view kReplacement = "\xef\xbf\xbd";
  std::string out;
  out.reserve(bytes.size());
  size_t i = 0;
  while (i < bytes.size()) {
    unsigned char c = bytes[i];
    int len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xe0) == 0xc0 && c >= 0xc2) {
      len = 2;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
    } else if ((c & 0xf8) == 0xf0 && c <= 0xf4) {
      len = 4;
    } else {
      out += kReplacement;
      ++i;
      continue;
    }
    if (i + len > bytes.size()) {
      out += kReplacement;
      ++i;
      continue;
    }
    bool ok = true;
    for (int j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(bytes[i + j]) & 0xc0) != 0x80) ok = false;
    }
    // Reject overlong / surrogate / out-of-range forms.
    if (ok && len == 3) {
      unsigned char c1 = bytes[i + 1];
      if ((c == 0xe0 && c1 < 0xa0) || (c == 0xed && c1 >= 0xa0)) ok = false;
    }
    if (ok && len == 4) {
      unsigned char c1 = bytes[i + 1];
      if ((c == 0xf0 && c1 < 0x90) || (c == 0xf4 && c1 >= 0x90)) ok = false;
    }
    if (ok) {
      out.append(bytes, i, len);
      i += len;
    } else {
      out += kReplacement;
      ++i;
    }
  }
  return out;
}

}  // namespace detail

// Specials are skipped; invalid byte sequences come back as U+FFFD.
inline std::string decode_text(const TextTokenSeq& tokens) {
  std::string bytes;
  bytes.reserve(tokens.size());
  for (int id : tokens) {
    require(id >= 0 && id < text_vocab::kSize, "decode: token id out of range");
    if (id < 256) bytes.push_back(static_cast<char>(id));
  }
  return detail::sanitize_utf8(bytes);
}

struct ChatTurn {
  std::string role;  // "user" | "assistant"
  std::string text;
};

// [BOS] then marker+bytes per turn, ending with TURN_ASSISTANT as the
// generation cue. History must alternate user/assistant starting at user.
inline TextTokenSeq chat_template(const std::vector<ChatTurn>& history,
                                  std::string_view user_msg) {
  for (size_t i = 0; i < history.size(); ++i) {
    const std::string& expect = (i % 2 == 0) ? "user" : "assistant";
    require(history[i].role == expect,
            "chat_template: roles must alternate user/assistant, turn " + std::to_string(i) +
                " is '" + history[i].role + "'");
  }
  require(history.size() % 2 == 0, "chat_template: history must end with an assistant turn");
  TextTokenSeq out;
  out.push_back(text_vocab::kBos);
  for (const ChatTurn& turn : history) {
    out.push_back(turn.role == "user" ? text_vocab::kTurnUser : text_vocab::kTurnAssistant);
    for (unsigned char c : turn.text) out.push_back(static_cast<int>(c));
  }
  out.push_back(text_vocab::kTurnUser);
  for (unsigned char c : user_msg) out.push_back(static_cast<int>(c));
  out.push_back(text_vocab::kTurnAssistant);
  return out;
}

// Wraps prompt text in the repeat instruction as a single-turn template.
inline TextTokenSeq repeat_prompt_wrap(std::string_view prompt_text,
                                       std::string_view wrapper = kDefaultRepeatWrapper) {
  std::string msg(wrapper);
  msg += prompt_text;
  return chat_template({}, msg);
}

// Position of the first prompt byte inside repeat_prompt_wrap output:
// BOS + TURN_USER + wrapper bytes.
inline int repeat_wrap_prompt_offset(std::string_view wrapper = kDefaultRepeatWrapper) {
  return 2 + static_cast<int>(wrapper.size());
}

}  // namespace joytts
