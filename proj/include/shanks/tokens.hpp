#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace shanks {

using Token = std::string;
using Tokens = std::vector<Token>;

/// Protocol marker tokens. Each is a single opaque token.
namespace marker {
inline constexpr std::string_view kEndOfPartialAudio = "[EOPA]";
inline constexpr std::string_view kEndOfAudio = "[EOA]";
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kInterrupt = "[INTERRUPT]";
inline constexpr std::string_view kNoInterrupt = "[NO_INTERRUPT]";
inline constexpr std::string_view kToolCallOpen = "<tool_call>";
inline constexpr std::string_view kToolCallClose = "</tool_call>";

inline constexpr std::array<std::string_view, 8> kAll = {
    kEndOfPartialAudio, kEndOfAudio, kThinkOpen,     kThinkClose,
    kInterrupt,         kNoInterrupt, kToolCallOpen, kToolCallClose,
};
} // namespace marker

bool is_marker(std::string_view token);

/// Whitespace tokenizer. Known markers are split out even when glued to text.
Tokens tokenize(std::string_view text);

/// Space-joined rendering of a token list.
std::string detokenize(const Tokens& tokens);

bool contains(const Tokens& tokens, std::string_view token);

} // namespace shanks
