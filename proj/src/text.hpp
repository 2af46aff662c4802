#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace exaranker::text {

/// Unicode NFC normalization of a UTF-8 string. ASCII input is returned unchanged.
std::string to_nfc(std::string_view utf8);

/// Removes CR and LF characters anywhere in the field.
std::string strip_crlf(std::string_view s);

/// Canonical form applied to every text field at parse time (CR/LF removed, then NFC).
std::string normalize_field(std::string_view s);

std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);

bool has_whitespace(std::string_view s);

/// Splits on ASCII whitespace runs, dropping empty tokens.
std::vector<std::string_view> split_whitespace(std::string_view s);

bool istarts_with(std::string_view s, std::string_view prefix);

std::string to_lower_ascii(std::string_view s);

/// `%.6f` formatting, fixed regardless of locale.
std::string format_fixed(double value, int digits);

void warn(std::string_view message);

}  // namespace exaranker::text
