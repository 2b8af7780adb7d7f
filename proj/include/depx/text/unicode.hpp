#pragma once

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>
#include <unicode/utf8.h>

#include <string>
#include <string_view>
#include <vector>

#include "depx/errors.hpp"

namespace depx::text {

// Decodes UTF-8 into code points; malformed bytes become U+FFFD.
inline std::vector<UChar32> code_points(std::string_view s) {
  std::vector<UChar32> out;
  out.reserve(s.size());
  int32_t i = 0;
  const auto len = static_cast<int32_t>(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  while (i < len) {
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    out.push_back(c < 0 ? 0xFFFD : c);
  }
  return out;
}

inline std::string to_utf8(const std::vector<UChar32>& cps, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t k = begin; k < end; ++k) {
    uint8_t buf[4];
    int32_t n = 0;
    UBool err = false;
    U8_APPEND(buf, n, 4, cps[k], err);
    if (!err) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

// Lowercase, Unicode NFC, whitespace runs collapsed to one ASCII space, trimmed.
inline std::string normalize(std::string_view raw) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  us.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw ConfigError("ICU NFC normalizer unavailable");
  icu::UnicodeString composed = nfc->normalize(us, status);
  if (U_FAILURE(status)) throw ValidationError("text could not be NFC-normalized");
  std::string utf8;
  composed.toUTF8String(utf8);

  const auto cps = code_points(utf8);
  std::vector<UChar32> collapsed;
  collapsed.reserve(cps.size());
  bool pending_space = false;
  for (UChar32 c : cps) {
    if (is_space(c)) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed.push_back(U' ');
    pending_space = false;
    collapsed.push_back(c);
  }
  return to_utf8(collapsed, 0, collapsed.size());
}

}  // namespace depx::text
