#include "casejudge/text.hpp"

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <memory>

#include "casejudge/errors.hpp"

namespace casejudge::text {

std::string nfc(std::string_view utf8)
{
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) {
        throw Error(std::string("ICU NFC normalizer unavailable: ") + u_errorName(status));
    }
    auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    icu::UnicodeString dst = norm->normalize(src, status);
    if (U_FAILURE(status)) {
        throw Error(std::string("NFC normalization failed: ") + u_errorName(status));
    }
    std::string out;
    dst.toUTF8String(out);
    return out;
}

std::vector<char32_t> decode(std::string_view utf8)
{
    std::vector<char32_t> cps;
    cps.reserve(utf8.size());
    const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
    const auto len = static_cast<int32_t>(utf8.size());
    int32_t i = 0;
    while (i < len) {
        UChar32 c;
        U8_NEXT(s, i, len, c);
        cps.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
    }
    return cps;
}

void append_utf8(std::string& out, char32_t cp)
{
    std::array<uint8_t, U8_MAX_LENGTH> buf{};
    int32_t n = 0;
    UBool err = false;
    U8_APPEND(buf.data(), n, U8_MAX_LENGTH, static_cast<UChar32>(cp), err);
    if (err) {
        out += "\xEF\xBF\xBD";
        return;
    }
    out.append(reinterpret_cast<const char*>(buf.data()), static_cast<std::size_t>(n));
}

bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)); }

bool is_punct(char32_t cp) { return u_ispunct(static_cast<UChar32>(cp)); }

bool is_cjk(char32_t cp)
{
    UErrorCode status = U_ZERO_ERROR;
    switch (uscript_getScript(static_cast<UChar32>(cp), &status)) {
    case USCRIPT_HAN:
    case USCRIPT_HIRAGANA:
    case USCRIPT_KATAKANA:
    case USCRIPT_HANGUL:
        return U_SUCCESS(status);
    default:
        return false;
    }
}

std::string trim(std::string_view utf8)
{
    auto cps = decode(utf8);
    std::size_t b = 0;
    std::size_t e = cps.size();
    while (b < e && is_space(cps[b])) ++b;
    while (e > b && is_space(cps[e - 1])) --e;
    std::string out;
    for (std::size_t i = b; i < e; ++i) append_utf8(out, cps[i]);
    return out;
}

std::string punct_to_space(std::string_view utf8)
{
    std::string out;
    out.reserve(utf8.size());
    for (char32_t cp : decode(utf8)) {
        if (is_punct(cp)) {
            out.push_back(' ');
        } else {
            append_utf8(out, cp);
        }
    }
    return out;
}

std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int md_len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

}  // namespace casejudge::text
