#include "vulnlink/preproc.hpp"

#include "vulnlink/corpus.hpp"

#include <array>
#include <cctype>
#include <cstdint>

namespace vulnlink {

namespace {

bool ascii_alnum(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool iequals_prefix(std::string_view s, std::size_t pos, std::string_view prefix) {
    if (s.size() - pos < prefix.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) {
            return false;
        }
    }
    return true;
}

// Decodes the code point at `pos` of already-sanitized UTF-8; returns its length.
std::size_t decode(std::string_view s, std::size_t pos, std::uint32_t& cp) {
    auto c = static_cast<unsigned char>(s[pos]);
    std::size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : 4;
    cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (std::size_t i = 1; i < len; ++i) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[pos + i]) & 0x3F);
    }
    return len;
}

// Non-ASCII code points are kept as letters unless they fall in a
// punctuation or symbol block.
bool non_ascii_symbol(std::uint32_t cp) {
    return (cp >= 0x00A0 && cp <= 0x00BF) || cp == 0x00D7 || cp == 0x00F7 || (cp >= 0x2000 && cp <= 0x2BFF) ||
           (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFE30 && cp <= 0xFE4F) || (cp >= 0xFF00 && cp <= 0xFF0F) ||
           cp == 0xFFFD;
}

// True when the code point ending just before `pos` survives symbol removal
// as part of a word.
bool word_before(std::string_view s, std::size_t pos) {
    if (pos == 0) {
        return false;
    }
    std::size_t start = pos - 1;
    while (start > 0 && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80) {
        --start;
    }
    if (static_cast<unsigned char>(s[start]) < 0x80) {
        return ascii_alnum(s[start]);
    }
    std::uint32_t cp = 0;
    decode(s, start, cp);
    return !non_ascii_symbol(cp);
}

std::string remove_citations(std::string_view in, std::size_t& count) {
    static constexpr std::string_view kOpen = "(citation:";
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        if (in[i] == '(' && iequals_prefix(in, i, kOpen)) {
            auto close = in.find(')', i);
            if (close != std::string_view::npos) {
                out.push_back(' ');
                ++count;
                i = close + 1;
                continue;
            }
        }
        out.push_back(in[i++]);
    }
    return out;
}

std::string remove_markup(std::string_view in, std::size_t& count) {
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        if (in[i] == '<' && i + 1 < in.size() &&
            (std::isalpha(static_cast<unsigned char>(in[i + 1])) != 0 || in[i + 1] == '/' || in[i + 1] == '!')) {
            auto close = in.find_first_of("<>", i + 1);
            if (close != std::string_view::npos && in[close] == '>') {
                out.push_back(' ');
                ++count;
                i = close + 1;
                continue;
            }
        }
        out.push_back(in[i++]);
    }
    return out;
}

std::string remove_urls(std::string_view in, std::size_t& count) {
    static constexpr std::array<std::string_view, 4> kStarts = {"http://", "https://", "ftp://", "www."};
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        bool boundary = !word_before(in, i);
        bool url = false;
        if (boundary) {
            for (auto start : kStarts) {
                if (iequals_prefix(in, i, start)) {
                    url = true;
                    break;
                }
            }
        }
        if (url) {
            while (i < in.size() && !space(in[i])) {
                ++i;
            }
            out.push_back(' ');
            ++count;
            continue;
        }
        out.push_back(in[i++]);
    }
    return out;
}

}  // namespace

CleanedText clean_text(std::string_view raw) {
    CleanedText result;
    auto& report = result.report;
    report.chars_in = raw.size();

    auto text = sanitize_utf8(raw);
    text = remove_citations(text, report.removed_citations);
    text = remove_markup(text, report.removed_markup);
    text = remove_urls(text, report.removed_urls);

    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    auto emit = [&](std::string_view piece) {
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        out.append(piece);
    };
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (static_cast<unsigned char>(c) >= 0x80) {
            std::uint32_t cp = 0;
            auto len = decode(text, i, cp);
            if (non_ascii_symbol(cp)) {
                ++report.removed_symbols;
                pending_space = true;
            } else {
                emit(std::string_view(text).substr(i, len));
            }
            i += len;
            continue;
        }
        if (ascii_alnum(c) || c == '.' || c == ',' || c == '-') {
            emit(std::string_view(&text[i], 1));
        } else if (space(c)) {
            pending_space = true;
        } else {
            ++report.removed_symbols;
            pending_space = true;
        }
        ++i;
    }
    result.text = std::move(out);
    report.chars_out = result.text.size();
    return result;
}

}  // namespace vulnlink
