#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace vulnlink {

struct CleaningReport {
    std::size_t removed_urls = 0;
    std::size_t removed_citations = 0;
    std::size_t removed_markup = 0;
    std::size_t removed_symbols = 0;
    std::size_t chars_in = 0;
    std::size_t chars_out = 0;
};

struct CleanedText {
    std::string text;
    CleaningReport report;
};

/// Light cleaning for transformer input: strips `(Citation: …)` markers,
/// markup tags, URLs and symbols outside {letters, digits, '.', ',', '-'},
/// then collapses whitespace. Case, stop words and word forms are untouched.
/// Removed spans become a single space, so no two words are ever fused.
CleanedText clean_text(std::string_view raw);

}  // namespace vulnlink
