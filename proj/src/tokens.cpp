#include "shanks/tokens.hpp"

#include <algorithm>
#include <cctype>

namespace shanks {

bool is_marker(std::string_view token)
{
    return std::find(marker::kAll.begin(), marker::kAll.end(), token) != marker::kAll.end();
}

namespace {

// Splits one whitespace-free word into text pieces and marker pieces.
void split_markers(std::string_view word, Tokens& out)
{
    while (!word.empty()) {
        std::size_t best = std::string_view::npos;
        std::string_view hit;
        for (auto m : marker::kAll) {
            auto pos = word.find(m);
            if (pos != std::string_view::npos && (pos < best || (pos == best && m.size() > hit.size()))) {
                best = pos;
                hit = m;
            }
        }
        if (best == std::string_view::npos) {
            out.emplace_back(word);
            return;
        }
        if (best > 0) out.emplace_back(word.substr(0, best));
        out.emplace_back(hit);
        word.remove_prefix(best + hit.size());
    }
}

} // namespace

Tokens tokenize(std::string_view text)
{
    Tokens out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) split_markers(text.substr(i, j - i), out);
        i = j;
    }
    return out;
}

std::string detokenize(const Tokens& tokens)
{
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

bool contains(const Tokens& tokens, std::string_view token)
{
    return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

} // namespace shanks
