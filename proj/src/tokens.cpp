#include "codemem/tokens.hpp"

#include "codemem/util.hpp"

#include <mutex>
#include <shared_mutex>

namespace codemem::metrics {

namespace {

std::shared_mutex& tokenizer_mutex() {
    static std::shared_mutex m;
    return m;
}

Tokenizer& tokenizer_slot() {
    static Tokenizer t;
    return t;
}

} // namespace

std::size_t estimate_tokens(std::string_view text) noexcept {
    const std::size_t chars = codepoint_count(text);
    return (chars + 3) / 4;
}

void set_tokenizer(Tokenizer tokenizer) {
    std::unique_lock lock(tokenizer_mutex());
    tokenizer_slot() = std::move(tokenizer);
}

std::size_t count_tokens(std::string_view text) {
    std::shared_lock lock(tokenizer_mutex());
    const auto& t = tokenizer_slot();
    return t ? t(text) : estimate_tokens(text);
}

} // namespace codemem::metrics
