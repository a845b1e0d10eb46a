#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

namespace codemem::metrics {

/// ceil(code points / 4). Model-agnostic and reproducible.
std::size_t estimate_tokens(std::string_view text) noexcept;

using Tokenizer = std::function<std::size_t(std::string_view)>;

/// Process-wide hook for exact token counts. Passing an empty function
/// restores the default estimator.
void set_tokenizer(Tokenizer tokenizer);
std::size_t count_tokens(std::string_view text);

} // namespace codemem::metrics
