#pragma once

namespace kittensim {

inline constexpr const char* kVersion = "0.1.0";

} // namespace kittensim
