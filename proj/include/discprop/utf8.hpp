#pragma once

#include <string>
#include <string_view>

namespace discprop::utf8 {

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD one byte at a
// time so offsets stay defined for any input.
std::u32string decode(std::string_view bytes);
std::string encode(std::u32string_view text);

}  // namespace discprop::utf8
