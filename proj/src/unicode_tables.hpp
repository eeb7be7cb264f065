#pragma once

#include <array>
#include <cstdint>

namespace consistok::unicode::tables {

struct CodepointRange {
    char32_t first;
    char32_t last;
};

struct CaseMapping {
    char32_t from;
    char32_t to;
};

extern const std::array<CodepointRange, 622> kLetter;
extern const std::array<CodepointRange, 133> kNumber;
extern const std::array<CodepointRange, 10> kPythonSpace;
extern const std::array<CaseMapping, 1392> kLowercase;

}  // namespace consistok::unicode::tables
