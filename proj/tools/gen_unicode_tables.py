#!/usr/bin/env python3
"""Generate src/unicode_tables.cpp from Python's unicodedata.

Usage: python3 tools/gen_unicode_tables.py > src/unicode_tables.cpp
"""
import sys
import unicodedata

MAX_CP = 0x110000


def ranges(pred):
    out = []
    start = None
    for cp in range(MAX_CP):
        if pred(cp):
            if start is None:
                start = cp
        elif start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def category(cp):
    return unicodedata.category(chr(cp))


def emit_ranges(name, rs):
    print(f"const std::array<CodepointRange, {len(rs)}> {name} = {{{{")
    for a, b in rs:
        print(f"    {{0x{a:X}, 0x{b:X}}},")
    print("}};")
    print()


def main():
    letters = ranges(lambda cp: category(cp).startswith("L"))
    numbers = ranges(lambda cp: category(cp).startswith("N"))
    py_space = ranges(lambda cp: chr(cp).isspace())

    lower = []
    for cp in range(MAX_CP):
        c = chr(cp)
        lc = c.lower()
        if lc != c and len(lc) == 1:
            lower.append((cp, ord(lc)))

    print("// Generated by tools/gen_unicode_tables.py from Unicode", unicodedata.unidata_version + ".")
    print("// Do not edit by hand.")
    print()
    print('#include "unicode_tables.hpp"')
    print()
    print("namespace consistok::unicode::tables {")
    print()
    emit_ranges("kLetter", letters)
    emit_ranges("kNumber", numbers)
    emit_ranges("kPythonSpace", py_space)
    print(f"const std::array<CaseMapping, {len(lower)}> kLowercase = {{{{")
    for a, b in lower:
        print(f"    {{0x{a:X}, 0x{b:X}}},")
    print("}};")
    print()
    print("}  // namespace consistok::unicode::tables")


if __name__ == "__main__":
    sys.exit(main())
