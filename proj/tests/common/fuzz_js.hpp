#pragma once

#include <random>
#include <string>

namespace fuzz {

/// Function whose body is a random stream of expression statements drawn
/// from identifiers, literals, operators, calls, member accesses, control
/// keywords and comments.
inline std::string token_stream_function(std::mt19937& gen) {
    static const char* operands[] = {"a", "b", "x", "y", "count", "42", "3.5", "'s'", "\"t\"", "true", "null", "this.v", "arr[i]"};
    static const char* binary[] = {"+", "-", "*", "/", "%", "==", "===", "!=", "<", ">=", "&&", "||", "&", "|", "^", "<<", ">>"};
    static const char* unary[] = {"!", "-", "typeof ", "~", ""};
    auto pick = [&](auto& arr) { return std::string(arr[gen() % (sizeof(arr) / sizeof(arr[0]))]); };
    auto expr = [&](int terms) {
        std::string e = pick(unary) + pick(operands);
        for (int i = 1; i < terms; ++i) {
            switch (gen() % 4) {
                case 0: e += " " + pick(binary) + " f(" + pick(operands) + ")"; break;
                case 1: e += " ? " + pick(operands) + " : " + pick(operands); break;
                default: e += " " + pick(binary) + " " + pick(unary) + pick(operands);
            }
        }
        return e;
    };
    std::string body;
    const int statements = int(gen() % 8);
    for (int s = 0; s < statements; ++s) {
        const int terms = 1 + int(gen() % 5);
        switch (gen() % 7) {
            case 0: body += "  if (" + expr(terms) + ") { x = " + expr(1) + "; }\n"; break;
            case 1: body += "  while (" + expr(terms) + ") y++;\n"; break;
            case 2: body += "  // " + expr(2) + "\n"; break;
            case 3: body += "  return " + expr(terms) + ";\n"; break;
            case 4: body += "  var v" + std::to_string(s) + " = [" + expr(1) + ", " + expr(terms) + "];\n"; break;
            default: body += "  x = " + expr(terms) + ";\n";
        }
    }
    std::string params;
    const int n = int(gen() % 4);
    for (int i = 0; i < n; ++i) params += (i ? ", p" : "p") + std::to_string(i);
    return "function fuzzed(" + params + ") {\n" + body + "}\n";
}

}  // namespace fuzz
