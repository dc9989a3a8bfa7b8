#pragma once

#include <filesystem>
#include <string>

#include "eipl/corpus.hpp"

namespace eipl::testing {

inline std::filesystem::path source_dir() { return EIPL_SOURCE_DIR; }
inline std::filesystem::path questions_dir() { return source_dir() / "data" / "questions"; }
inline std::filesystem::path test_data_dir() { return source_dir() / "tests" / "data"; }

inline const Question& sum_of_positives() {
  static const Question q = load_question(questions_dir() / "A-Q4.json");
  return q;
}

inline const std::string kSumCode =
    "int sumOfPositives(int arr[], int size) {\n"
    "    int x = 0;\n"
    "    for (int i = 0; i < size; i++) {\n"
    "        if (arr[i] > 0) {\n"
    "            x += arr[i];\n"
    "        }\n"
    "    }\n"
    "    return x;\n"
    "}";

inline const std::string kLineByLineText =
    "input is values with array and length. initially set x to zero, and use for loop to set start i "
    "from zero and smaller than length, increasing by 1 for i each run. If values are bigger than zero, "
    "then x plus equal values. it will return to x at end.";

inline const std::string kSummaryText = "sums all positive numbers in the array.";

/// Assistant output for the multistructural exemplar, in the canonical two-space layout.
inline const std::string kLineByLineJson = R"({
  "groups": [
    {
      "code": "int sumOfPositives(int arr[], int size) {",
      "explanation_portion": "input is values with array and length"
    },
    {
      "code": "int x = 0;",
      "explanation_portion": "initially set x to zero"
    },
    {
      "code": "for (int i = 0; i < size; i++) {",
      "explanation_portion": "use for loop to set start i from zero and smaller than length, increasing by 1 for i each run"
    },
    {
      "code": "if (arr[i] > 0) {",
      "explanation_portion": "values are bigger than zero"
    },
    {
      "code": "x += arr[i];",
      "explanation_portion": "x plus equal values"
    },
    {
      "code": "return x;",
      "explanation_portion": "it will return to x at end"
    }
  ]
})";

}  // namespace eipl::testing
