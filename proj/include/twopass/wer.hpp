#ifndef TWOPASS_WER_HPP
#define TWOPASS_WER_HPP

#include <vector>

#include "twopass/common.hpp"

namespace twopass {

// Token-level Levenshtein distance with unit substitution/insertion/deletion
// costs.
int word_errors(const TokenSeq& hyp, const TokenSeq& ref);

// Corpus WER: total edit distance over total reference length.
double compute_wer(const std::vector<TokenSeq>& refs,
                   const std::vector<TokenSeq>& hyps);

}  // namespace twopass

#endif  // TWOPASS_WER_HPP
