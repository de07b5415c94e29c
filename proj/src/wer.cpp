#include "twopass/wer.hpp"

#include <algorithm>

namespace twopass {

int word_errors(const TokenSeq& hyp, const TokenSeq& ref) {
  const std::size_t n = hyp.size();
  const std::size_t m = ref.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double compute_wer(const std::vector<TokenSeq>& refs,
                   const std::vector<TokenSeq>& hyps) {
  if (refs.size() != hyps.size()) {
    throw ValueError("compute_wer: " + std::to_string(refs.size()) +
                     " references vs " + std::to_string(hyps.size()) +
                     " hypotheses");
  }
  long long errors = 0;
  long long ref_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += word_errors(hyps[i], refs[i]);
    ref_len += static_cast<long long>(refs[i].size());
  }
  if (ref_len == 0) {
    throw ValueError("compute_wer: total reference length is zero");
  }
  return static_cast<double>(errors) / static_cast<double>(ref_len);
}

}  // namespace twopass
