#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "mtgan/corpus.hpp"

namespace mtgan {

inline constexpr double kBleuEpsilon = 1e-9;

// Sentence BLEU: geometric mean of clipped n-gram precisions for n = 1..N
// times the brevity penalty against the closest reference length. Zero
// precisions are replaced by kBleuEpsilon. N is min(max_n, candidate length),
// so a short candidate identical to a reference still scores 1. PAD tokens are
// dropped before counting; an empty candidate scores 0.
double bleu(std::span<const int> candidate, std::span<const std::vector<int>> references, int max_n = 4);

// Whitespace-tokenized convenience form.
double bleu(std::string_view candidate, std::span<const std::string_view> references, int max_n = 4);

// Mean over samples of BLEU(sample, every other sample). Needs at least two
// samples.
double self_bleu(std::span<const std::vector<int>> samples, int max_n = 4);
double self_bleu(std::span<const LabeledSequence> samples, int max_n = 4);

}  // namespace mtgan
