#include <algorithm>
#include <cmath>

#include "mtgan/corpus.hpp"

namespace mtgan {

Tensor pretrain_embeddings(std::span<const LabeledSequence> corpus, int vocab_size,
                           const SkipGramOptions& options, std::uint64_t seed) {
  if (options.dim < 2) throw ValidationError("pretrain_embeddings: dim must be at least 2");
  if (vocab_size <= 0) throw ValidationError("pretrain_embeddings: empty vocabulary");

  RngStream init(seed, stream_id({tag(Purpose::kEmbedding), 0}));
  Tensor input = uniform_tensor(vocab_size, options.dim, 0.5 / options.dim, init);
  Tensor output = Tensor::Zero(vocab_size, options.dim);

  // Noise distribution: unigram counts to the 3/4 power.
  std::vector<double> counts(static_cast<std::size_t>(vocab_size), 0.0);
  std::size_t total_tokens = 0;
  for (const auto& s : corpus) {
    for (int tok : s.tokens) {
      if (tok < 0 || tok >= vocab_size) throw IndexError("pretrain_embeddings: token id out of range");
      if (tok == kPadId || tok == kBosId) continue;
      counts[static_cast<std::size_t>(tok)] += 1.0;
      ++total_tokens;
    }
  }
  if (total_tokens == 0) return input;
  std::vector<double> cdf(counts.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    acc += std::pow(counts[i], 0.75);
    cdf[i] = acc;
  }

  const double total_steps = static_cast<double>(total_tokens) * options.epochs;
  double step = 0.0;
  RowVector grad_in(options.dim);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    RngStream rng(seed, stream_id({tag(Purpose::kEmbedding), 1, static_cast<std::uint64_t>(epoch)}));
    for (const auto& s : corpus) {
      const auto& toks = s.tokens;
      const int len = static_cast<int>(toks.size());
      for (int i = 0; i < len; ++i) {
        const int center = toks[static_cast<std::size_t>(i)];
        if (center == kPadId || center == kBosId) continue;
        const double lr = options.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
        step += 1.0;
        for (int j = std::max(0, i - options.window); j <= std::min(len - 1, i + options.window); ++j) {
          if (j == i) continue;
          const int context = toks[static_cast<std::size_t>(j)];
          if (context == kPadId || context == kBosId) continue;
          grad_in.setZero();
          for (int k = 0; k <= options.negatives; ++k) {
            int target = context;
            double label = 1.0;
            if (k > 0) {
              const double u = rng.uniform() * acc;
              target = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
              target = std::min(target, vocab_size - 1);
              if (target == context) continue;
              label = 0.0;
            }
            const double f = sigmoid(input.row(center).dot(output.row(target)));
            const double g = (label - f) * lr;
            grad_in += g * output.row(target);
            output.row(target) += g * input.row(center);
          }
          input.row(center) += grad_in;
        }
      }
    }
  }
  // Word plus context vectors: tokens that predict each other end up close,
  // not only tokens that share neighbours.
  Tensor out = input + output;
  ensure_finite(out, "skip-gram embeddings");
  return out;
}

}  // namespace mtgan
