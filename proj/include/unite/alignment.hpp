#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "unite/backend.hpp"
#include "unite/trace.hpp"
#include "unite/types.hpp"

namespace unite {

// Which alignment criterion produced a matrix cell.
enum class Provenance {
  top_k,                        // criterion 1: token was in the model's top-k
  vocab_lookup,                 // criterion 2: in-vocabulary point lookup
  retokenized_first_subtoken,   // criterion 3: priced by its first sub-token
};

std::string provenance_name(Provenance p);

// The per-step working set: the union vocabulary and, per model, one row of
// probabilities over it plus the criterion that produced each cell.
struct AlignedMatrix {
  std::vector<TokenText> union_tokens;
  std::vector<std::vector<Probability>> probs;
  std::vector<std::vector<Provenance>> provenance;
};

// Set-union of the distributions' top-k token texts, ordered by descending
// maximum probability across models, ties by ascending token byte order.
// The ordering is deterministic and invariant to the order of `dists`.
std::vector<TokenText> build_union(const std::vector<StepDistribution>& dists);

struct ExpandedRow {
  std::vector<Probability> probs;
  std::vector<Provenance> provenance;
};

// One model's probability for every union token:
//   1. token in the model's top-k        -> its top-k probability;
//   2. otherwise, token in the model's
//      vocabulary                        -> point lookup via the backend;
//   3. otherwise                         -> tokenize with the model's own
//      tokenizer and price the union token by its FIRST sub-token (top-k
//      probability if the sub-token is there, point lookup otherwise).
// The union token keeps its own identity in the matrix either way, so the
// same sub-token may price several union tokens.
ExpandedRow expand_model(const std::vector<TokenText>& union_tokens,
                         const StepDistribution& dist,
                         const ModelProfile& profile, Backend& backend,
                         const GenerationContext& ctx,
                         Probability missing_prob_floor);

enum class NormalizationMode {
  softmax,  // the production rule: each row becomes softmax(row)
  sum,      // experimental: divide by the row sum (uniform if the row is 0)
};

// Replaces every probability row with its normalization over the aligned
// subset. Note the softmax is applied to values that are already
// probabilities — deliberately, as the second normalization is part of the
// method; sum mode exists only for sensitivity experiments.
AlignedMatrix normalize_rows(AlignedMatrix m,
                             NormalizationMode mode = NormalizationMode::softmax);

// Column-wise arithmetic mean of the normalized rows. Each column's values
// are accumulated in sorted order so the result is bit-identical under any
// permutation of the model list.
std::vector<Probability> aggregate(const AlignedMatrix& normalized);

// Greedy argmax (ties by ascending token byte order), or top-k sampling over
// the renormalized top sample_k entries. Sampling draws from `rng` when
// given, else from a fresh generator seeded with the policy seed.
TokenText select_next(const std::vector<Probability>& avg,
                      const std::vector<TokenText>& union_tokens,
                      const SelectionPolicy& policy,
                      std::mt19937_64* rng = nullptr);

// One full kernel step: build_union -> expand_model per member ->
// normalize_rows -> aggregate -> select_next. `dists` must line up with
// `profiles` and `backends` index-by-index. The StepRecord carries the union
// size, cell counts, per-criterion provenance counts, and the wall time of
// the kernel work itself (backend step() latency is the caller's).
std::pair<TokenText, StepRecord> ensemble_step(
    const std::vector<StepDistribution>& dists,
    const std::vector<ModelProfile>& profiles,
    const std::vector<std::shared_ptr<Backend>>& backends,
    const GenerationContext& ctx, const EnsembleConfig& cfg,
    std::mt19937_64* rng = nullptr);

}  // namespace unite
