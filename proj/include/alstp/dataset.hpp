#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "alstp/corpus.hpp"
#include "alstp/model.hpp"
#include "alstp/pvdm.hpp"

namespace alstp {

// One user's full chronological history with split boundaries (indices into
// `history`): train = [0, train_end), validation = valid, test = test.
struct UserSequence {
  std::uint32_t user = 0;
  model::History history;
  std::size_t train_end = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

// What the trainer and evaluator consume: raw vectors per query/product row
// and per-user histories.
struct Dataset {
  model::InputTable<float> inputs;
  std::vector<UserSequence> users;

  std::size_t num_products() const { return inputs.num_products(); }
};

// Embedding -> model input: the vector scaled to unit length. Throws on a zero vector.
std::vector<float> model_input(std::span<const float> raw);

// Product rows follow corpus product order, query rows corpus query ids.
// Vectors are scaled to unit length: PV-DM norms grow with document length
// (long review histories vs. four-word queries), which is not a signal the
// shared projection should have to undo.
Dataset make_dataset(const corpus::Corpus& corpus, const embed::EmbeddingTable& table);

// PV-DM documents for a corpus: products (training reviews; a product without
// any falls back to its query text), then queries.
std::vector<embed::Document> corpus_documents(const corpus::Corpus& corpus, const embed::Vocabulary& vocab);

embed::Vocabulary corpus_vocabulary(const corpus::Corpus& corpus);

}  // namespace alstp
