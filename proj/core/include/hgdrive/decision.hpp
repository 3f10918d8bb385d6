#pragma once

#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/nn.hpp"
#include "hgdrive/params.hpp"
#include "hgdrive/tensor.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// Slot layout of the decoder's query sequence: past-trajectory slots, one
// slot per density-map cell, one per gaze-grid cell, one traffic slot, one
// intention slot. Offsets index rows of the decoded output.
struct QuerySlots {
  int history = 0;
  int density = 0;
  int eye = 0;
  int history_at = 0;
  int density_at = 0;
  int eye_at = 0;
  int traffic_at = 0;
  int intention_at = 0;
  int total = 0;
};

QuerySlots query_slots(const ModelConfig& m);

// Cross-attention decoder: a fixed bank of learned queries (plus embedded
// past ego positions) attends over the encoder tokens through a stack of
// self+cross layers. Returns one decoded row per query slot.
struct DecisionTransformer {
  DecisionTransformer() = default;
  DecisionTransformer(ParameterSet& ps, const std::string& prefix, const ModelConfig& m,
                      Rng& rng);

  QuerySlots slots;
  Linear token_proj;    // enc_dim -> dec_dim
  Linear history_embed; // (x,y) -> dec_dim
  Tensor density_queries;
  Tensor eye_queries;
  Tensor traffic_query;
  Tensor intention_query;
  Tensor query_pos;  // (total, dec_dim) learned, added to the whole sequence
  std::vector<DecoderLayer> layers;
  LayerNorm final_ln;

  // tokens (token_count, enc_dim); history holds the last `slots.history` ego
  // positions in the current ego frame, oldest first. -> (total, dec_dim)
  Tensor decode(const Tensor& tokens, const std::vector<Vec2>& history) const;
};

}  // namespace hgd
