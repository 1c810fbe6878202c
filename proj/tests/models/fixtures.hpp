// SPDX-License-Identifier: Apache-2.0
// Small models and corpora for the model tests.
#pragma once

#include "layoutgen/corpus.hpp"
#include "layoutgen/models/decoder.hpp"

namespace layoutgen::testing {

inline DecoderConfig tiny_decoder_config(bool wireframe = true) {
  DecoderConfig c;
  c.profile = "custom";
  c.num_layers = 1;
  c.num_heads = 2;
  c.model_dim = 32;
  c.image_size = 32;
  c.image_channels = {4, 8};
  c.use_wireframe = wireframe;
  c.batch = 8;
  c.steps = 0;
  c.warmup = 10;
  c.lr = 1e-3;
  return c;
}

inline DatasetManifest small_corpus(int count, std::uint64_t seed = 7) {
  SyntheticCorpusSpec spec;
  spec.count = count;
  spec.seed = seed;
  return synth_corpus(spec);
}

}  // namespace layoutgen::testing
