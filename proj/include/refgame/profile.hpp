#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "refgame/nn/adam.hpp"

namespace refgame {

/// Model sizes and optimization schedule. "paper" mirrors the published
/// configuration (large, GPU-scale); "desk" is sized for CPU runs in minutes.
struct Profile {
  std::string name = "desk";

  long embed_dim = 64;
  long speaker_hidden = 128;
  long listener_hidden = 128;
  long head_hidden = 256;  // width of the speaker's first image layer

  std::size_t speaker_batch = 64;
  std::size_t listener_batch = 32;
  // Step budgets; when zero the matching epoch count is used instead.
  std::size_t speaker_steps = 0;
  std::size_t listener_steps = 0;
  std::size_t listener_random_negative_steps = 0;
  std::size_t speaker_epochs = 3;
  std::size_t listener_epochs = 2;

  // Optional second phase at a lower learning rate (zero steps disables it).
  double speaker_stage2_lr = 5e-6;
  std::size_t speaker_stage2_steps = 0;
  std::size_t speaker_stage2_batch = 32;
  double listener_stage2_lr = 1e-5;
  std::size_t listener_stage2_steps = 0;

  nn::AdamConfig adam{};
  double dropout_keep = 1.0;  // keep probability on the speaker's recurrent output
  bool batch_norm = false;
  std::size_t max_phrase_len = 14;

  static Profile desk();
  static Profile paper();
  /// Throws ConfigError for unknown names.
  static Profile by_name(const std::string& name);
};

}  // namespace refgame
