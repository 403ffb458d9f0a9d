#include "refgame/profile.hpp"

#include "refgame/error.hpp"

namespace refgame {

Profile Profile::desk() { return Profile{}; }

Profile Profile::paper() {
  Profile p;
  p.name = "paper";
  p.embed_dim = 512;
  p.speaker_hidden = 2048;
  p.listener_hidden = 1024;
  p.head_hidden = 1024;
  p.speaker_batch = 64;
  p.speaker_steps = 40000;
  p.speaker_stage2_steps = 40000;
  p.speaker_stage2_batch = 32;
  p.speaker_stage2_lr = 5e-6;
  p.listener_batch = 32;
  p.listener_steps = 2000;
  p.listener_random_negative_steps = 4000;
  p.listener_stage2_lr = 1e-5;
  p.listener_stage2_steps = 7000;
  p.dropout_keep = 0.7;
  p.batch_norm = true;
  return p;
}

Profile Profile::by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw Error(ErrorCode::ConfigError, "unknown profile " + name);
}

}  // namespace refgame
