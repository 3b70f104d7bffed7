#pragma once

#include <filesystem>
#include <iosfwd>

#include "gazestab/model.hpp"

namespace gazestab {

/// Trained model state plus a little bookkeeping from the run that made it.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::size_t epoch = 0;  // epoch of the best validation loss
  double val_loss = 0.0;
};

/// Binary layout: magic "TGZR1", uint32 little-endian header length, a JSON
/// header {config, epoch, val_loss, tensors: [{name, shape, offset, count}]},
/// then the tensors as little-endian float32, offsets counted in bytes from
/// the end of the header.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gazestab
