#pragma once

#include <filesystem>

#include "fetalseg/nnet/unet.hpp"

namespace fseg::nn {

// Checkpoint layout:
//   "UNET1\n"
//   "depth=<d> base_channels=<c> in_channels=<i> out_classes=<k> values=<n>\n"
//   n little-endian float32 values, UNet::state_buffers() order.

void save_checkpoint(const UNet<float>& model, const std::filesystem::path& path);
UNet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fseg::nn
