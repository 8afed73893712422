// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Self-describing checkpoint container and JSON forms of every config.
//
// Layout (little-endian):
//   8 bytes   magic "VCLONECK"
//   uint32    format version
//   uint64    header length in bytes
//   header    UTF-8 JSON: kind, step, metadata, tensor table
//   payload   float64 tensors, row-major, in tensor-table order

#pragma once

#include "vclone/acoustic.hpp"
#include "vclone/mel.hpp"
#include "vclone/nn.hpp"
#include "vclone/pitch.hpp"
#include "vclone/vocoder.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace vclone {

namespace mel {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MelConfig, sample_rate_hz, n_fft, hop_length,
                                                win_length, n_mels, fmin_hz, fmax_hz, center)
}
namespace pitch {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(YinConfig, sample_rate_hz, frame_length,
                                                hop_length, fmin_hz, fmax_hz, threshold)
}
namespace acoustic {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, pitch, duration, align)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AcousticConfig, vocab_size, embed_dim,
                                                encoder_layers, decoder_layers, heads,
                                                conv_filter, conv_kernel, predictor_filter,
                                                predictor_kernel, n_mels, align_width,
                                                prior_strength, speaker_init_std, weights,
                                                n_speakers)
}
namespace vocoder {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VocoderConfig, n_mels, upsample_factors,
                                                initial_channels, resblock_kernels,
                                                resblock_dilations, mpd_periods, msd_scales,
                                                disc_channels, lambda_fm, lambda_mel,
                                                segment_frames)
}
namespace nn {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, lr, beta1, beta2, eps, clip_norm)
}

namespace checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Container {
  std::string kind;  // "acoustic" or "vocoder"
  std::int64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, ag::Matrix> tensors;
};

void save(const std::filesystem::path& path, const Container& c);
Container load(const std::filesystem::path& path);

// Copies parameter values into the container under `prefix`.
void put_params(Container& c, const std::string& prefix, const nn::ParamStore& store);
// Restores every parameter of `store` from `prefix`; missing tensors throw.
void get_params(const Container& c, const std::string& prefix, nn::ParamStore& store);

void put_optimizer(Container& c, const std::string& prefix, const nn::Adam& adam);
nn::Adam get_optimizer(const Container& c, const std::string& prefix);

}  // namespace checkpoint
}  // namespace vclone
