#pragma once

#include <string>
#include <utility>
#include <vector>

#include "latalign/guidance.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// SHLA checkpoint: magic, u16 version, kind tag, named tensor manifest
/// (name, shape), raw little-endian f64 payload in manifest order, trailing
/// FNV-1a 64 checksum of the payload bytes. Round-trips bit-exactly; loads
/// verify the checksum and the kind tag.
void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path,
                                                            const std::string& expected_kind);

// Model-level wrappers. Dimensions ride along as small meta tensors so a
// load reconstructs the full object.
void save_denoiser(const DenoiserModel& model, const std::string& path);
DenoiserModel load_denoiser(const std::string& path);

void save_binder(const BinderModel& binder, const std::string& path);
BinderModel load_binder(const std::string& path);

void save_prompt_table(const PromptTable& table, const std::string& path);
PromptTable load_prompt_table(const std::string& path);

void save_autoencoder(const Autoencoder& ae, const std::string& path);
Autoencoder load_autoencoder(const std::string& path);

}  // namespace latalign
