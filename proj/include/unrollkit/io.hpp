#pragma once

#include "cascade.hpp"
#include "phantom.hpp"

#include <filesystem>
#include <optional>

namespace unrollkit {

namespace fs = std::filesystem;

/* Two-file complex format: `<stem>.hdr` holds "# Dimensions" and the extents
 * fastest-first, padded with 1 to five entries; `<stem>.cfl` is raw interleaved
 * little-endian float32 (re, im). A row-major [a, b, c] tensor is therefore
 * declared as "c b a 1 1".
 */
void write_cfl(fs::path const &stem, ComplexTensor const &t);

// Reads a tensor. With `rank`, trailing unit dims are dropped down to that rank;
// otherwise all trailing unit dims beyond the first are dropped.
ComplexTensor read_cfl(fs::path const &stem, std::optional<Index> rank = std::nullopt);

// Real tensors are stored in the real part.
void write_real_cfl(fs::path const &stem, Tensor<float> const &t);
Tensor<float> read_real_cfl(fs::path const &stem, std::optional<Index> rank = std::nullopt);

// Grid as a 0/1 [nx, ny] CFL plus a `<stem>.meta` key=value sidecar.
void write_mask(fs::path const &stem, SamplingMask const &mask);
SamplingMask read_mask(fs::path const &stem);

void write_sample(fs::path const &dir, ReconSample const &s);
ReconSample read_sample(fs::path const &dir);

// data/<kind>/<rate>/<contrast>/<seed>
fs::path sample_dir(fs::path const &root, MaskKind kind, Index rate, Index contrast, std::uint64_t seed);
std::vector<fs::path> find_samples(fs::path const &root);

std::map<std::string, std::string> read_key_values(fs::path const &file);
void write_key_values(fs::path const &file, std::map<std::string, std::string> const &kv);

std::string config_to_text(CascadeConfig const &c);
CascadeConfig config_from_text(std::map<std::string, std::string> const &kv);

/* Checkpoint directory: config.txt, manifest.txt (stage name offset shape...),
 * params.{hdr,cfl} with every tensor concatenated, and an optional loss.csv.
 */
void save_model(fs::path const &dir, Model const &model, std::vector<double> const &loss_history = {});
Model load_model(fs::path const &dir);

} // namespace unrollkit
