#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedccrl/rng.hpp"
#include "fedccrl/tensor.hpp"

namespace fedccrl {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labeled single-domain image collection; images are [C,H,W] in [0,1].
struct DomainDataset {
  std::uint32_t domain_id = 0;
  std::string name;
  std::string provenance;  // synthetic config tag or source folder path
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
};

/// Disjoint single-domain partition owned by one client.
struct ClientShard {
  std::uint32_t client_id = 0;
  std::uint32_t domain_id = 0;
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
};

/// Synthetic multi-domain benchmark: class identity is a fixed spatial
/// template shared by all domains (the invariant signal); each domain applies
/// its own per-channel affine statistics (the domain-specific signal).
struct SyntheticConfig {
  std::size_t num_domains = 4;
  std::size_t num_classes = 5;
  std::size_t samples_per_domain = 200;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double class_signal_strength = 0.5;
  double noise_std = 0.45;
  // M x C matrices; empty selects the built-in benchmark tables.
  std::vector<std::vector<double>> domain_channel_means;
  std::vector<std::vector<double>> domain_channel_stds;
  std::uint64_t seed = 7;

  void validate() const;
};

std::vector<std::vector<double>> default_domain_means(std::size_t num_domains, std::size_t channels);
std::vector<std::vector<double>> default_domain_stds(std::size_t num_domains, std::size_t channels);

/// Pure function of the config: same config, same datasets.
std::vector<DomainDataset> generate_synthetic(const SyntheticConfig& cfg);

/// The class templates used by generate_synthetic (each centered to zero
/// spatial mean, one [H*W] pattern per class).
std::vector<std::vector<double>> class_templates(const SyntheticConfig& cfg);

std::pair<std::vector<DomainDataset>, DomainDataset> leave_one_domain_out(
    const std::vector<DomainDataset>& datasets, std::uint32_t target_domain_id);

/// K disjoint shards covering the domain, sizes differing by at most one,
/// assignment shuffled by rng. client_id is left 0 for the caller to assign.
std::vector<ClientShard> partition_clients(const DomainDataset& domain, std::size_t k, Rng& rng);

/// Loads one domain from `<path>/<class>/<file>` where files are binary PPM
/// (P6) or PGM (P5). Images are nearest-neighbor resized to (C,H,W) and
/// scaled to [0,1]. Class indices follow the sorted class directory names.
DomainDataset load_image_folder(const std::string& path, std::size_t channels, std::size_t height,
                                std::size_t width);

/// Loads `<root>/<domain>/<class>/<file>`; domain ids follow sorted names.
std::vector<DomainDataset> load_domains_folder(const std::string& root, std::size_t channels,
                                               std::size_t height, std::size_t width);

/// Writes `<root>/<domain>/<class>/NNNN.ppm|pgm` (the gen-data verb).
void save_domains_folder(const std::vector<DomainDataset>& datasets, const std::string& root);

}  // namespace fedccrl
