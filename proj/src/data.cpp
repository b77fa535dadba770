#include "fedccrl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace fedccrl {

void SyntheticConfig::validate() const {
  if (num_domains < 2) throw DataError("synthetic: need at least 2 domains");
  if (num_classes < 2) throw DataError("synthetic: need at least 2 classes");
  if (samples_per_domain == 0) throw DataError("synthetic: samples_per_domain must be positive");
  if (channels == 0 || height == 0 || width == 0) throw DataError("synthetic: invalid image dims");
  if (noise_std < 0.0) throw DataError("synthetic: noise_std must be >= 0");
  auto check_matrix = [&](const std::vector<std::vector<double>>& m, const char* what,
                          bool positive) {
    if (m.empty()) return;
    if (m.size() != num_domains) {
      throw DataError(std::string("synthetic: ") + what + " must have one row per domain");
    }
    for (const auto& row : m) {
      if (row.size() != channels) {
        throw DataError(std::string("synthetic: ") + what + " rows must have one value per channel");
      }
      if (positive) {
        for (double v : row) {
          if (!(v > 0.0)) throw DataError(std::string("synthetic: ") + what + " must be positive");
        }
      }
    }
  };
  check_matrix(domain_channel_means, "domain_channel_means", false);
  check_matrix(domain_channel_stds, "domain_channel_stds", true);
  // Domains must differ in their joint (mean, std) rows.
  if (!domain_channel_means.empty() && !domain_channel_stds.empty()) {
    for (std::size_t a = 0; a < num_domains; ++a) {
      for (std::size_t b = a + 1; b < num_domains; ++b) {
        if (domain_channel_means[a] == domain_channel_means[b] &&
            domain_channel_stds[a] == domain_channel_stds[b]) {
          throw DataError("synthetic: domains " + std::to_string(a) + " and " + std::to_string(b) +
                          " have identical channel statistics; domains must differ");
        }
      }
    }
  }
}

namespace {

// Base palettes for the built-in benchmark. Means stay mid-range so the class
// signal survives clamping; stds differ strongly so per-sample statistics are
// clearly domain-specific. Rows are recycled with a small deterministic
// offset when more domains or channels are requested.
constexpr double kMeanPalette[4][3] = {
    {0.40, 0.50, 0.60},
    {0.62, 0.44, 0.34},
    {0.50, 0.66, 0.42},
    {0.34, 0.38, 0.54},
};
constexpr double kStdPalette[4][3] = {
    {0.05, 0.07, 0.06},
    {0.18, 0.14, 0.16},
    {0.09, 0.20, 0.11},
    {0.15, 0.08, 0.21},
};

}  // namespace

std::vector<std::vector<double>> default_domain_means(std::size_t num_domains, std::size_t channels) {
  std::vector<std::vector<double>> m(num_domains, std::vector<double>(channels));
  for (std::size_t d = 0; d < num_domains; ++d) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double base = kMeanPalette[d % 4][c % 3];
      m[d][c] = base + 0.013 * static_cast<double>(d / 4) + 0.007 * static_cast<double>(c / 3);
    }
  }
  return m;
}

std::vector<std::vector<double>> default_domain_stds(std::size_t num_domains, std::size_t channels) {
  std::vector<std::vector<double>> m(num_domains, std::vector<double>(channels));
  for (std::size_t d = 0; d < num_domains; ++d) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double base = kStdPalette[d % 4][c % 3];
      m[d][c] = base + 0.003 * static_cast<double>(d / 4) + 0.002 * static_cast<double>(c / 3);
    }
  }
  return m;
}

namespace {
// Per-class brightness offset baked into the templates. Classes then differ
// both in spatial texture and in average level, so channel statistics carry
// label signal inside a single domain while staying domain-specific in scale.
constexpr double kTemplateOffsetSpread = 1.2;
}  // namespace

std::vector<std::vector<double>> class_templates(const SyntheticConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x7061747465726eULL));  // "pattern"
  const std::size_t hw = cfg.height * cfg.width;
  std::vector<std::vector<double>> templates(cfg.num_classes, std::vector<double>(hw));
  for (std::size_t y = 0; y < cfg.num_classes; ++y) {
    auto& t = templates[y];
    double mean = 0.0;
    for (auto& v : t) {
      v = rng.uniform(-1.0, 1.0);
      mean += v;
    }
    mean /= static_cast<double>(hw);
    // Offsets are symmetric around zero, so balanced domains keep their
    // configured channel means.
    const double offset =
        cfg.num_classes == 1
            ? 0.0
            : kTemplateOffsetSpread *
                  (2.0 * static_cast<double>(y) - static_cast<double>(cfg.num_classes - 1)) /
                  static_cast<double>(cfg.num_classes - 1);
    for (auto& v : t) v += offset - mean;
  }
  return templates;
}

std::vector<DomainDataset> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto means = cfg.domain_channel_means.empty()
                         ? default_domain_means(cfg.num_domains, cfg.channels)
                         : cfg.domain_channel_means;
  const auto stds = cfg.domain_channel_stds.empty()
                        ? default_domain_stds(cfg.num_domains, cfg.channels)
                        : cfg.domain_channel_stds;
  const auto templates = class_templates(cfg);
  const std::size_t hw = cfg.height * cfg.width;

  std::vector<DomainDataset> out;
  out.reserve(cfg.num_domains);
  for (std::size_t d = 0; d < cfg.num_domains; ++d) {
    Rng rng(mix_seed(cfg.seed, 0x646f6d61696eULL, d));  // "domain"
    DomainDataset ds;
    ds.domain_id = static_cast<std::uint32_t>(d);
    ds.name = "domain" + std::to_string(d);
    ds.provenance = "synthetic:seed=" + std::to_string(cfg.seed);
    ds.num_classes = cfg.num_classes;
    ds.images.reserve(cfg.samples_per_domain);
    ds.labels.reserve(cfg.samples_per_domain);
    for (std::size_t i = 0; i < cfg.samples_per_domain; ++i) {
      const std::size_t label = i % cfg.num_classes;
      std::vector<double> px(cfg.channels * hw);
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (std::size_t s = 0; s < hw; ++s) {
          const double signal = cfg.class_signal_strength * templates[label][s];
          const double v = means[d][c] + stds[d][c] * (signal + cfg.noise_std * rng.normal());
          px[c * hw + s] = std::clamp(v, 0.0, 1.0);
        }
      }
      ds.images.push_back(Tensor::from_data({cfg.channels, cfg.height, cfg.width}, std::move(px)));
      ds.labels.push_back(label);
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::pair<std::vector<DomainDataset>, DomainDataset> leave_one_domain_out(
    const std::vector<DomainDataset>& datasets, std::uint32_t target_domain_id) {
  std::vector<DomainDataset> train;
  const DomainDataset* test = nullptr;
  for (const auto& d : datasets) {
    if (d.domain_id == target_domain_id) {
      test = &d;
    } else {
      train.push_back(d);
    }
  }
  if (!test) {
    throw DataError("leave_one_domain_out: no domain with id " + std::to_string(target_domain_id));
  }
  return {std::move(train), *test};
}

std::vector<ClientShard> partition_clients(const DomainDataset& domain, std::size_t k, Rng& rng) {
  if (k == 0) throw DataError("partition_clients: K must be positive");
  if (k > domain.size()) {
    throw DataError("partition_clients: K=" + std::to_string(k) + " exceeds domain size " +
                    std::to_string(domain.size()));
  }
  std::vector<std::size_t> idx(domain.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);

  std::vector<ClientShard> shards(k);
  const std::size_t base = domain.size() / k;
  const std::size_t extra = domain.size() % k;
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t take = base + (s < extra ? 1 : 0);
    shards[s].domain_id = domain.domain_id;
    shards[s].images.reserve(take);
    shards[s].labels.reserve(take);
    for (std::size_t i = 0; i < take; ++i, ++cursor) {
      shards[s].images.push_back(domain.images[idx[cursor]]);
      shards[s].labels.push_back(domain.labels[idx[cursor]]);
    }
  }
  return shards;
}

namespace {

struct RawImage {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> px;  // [C,H,W] in [0,1]
};

RawImage read_pnm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image '" + path.string() + "'");
  auto next_token = [&]() -> std::string {
    std::string tok;
    for (;;) {
      int ch = f.get();
      if (ch == EOF) throw DataError("truncated header in '" + path.string() + "'");
      if (ch == '#') {
        while (ch != EOF && ch != '\n') ch = f.get();
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
  };
  const std::string magic = next_token();
  std::size_t channels;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw DataError("unsupported raster format '" + magic + "' in '" + path.string() + "'");
  }
  RawImage img;
  img.channels = channels;
  img.width = std::stoul(next_token());
  img.height = std::stoul(next_token());
  const unsigned long maxval = std::stoul(next_token());
  if (maxval == 0 || maxval > 255) {
    throw DataError("unsupported maxval in '" + path.string() + "'");
  }
  const std::size_t count = img.width * img.height * channels;
  std::vector<std::uint8_t> raw(count);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(f.gcount()) != count) {
    throw DataError("truncated pixel data in '" + path.string() + "'");
  }
  // Interleaved rows -> planar [C,H,W].
  img.px.resize(count);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        img.px[(c * img.height + y) * img.width + x] =
            scale * raw[(y * img.width + x) * channels + c];
      }
    }
  }
  return img;
}

// Nearest-neighbor resize + channel adaptation (grey->replicated, rgb->mean).
std::vector<double> adapt_image(const RawImage& img, std::size_t channels, std::size_t height,
                                std::size_t width, const fs::path& path) {
  std::vector<double> out(channels * height * width);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = y * img.height / height;
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t sx = x * img.width / width;
        double v;
        if (img.channels == channels) {
          v = img.px[(c * img.height + sy) * img.width + sx];
        } else if (img.channels == 1) {
          v = img.px[sy * img.width + sx];
        } else if (channels == 1) {
          v = 0.0;
          for (std::size_t sc = 0; sc < img.channels; ++sc) {
            v += img.px[(sc * img.height + sy) * img.width + sx];
          }
          v /= static_cast<double>(img.channels);
        } else {
          throw DataError("channel mismatch for '" + path.string() + "'");
        }
        out[(c * height + y) * width + x] = v;
      }
    }
  }
  return out;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs_only) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs_only ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DomainDataset load_image_folder(const std::string& path, std::size_t channels, std::size_t height,
                                std::size_t width) {
  const fs::path root(path);
  if (!fs::is_directory(root)) throw DataError("'" + path + "' is not a directory");
  const auto class_dirs = sorted_entries(root, true);
  if (class_dirs.empty()) throw DataError("no class directories under '" + path + "'");

  DomainDataset ds;
  ds.name = root.filename().string();
  ds.provenance = root.string();
  ds.num_classes = class_dirs.size();
  for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
    const auto files = sorted_entries(class_dirs[cls], false);
    for (const auto& file : files) {
      const RawImage raw = read_pnm(file);
      ds.images.push_back(
          Tensor::from_data({channels, height, width}, adapt_image(raw, channels, height, width, file)));
      ds.labels.push_back(cls);
    }
  }
  if (ds.images.empty()) throw DataError("no images under '" + path + "'");
  return ds;
}

std::vector<DomainDataset> load_domains_folder(const std::string& root, std::size_t channels,
                                               std::size_t height, std::size_t width) {
  const fs::path r(root);
  if (!fs::is_directory(r)) throw DataError("'" + root + "' is not a directory");
  const auto domain_dirs = sorted_entries(r, true);
  if (domain_dirs.empty()) throw DataError("no domain directories under '" + root + "'");
  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < domain_dirs.size(); ++d) {
    DomainDataset ds = load_image_folder(domain_dirs[d].string(), channels, height, width);
    ds.domain_id = static_cast<std::uint32_t>(d);
    out.push_back(std::move(ds));
  }
  const std::size_t classes = out[0].num_classes;
  for (const auto& ds : out) {
    if (ds.num_classes != classes) {
      throw DataError("domain '" + ds.name + "' has a different class count");
    }
  }
  return out;
}

void save_domains_folder(const std::vector<DomainDataset>& datasets, const std::string& root) {
  for (const auto& ds : datasets) {
    if (ds.images.empty()) continue;
    const auto& shape = ds.images[0].shape();
    const std::size_t channels = shape[0], height = shape[1], width = shape[2];
    if (channels != 1 && channels != 3) {
      throw DataError("save_domains_folder: only 1- or 3-channel images can be written");
    }
    std::vector<std::size_t> per_class_counter(ds.num_classes, 0);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      const std::size_t cls = ds.labels[i];
      const fs::path dir = fs::path(root) / ds.name / ("class" + std::to_string(cls));
      fs::create_directories(dir);
      std::ostringstream name;
      name.width(4);
      name.fill('0');
      name << per_class_counter[cls]++;
      const fs::path file = dir / (name.str() + (channels == 3 ? ".ppm" : ".pgm"));
      std::ofstream f(file, std::ios::binary);
      if (!f) throw DataError("cannot write '" + file.string() + "'");
      f << (channels == 3 ? "P6" : "P5") << "\n" << width << " " << height << "\n255\n";
      const auto px = ds.images[i].data();
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double v = std::clamp(px[(c * height + y) * width + x], 0.0, 1.0);
            f.put(static_cast<char>(std::lround(v * 255.0)));
          }
        }
      }
    }
  }
}

}  // namespace fedccrl
