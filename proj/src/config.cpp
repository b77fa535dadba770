#include "fedccrl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fedccrl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config: key '" + key + "': cannot parse '" + value + "' as " + want);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v, "a boolean (true/false/on/off)");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, v, "a comma-separated integer list");
    out.push_back(parse_size(key, item));
  }
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

// Rows separated by ';', values by ','.
std::vector<std::vector<double>> parse_matrix(const std::string& key, const std::string& v) {
  std::vector<std::vector<double>> out;
  std::stringstream rows(v);
  std::string row;
  while (std::getline(rows, row, ';')) {
    row = trim(row);
    if (row.empty()) continue;
    std::vector<double> values;
    std::stringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      cell = trim(cell);
      if (cell.empty()) bad_value(key, v, "a ';'-separated list of ','-separated numbers");
      values.push_back(parse_f64(key, cell));
    }
    out.push_back(std::move(values));
  }
  if (out.empty()) bad_value(key, v, "a ';'-separated list of ','-separated numbers");
  return out;
}

std::string format_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_matrix(const std::vector<std::vector<double>>& m) {
  std::string out;
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (r) out += "; ";
    for (std::size_t c = 0; c < m[r].size(); ++c) {
      if (c) out += ", ";
      out += format_f64(m[r][c]);
    }
  }
  return out;
}

void apply_key(ResolvedConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
  const std::string full = section + "." + key;
  auto& fed = cfg.federation;
  auto& syn = cfg.synthetic;
  if (section == "federation") {
    if (key == "rounds") fed.rounds = parse_size(full, value);
    else if (key == "local_epochs") fed.local_epochs = parse_size(full, value);
    else if (key == "batch_size") fed.batch_size = parse_size(full, value);
    else if (key == "clients_per_domain") fed.clients_per_domain = parse_size(full, value);
    else if (key == "upload_ratio") fed.upload_ratio = parse_f64(full, value);
    else if (key == "lambda1") fed.loss.lambda1 = parse_f64(full, value);
    else if (key == "lambda2") fed.loss.lambda2 = parse_f64(full, value);
    else if (key == "tau") fed.loss.tau = parse_f64(full, value);
    else if (key == "alpha") fed.alpha = parse_f64(full, value);
    else if (key == "beta") fed.beta = parse_f64(full, value);
    else if (key == "severity") fed.severity = static_cast<int>(parse_u64(full, value));
    else if (key == "lr") fed.lr_init = parse_f64(full, value);
    else if (key == "method") {
      try {
        fed.method = parse_method(value);
      } catch (const TensorError& e) {
        throw ConfigError("config: key '" + full + "': " + e.what());
      }
    } else if (key == "ccdt") fed.ccdt_on = parse_bool(full, value);
    else if (key == "difp") fed.difp_on = parse_bool(full, value);
    else if (key == "ra") fed.ra_on = parse_bool(full, value);
    else if (key == "js") fed.js_on = parse_bool(full, value);
    else if (key == "ccdt_literal") fed.ccdt_literal_variant = parse_bool(full, value);
    else if (key == "seed") fed.global_seed = parse_u64(full, value);
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "model") {
    if (key == "hidden_sizes") fed.model.hidden_sizes = parse_size_list(full, value);
    else if (key == "representation_dim") fed.model.representation_dim = parse_size(full, value);
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "synthetic") {
    if (key == "num_domains") syn.num_domains = parse_size(full, value);
    else if (key == "num_classes") syn.num_classes = parse_size(full, value);
    else if (key == "samples_per_domain") syn.samples_per_domain = parse_size(full, value);
    else if (key == "channels") syn.channels = parse_size(full, value);
    else if (key == "height") syn.height = parse_size(full, value);
    else if (key == "width") syn.width = parse_size(full, value);
    else if (key == "class_signal_strength") syn.class_signal_strength = parse_f64(full, value);
    else if (key == "noise_std") syn.noise_std = parse_f64(full, value);
    else if (key == "domain_means") syn.domain_channel_means = parse_matrix(full, value);
    else if (key == "domain_stds") syn.domain_channel_stds = parse_matrix(full, value);
    else if (key == "seed") syn.seed = parse_u64(full, value);
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "data") {
    if (key == "source") {
      if (value == "synthetic") cfg.source = DataSource::kSynthetic;
      else if (value == "folder") cfg.source = DataSource::kFolder;
      else bad_value(full, value, "'synthetic' or 'folder'");
    } else if (key == "folder") {
      cfg.folder = value;
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else {
    throw ConfigError("config: unknown section '" + section + "'");
  }
}

void validate_resolved(ResolvedConfig& cfg) {
  try {
    cfg.synthetic.validate();
    const std::size_t domains = cfg.source == DataSource::kSynthetic ? cfg.synthetic.num_domains : 2;
    cfg.federation.validate(domains);
    cfg.federation.model.validate();
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.source == DataSource::kFolder && cfg.folder.empty()) {
    throw ConfigError("config: data.source=folder requires data.folder");
  }
  // Resolve the default domain tables so the echoed config is self-contained.
  if (cfg.synthetic.domain_channel_means.empty()) {
    cfg.synthetic.domain_channel_means =
        default_domain_means(cfg.synthetic.num_domains, cfg.synthetic.channels);
  }
  if (cfg.synthetic.domain_channel_stds.empty()) {
    cfg.synthetic.domain_channel_stds =
        default_domain_stds(cfg.synthetic.num_domains, cfg.synthetic.channels);
  }
}

}  // namespace

ResolvedConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  // Collect (section.key -> value), last occurrence wins, then apply in a
  // stable order so diagnostics are deterministic.
  std::map<std::string, std::pair<std::string, std::string>> pairs;  // full -> (section, value)
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config: line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    }
    if (key.empty()) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": empty key");
    }
    pairs[section + "." + key] = {section, value};
  }

  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    const auto dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + ov + "' must have the form section.key=value");
    }
    const std::string section_name = trim(ov.substr(0, dot));
    const std::string key = trim(ov.substr(dot + 1, eq - dot - 1));
    const std::string value = trim(ov.substr(eq + 1));
    pairs[section_name + "." + key] = {section_name, value};
  }

  ResolvedConfig cfg;
  for (const auto& [full, sv] : pairs) {
    apply_key(cfg, sv.first, full.substr(sv.first.size() + 1), sv.second);
  }
  validate_resolved(cfg);
  return cfg;
}

ResolvedConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config_text("", overrides);
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

std::string ResolvedConfig::canonical_text() const {
  std::ostringstream out;
  const auto& fed = federation;
  const auto& syn = synthetic;
  out << "[data]\n";
  out << "folder = " << folder << "\n";
  out << "source = " << (source == DataSource::kSynthetic ? "synthetic" : "folder") << "\n";
  out << "\n[federation]\n";
  out << "alpha = " << format_f64(fed.alpha) << "\n";
  out << "batch_size = " << fed.batch_size << "\n";
  out << "beta = " << format_f64(fed.beta) << "\n";
  out << "ccdt = " << (fed.ccdt_on ? "true" : "false") << "\n";
  out << "ccdt_literal = " << (fed.ccdt_literal_variant ? "true" : "false") << "\n";
  out << "clients_per_domain = " << fed.clients_per_domain << "\n";
  out << "difp = " << (fed.difp_on ? "true" : "false") << "\n";
  out << "js = " << (fed.js_on ? "true" : "false") << "\n";
  out << "lambda1 = " << format_f64(fed.loss.lambda1) << "\n";
  out << "lambda2 = " << format_f64(fed.loss.lambda2) << "\n";
  out << "local_epochs = " << fed.local_epochs << "\n";
  out << "lr = " << format_f64(fed.lr_init) << "\n";
  out << "method = " << method_name(fed.method) << "\n";
  out << "ra = " << (fed.ra_on ? "true" : "false") << "\n";
  out << "rounds = " << fed.rounds << "\n";
  out << "seed = " << fed.global_seed << "\n";
  out << "severity = " << fed.severity << "\n";
  out << "tau = " << format_f64(fed.loss.tau) << "\n";
  out << "upload_ratio = " << format_f64(fed.upload_ratio) << "\n";
  out << "\n[model]\n";
  out << "hidden_sizes = ";
  for (std::size_t i = 0; i < fed.model.hidden_sizes.size(); ++i) {
    if (i) out << ", ";
    out << fed.model.hidden_sizes[i];
  }
  out << "\n";
  out << "representation_dim = " << fed.model.representation_dim << "\n";
  out << "\n[synthetic]\n";
  out << "channels = " << syn.channels << "\n";
  out << "class_signal_strength = " << format_f64(syn.class_signal_strength) << "\n";
  out << "domain_means = " << format_matrix(syn.domain_channel_means) << "\n";
  out << "domain_stds = " << format_matrix(syn.domain_channel_stds) << "\n";
  out << "height = " << syn.height << "\n";
  out << "noise_std = " << format_f64(syn.noise_std) << "\n";
  out << "num_classes = " << syn.num_classes << "\n";
  out << "num_domains = " << syn.num_domains << "\n";
  out << "samples_per_domain = " << syn.samples_per_domain << "\n";
  out << "seed = " << syn.seed << "\n";
  out << "width = " << syn.width << "\n";
  return out.str();
}

std::vector<DomainDataset> ResolvedConfig::load_data() const {
  if (source == DataSource::kFolder) {
    return load_domains_folder(folder, synthetic.channels, synthetic.height, synthetic.width);
  }
  return generate_synthetic(synthetic);
}

}  // namespace fedccrl
