#include "fetalseg/nnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace fseg::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void save_checkpoint(const UNet<float>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  const auto& c = model.config();
  out << "UNET1\n"
      << "depth=" << c.depth << " base_channels=" << c.base_channels << " in_channels=" << c.in_channels
      << " out_classes=" << c.out_classes << " values=" << model.state_size() << "\n";
  for (auto buf : model.state_buffers())
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size_bytes()));
  if (!out) throw Error("write failed: " + path.string());
}

UNet<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::string magic, cfg_line;
  std::getline(in, magic);
  if (magic != "UNET1") throw FormatError("not a UNET1 checkpoint: " + path.string());
  std::getline(in, cfg_line);

  UNetConfig cfg;
  std::size_t values = 0;
  int seen = 0;
  std::istringstream ss(cfg_line);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint config: " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "depth") cfg.depth = std::stoi(val);
      else if (key == "base_channels") cfg.base_channels = std::stoi(val);
      else if (key == "in_channels") cfg.in_channels = std::stoi(val);
      else if (key == "out_classes") cfg.out_classes = std::stoi(val);
      else if (key == "values") values = std::stoull(val);
      else throw FormatError("unknown checkpoint key: " + key);
    } catch (const std::logic_error&) {
      throw FormatError("bad checkpoint value: " + tok);
    }
    ++seen;
  }
  if (seen != 5) throw FormatError("incomplete checkpoint config line");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  UNet<float> model(cfg, RandomStream(0));
  if (model.state_size() != values) throw FormatError("checkpoint value count does not match its config");
  for (auto buf : model.state_buffers()) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size_bytes()));
    if (!in) throw FormatError("truncated checkpoint payload: " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
  return model;
}

}  // namespace fseg::nn
