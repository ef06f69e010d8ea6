#include "fetalseg/volume.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace fseg {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "background", "CB", "BGT", "vCSF", "WM", "BS", "cGM", "eCSF"};

void check_dims(int w, int h, int d) {
  if (w <= 0 || h <= 0 || d <= 0) throw InvariantError("volume dimensions must be positive");
}

void check_spacing(const Spacing& s) {
  if (!(s.x > 0.0) || !(s.y > 0.0) || !(s.z > 0.0))
    throw InvariantError("voxel spacing must be strictly positive");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
void write_le(std::ostream& out, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    std::vector<char> buf(values.size_bytes());
    std::memcpy(buf.data(), values.data(), buf.size());
    for (std::size_t i = 0; i < buf.size(); i += sizeof(T)) std::reverse(buf.begin() + i, buf.begin() + i + sizeof(T));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

template <typename T>
void read_le(std::span<T> dst, const char* src) {
  std::memcpy(dst.data(), src, dst.size_bytes());
  if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
    auto* bytes = reinterpret_cast<char*>(dst.data());
    for (std::size_t i = 0; i < dst.size_bytes(); i += sizeof(T))
      std::reverse(bytes + i, bytes + i + sizeof(T));
  }
}

template <typename T>
void save_impl(const Volume<T>& v, std::string_view kind, const std::filesystem::path& path) {
  std::string header = mvol_header(kind, v.width(), v.height(), v.depth(), v.spacing());
  if (header.size() > kMvolHeaderSize - 1)
    throw FormatError("mvol header does not fit in 64 bytes: " + header);
  header.resize(kMvolHeaderSize - 1, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_le<T>(out, v.data());
  if (!out) throw Error("write failed: " + path.string());
}

struct Header {
  std::string kind;
  int w = 0, h = 0, d = 0;
  Spacing spacing;
};

Header parse_header(std::string_view line) {
  std::istringstream ss{std::string(line)};
  std::string magic;
  ss >> magic;
  if (magic != "MVOL1") throw FormatError("not an mvol file (bad magic)");
  Header hdr;
  bool seen[7] = {};
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header token: " + tok);
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    auto parse_int = [&](int& dst) {
      auto r = std::from_chars(val.data(), val.data() + val.size(), dst);
      if (r.ec != std::errc{} || r.ptr != val.data() + val.size()) throw FormatError("bad integer in header: " + tok);
    };
    auto parse_dbl = [&](double& dst) {
      auto r = std::from_chars(val.data(), val.data() + val.size(), dst);
      if (r.ec != std::errc{} || r.ptr != val.data() + val.size()) throw FormatError("bad number in header: " + tok);
    };
    if (key == "kind") { hdr.kind = val; seen[0] = true; }
    else if (key == "w") { parse_int(hdr.w); seen[1] = true; }
    else if (key == "h") { parse_int(hdr.h); seen[2] = true; }
    else if (key == "d") { parse_int(hdr.d); seen[3] = true; }
    else if (key == "sx") { parse_dbl(hdr.spacing.x); seen[4] = true; }
    else if (key == "sy") { parse_dbl(hdr.spacing.y); seen[5] = true; }
    else if (key == "sz") { parse_dbl(hdr.spacing.z); seen[6] = true; }
    else throw FormatError("unknown header key: " + key);
  }
  for (bool s : seen)
    if (!s) throw FormatError("incomplete mvol header");
  if (hdr.w <= 0 || hdr.h <= 0 || hdr.d <= 0) throw FormatError("non-positive dimensions in header");
  if (!(hdr.spacing.x > 0 && hdr.spacing.y > 0 && hdr.spacing.z > 0))
    throw FormatError("non-positive spacing in header");
  return hdr;
}

}  // namespace

std::string_view class_name(TissueClass c) noexcept { return kClassNames[static_cast<int>(c)]; }

std::string_view class_name(int code) {
  if (!is_valid_code(code)) throw InvariantError("tissue class code out of range: " + std::to_string(code));
  return kClassNames[code];
}

std::optional<TissueClass> class_from_name(std::string_view name) noexcept {
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return static_cast<TissueClass>(i);
  return std::nullopt;
}

// ---- Slice / Volume ------------------------------------------------------------

template <typename T>
Slice<T>::Slice(int width, int height, double sx, double sy, T fill)
    : width_(width), height_(height), sx_(sx), sy_(sy) {
  if (width <= 0 || height <= 0) throw InvariantError("slice dimensions must be positive");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

template <typename T>
Slice<T>::Slice(int width, int height, double sx, double sy, std::vector<T> data)
    : width_(width), height_(height), sx_(sx), sy_(sy), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw InvariantError("slice dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw InvariantError("slice data length does not match width*height");
}

template <typename T>
Volume<T>::Volume(int width, int height, int depth, Spacing spacing, T fill)
    : width_(width), height_(height), depth_(depth), spacing_(spacing) {
  check_dims(width, height, depth);
  check_spacing(spacing);
  data_.assign(static_cast<std::size_t>(width) * height * depth, fill);
}

template <typename T>
Volume<T>::Volume(int width, int height, int depth, Spacing spacing, std::vector<T> data)
    : width_(width), height_(height), depth_(depth), spacing_(spacing), data_(std::move(data)) {
  check_dims(width, height, depth);
  check_spacing(spacing);
  if (data_.size() != static_cast<std::size_t>(width) * height * depth)
    throw InvariantError("volume data length does not match width*height*depth");
}

template <typename T>
std::span<const T> Volume<T>::slice_view(int z) const {
  if (z < 0 || z >= depth_) throw std::out_of_range("slice index out of range");
  return std::span<const T>(data_).subspan(static_cast<std::size_t>(z) * slice_size(), slice_size());
}

template <typename T>
std::span<T> Volume<T>::slice_view(int z) {
  if (z < 0 || z >= depth_) throw std::out_of_range("slice index out of range");
  return std::span<T>(data_).subspan(static_cast<std::size_t>(z) * slice_size(), slice_size());
}

template class Slice<float>;
template class Slice<std::uint8_t>;
template class Volume<float>;
template class Volume<std::uint8_t>;

void validate_labels(std::span<const std::uint8_t> codes) {
  for (auto c : codes)
    if (!is_valid_code(c)) throw InvariantError("label code out of range: " + std::to_string(c));
}

template <typename T>
Slice<T> get_slice(const Volume<T>& volume, int index) {
  auto view = volume.slice_view(index);
  return Slice<T>(volume.width(), volume.height(), volume.spacing().x, volume.spacing().y,
                  std::vector<T>(view.begin(), view.end()));
}

template <typename T>
void put_slice(Volume<T>& volume, int index, const Slice<T>& slice) {
  if (slice.width() != volume.width() || slice.height() != volume.height())
    throw ShapeError("slice geometry does not match volume");
  auto dst = volume.slice_view(index);
  std::copy(slice.data().begin(), slice.data().end(), dst.begin());
}

template Slice<float> get_slice(const Volume<float>&, int);
template Slice<std::uint8_t> get_slice(const Volume<std::uint8_t>&, int);
template void put_slice(Volume<float>&, int, const Slice<float>&);
template void put_slice(Volume<std::uint8_t>&, int, const Slice<std::uint8_t>&);

Slice2D normalize_slice(const Slice2D& slice) {
  Slice2D out = slice;
  if (slice.empty()) return out;
  auto [lo_it, hi_it] = std::minmax_element(slice.data().begin(), slice.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  auto& v = out.values();
  if (!(hi > lo)) {
    std::fill(v.begin(), v.end(), 0.0f);
    return out;
  }
  const double scale = static_cast<double>(kNormalizedMax) / (hi - lo);
  for (auto& x : v) x = static_cast<float>((x - lo) * scale);
  return out;
}

// ---- I/O -------------------------------------------------------------------------

std::string mvol_header(std::string_view kind, int w, int h, int d, const Spacing& s) {
  std::string out = "MVOL1 kind=";
  out += kind;
  out += " w=" + std::to_string(w) + " h=" + std::to_string(h) + " d=" + std::to_string(d);
  out += " sx=" + format_double(s.x) + " sy=" + format_double(s.y) + " sz=" + format_double(s.z);
  return out;
}

void save_volume(const IntensityVolume& volume, const std::filesystem::path& path) {
  save_impl(volume, "f32", path);
}

void save_volume(const LabelVolume& volume, const std::filesystem::path& path) {
  validate_labels(volume.data());
  save_impl(volume, "u8", path);
}

AnyVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMvolHeaderSize || bytes[kMvolHeaderSize - 1] != '\n')
    throw FormatError("truncated or malformed mvol header: " + path.string());
  Header hdr = parse_header(std::string_view(bytes).substr(0, kMvolHeaderSize - 1));

  const std::size_t count = static_cast<std::size_t>(hdr.w) * hdr.h * hdr.d;
  const std::size_t payload = bytes.size() - kMvolHeaderSize;
  const char* src = bytes.data() + kMvolHeaderSize;
  if (hdr.kind == "f32") {
    if (payload != count * sizeof(float))
      throw FormatError("payload size does not match header dimensions: " + path.string());
    std::vector<float> data(count);
    read_le<float>(data, src);
    return IntensityVolume(hdr.w, hdr.h, hdr.d, hdr.spacing, std::move(data));
  }
  if (hdr.kind == "u8") {
    if (payload != count) throw FormatError("payload size does not match header dimensions: " + path.string());
    std::vector<std::uint8_t> data(count);
    read_le<std::uint8_t>(data, src);
    validate_labels(data);
    return LabelVolume(hdr.w, hdr.h, hdr.d, hdr.spacing, std::move(data));
  }
  throw FormatError("unknown payload kind: " + hdr.kind);
}

IntensityVolume load_intensity(const std::filesystem::path& path) {
  auto v = load_volume(path);
  if (auto* p = std::get_if<IntensityVolume>(&v)) return std::move(*p);
  throw FormatError("expected an f32 volume: " + path.string());
}

LabelVolume load_labels(const std::filesystem::path& path) {
  auto v = load_volume(path);
  if (auto* p = std::get_if<LabelVolume>(&v)) return std::move(*p);
  throw FormatError("expected a u8 label volume: " + path.string());
}

// ---- previews ----------------------------------------------------------------------

const std::array<std::array<std::uint8_t, 3>, kNumClasses>& label_palette() noexcept {
  static constexpr std::array<std::array<std::uint8_t, 3>, kNumClasses> palette = {{
      {0, 0, 0},        // background
      {230, 159, 0},    // CB
      {86, 180, 233},   // BGT
      {0, 114, 178},    // vCSF
      {240, 228, 66},   // WM
      {204, 121, 167},  // BS
      {0, 158, 115},    // cGM
      {213, 94, 0},     // eCSF
  }};
  return palette;
}

void write_pgm(const Slice2D& slice, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "P5\n" << slice.width() << ' ' << slice.height() << "\n255\n";
  float lo = 0, hi = 0;
  if (!slice.empty()) {
    auto [a, b] = std::minmax_element(slice.data().begin(), slice.data().end());
    lo = *a;
    hi = *b;
  }
  std::vector<char> px(slice.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    double t = hi > lo ? (slice.data()[i] - lo) / (hi - lo) : 0.0;
    px[i] = static_cast<char>(static_cast<std::uint8_t>(std::clamp(t * 255.0 + 0.5, 0.0, 255.0)));
  }
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
}

void write_label_ppm(const LabelSlice& slice, const std::filesystem::path& path) {
  validate_labels(slice.data());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "P6\n" << slice.width() << ' ' << slice.height() << "\n255\n";
  const auto& pal = label_palette();
  std::vector<char> px;
  px.reserve(slice.size() * 3);
  for (auto c : slice.data())
    for (auto ch : pal[c]) px.push_back(static_cast<char>(ch));
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
}

}  // namespace fseg
