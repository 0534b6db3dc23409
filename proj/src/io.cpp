/* Copyright 2026 The dsir Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "dsir/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dsir {

static_assert(std::endian::native == std::endian::little,
              "container serialisation assumes a little-endian host");

std::string value_kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::intensity: return "intensity";
    case ValueKind::label: return "label";
    case ValueKind::displacement: return "displacement";
    case ValueKind::dsir: return "dsir";
  }
  return "?";
}

ValueKind value_kind_from_string(const std::string& name) {
  if (name == "intensity") return ValueKind::intensity;
  if (name == "label") return ValueKind::label;
  if (name == "displacement") return ValueKind::displacement;
  if (name == "dsir") return ValueKind::dsir;
  throw std::runtime_error("unknown value kind: " + name);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void validate(const Container& c) {
  if (!c.dims.positive()) throw std::runtime_error("container: non-positive dims");
  if (!c.spacing.positive()) throw std::runtime_error("container: non-positive spacing");
  if (c.channels < 1) throw std::runtime_error("container: channels must be >= 1");
  if (static_cast<std::int64_t>(c.data.size()) != c.dims.voxels() * c.channels)
    throw std::runtime_error("container: payload length does not match dims");
}

// --- native .vol + JSON sidecar ------------------------------------------------

void write_native(const Container& c, const std::string& path) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    std::vector<float> buf(c.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(c.data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(4 * buf.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
  }
  nlohmann::json j;
  j["dims"] = {c.dims.h, c.dims.w, c.dims.d};
  j["channels"] = c.channels;
  j["spacing"] = {c.spacing.sx, c.spacing.sy, c.spacing.sz};
  j["kind"] = value_kind_name(c.kind);
  std::ofstream js(path + ".json");
  if (!js) throw std::runtime_error("cannot open sidecar for writing: " + path + ".json");
  js << j.dump(2) << '\n';
}

Container read_native(const std::string& path) {
  nlohmann::json j;
  {
    std::ifstream js(path + ".json");
    if (!js) throw std::runtime_error("missing sidecar: " + path + ".json");
    js >> j;
  }
  Container c;
  c.dims = {j.at("dims")[0].get<int>(), j.at("dims")[1].get<int>(), j.at("dims")[2].get<int>()};
  c.channels = j.at("channels").get<int>();
  c.spacing = {j.at("spacing")[0].get<double>(), j.at("spacing")[1].get<double>(),
               j.at("spacing")[2].get<double>()};
  c.kind = value_kind_from_string(j.at("kind").get<std::string>());
  if (!c.dims.positive()) throw std::runtime_error("container: non-positive dims in sidecar");

  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const std::int64_t n = c.dims.voxels() * c.channels;
  std::vector<float> buf(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(4 * buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(4 * buf.size()))
    throw std::runtime_error("truncated payload: " + path);
  c.data.assign(buf.begin(), buf.end());
  validate(c);
  return c;
}

// --- NIfTI-1 subset -------------------------------------------------------------

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kNiftiUint8 = 2;
constexpr std::int16_t kNiftiInt16 = 4;
constexpr std::int16_t kNiftiFloat32 = 16;

Container read_nifti(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  NiftiHeader hdr{};
  is.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
  if (!is) throw std::runtime_error("nifti: truncated header: " + path);
  if (hdr.sizeof_hdr != 348) throw std::runtime_error("nifti: bad header size: " + path);
  if (std::memcmp(hdr.magic, "ni1", 3) == 0)
    throw std::runtime_error("nifti: two-file (hdr/img) format is not supported: " + path);
  if (std::memcmp(hdr.magic, "n+1", 3) != 0)
    throw std::runtime_error("nifti: bad magic: " + path);
  if (hdr.dim[0] < 3) throw std::runtime_error("nifti: needs 3 spatial dims: " + path);
  for (int d = 4; d <= hdr.dim[0]; ++d)
    if (hdr.dim[d] > 1)
      throw std::runtime_error("nifti: time/vector dimensions not supported: " + path);

  Container c;
  // x is the fastest axis on disk, matching our contiguous third axis
  c.dims = {hdr.dim[3], hdr.dim[2], hdr.dim[1]};
  c.spacing = {hdr.pixdim[3] > 0 ? hdr.pixdim[3] : 1.0, hdr.pixdim[2] > 0 ? hdr.pixdim[2] : 1.0,
               hdr.pixdim[1] > 0 ? hdr.pixdim[1] : 1.0};
  if (!c.dims.positive()) throw std::runtime_error("nifti: non-positive dims: " + path);

  const std::int64_t n = c.dims.voxels();
  const double slope = hdr.scl_slope == 0 ? 1.0 : hdr.scl_slope;
  const double inter = hdr.scl_inter;
  is.seekg(static_cast<std::streamoff>(hdr.vox_offset < 352 ? 352 : hdr.vox_offset));
  c.data.resize(static_cast<std::size_t>(n));

  auto read_all = [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    std::vector<T> buf(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(T) * buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T) * buf.size()))
      throw std::runtime_error("nifti: truncated payload: " + path);
    for (std::int64_t i = 0; i < n; ++i)
      c.data[static_cast<std::size_t>(i)] = static_cast<real>(buf[i]) * slope + inter;
  };
  switch (hdr.datatype) {
    case kNiftiUint8: { std::uint8_t t{}; read_all(&t); break; }
    case kNiftiInt16: { std::int16_t t{}; read_all(&t); break; }
    case kNiftiFloat32: { float t{}; read_all(&t); break; }
    default:
      throw std::runtime_error("nifti: unsupported datatype " + std::to_string(hdr.datatype) +
                               ": " + path);
  }
  c.kind = ValueKind::intensity;
  return c;
}

void write_nifti(const Container& c, const std::string& path) {
  if (c.channels != 1)
    throw std::runtime_error("nifti: only single-channel volumes are written");
  NiftiHeader hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  hdr.dim[1] = static_cast<std::int16_t>(c.dims.d);
  hdr.dim[2] = static_cast<std::int16_t>(c.dims.w);
  hdr.dim[3] = static_cast<std::int16_t>(c.dims.h);
  for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
  hdr.datatype = kNiftiFloat32;
  hdr.bitpix = 32;
  hdr.pixdim[0] = 1;
  hdr.pixdim[1] = static_cast<float>(c.spacing.sz);
  hdr.pixdim[2] = static_cast<float>(c.spacing.sy);
  hdr.pixdim[3] = static_cast<float>(c.spacing.sx);
  hdr.vox_offset = 352;
  hdr.scl_slope = 1;
  hdr.scl_inter = 0;
  std::memcpy(hdr.magic, "n+1", 4);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
  const char pad[4] = {0, 0, 0, 0};
  os.write(pad, 4);
  std::vector<float> buf(c.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(c.data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(4 * buf.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void write_container(const Container& c, const std::string& path) {
  validate(c);
  if (ends_with(path, ".nii")) write_nifti(c, path);
  else if (ends_with(path, ".vol")) write_native(c, path);
  else throw std::runtime_error("unsupported volume extension (use .vol or .nii): " + path);
}

Container read_container(const std::string& path) {
  if (ends_with(path, ".nii")) return read_nifti(path);
  if (ends_with(path, ".vol")) return read_native(path);
  throw std::runtime_error("unsupported volume extension (use .vol or .nii): " + path);
}

Container to_container(const Volume& v, ValueKind kind) {
  Container c;
  c.dims = v.dims;
  c.spacing = v.spacing;
  c.channels = 1;
  c.kind = kind;
  c.data = v.data;
  return c;
}

Container to_container(const DisplacementField& f) {
  Container c;
  c.dims = f.dims;
  c.channels = 3;
  c.kind = ValueKind::displacement;
  c.data = f.data;  // interleaved == channels-last
  return c;
}

Container to_container(const Field& f, ValueKind kind) {
  Container c;
  c.dims = f.dims;
  c.spacing = f.spacing;
  c.channels = f.channels;
  c.kind = kind;
  const std::int64_t plane = f.dims.voxels();
  c.data.resize(f.data.size());
  for (std::int64_t v = 0; v < plane; ++v)
    for (int ch = 0; ch < f.channels; ++ch)
      c.data[v * f.channels + ch] = f.data[ch * plane + v];
  return c;
}

Container to_container(const LabelVolume& l) {
  Container c;
  c.dims = l.dims;
  c.spacing = l.spacing;
  c.channels = 1;
  c.kind = ValueKind::label;
  c.data.assign(l.data.begin(), l.data.end());
  return c;
}

Volume volume_from(const Container& c) {
  if (c.channels != 1) throw std::runtime_error("container: expected a single channel volume");
  Volume v(c.dims, c.spacing);
  v.data = c.data;
  return v;
}

DisplacementField displacement_from(const Container& c) {
  if (c.channels != 3) throw std::runtime_error("container: expected 3 channels");
  DisplacementField f(c.dims);
  f.data = c.data;
  return f;
}

Field field_from(const Container& c) {
  Field f(c.channels, c.dims, c.spacing);
  const std::int64_t plane = c.dims.voxels();
  for (std::int64_t v = 0; v < plane; ++v)
    for (int ch = 0; ch < c.channels; ++ch)
      f.data[ch * plane + v] = c.data[v * c.channels + ch];
  return f;
}

LabelVolume labels_from(const Container& c) {
  if (c.channels != 1) throw std::runtime_error("container: expected a single channel volume");
  LabelVolume l(c.dims, c.spacing);
  for (std::size_t i = 0; i < c.data.size(); ++i)
    l.data[i] = static_cast<std::uint8_t>(std::lround(c.data[i]));
  l.rebuild_legend();
  return l;
}

void write_volume(const Volume& v, const std::string& path, ValueKind kind) {
  write_container(to_container(v, kind), path);
}

Volume read_volume(const std::string& path) { return volume_from(read_container(path)); }

// --- config files ---------------------------------------------------------------

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  is >> j;
  return j;
}

}  // namespace

RegistrationConfig load_registration_config(const std::string& path) {
  const auto j = load_json(path);
  RegistrationConfig cfg;
  if (j.contains("metric")) cfg.metric = metric_from_string(j["metric"].get<std::string>());
  if (j.contains("levels")) cfg.levels = j["levels"].get<int>();
  if (j.contains("scales")) cfg.scales = j["scales"].get<std::vector<double>>();
  if (j.contains("learning_rates"))
    cfg.learning_rates = j["learning_rates"].get<std::vector<double>>();
  if (j.contains("iterations")) cfg.iterations = j["iterations"].get<std::vector<int>>();
  if (j.contains("lambda")) cfg.lambda = j["lambda"].get<std::vector<double>>();
  if (j.contains("sigma")) cfg.sigma = j["sigma"].get<double>();
  if (j.contains("checkpoint")) cfg.checkpoint = j["checkpoint"].get<std::string>();
  if (j.contains("nmi_bins")) cfg.nmi_bins = j["nmi_bins"].get<int>();
  if (j.contains("nmi_parzen")) cfg.nmi_parzen = j["nmi_parzen"].get<double>();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  const auto j = load_json(path);
  TrainConfig cfg;
  if (j.contains("n_k")) cfg.n_k = j["n_k"].get<std::int64_t>();
  if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
  if (j.contains("bezier_n")) cfg.bezier_n = j["bezier_n"].get<int>();
  if (j.contains("delta")) cfg.delta = j["delta"].get<double>();
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("foreground_threshold"))
    cfg.foreground_threshold = j["foreground_threshold"].get<double>();
  if (j.contains("symmetric_negatives"))
    cfg.symmetric_negatives = j["symmetric_negatives"].get<bool>();
  if (j.contains("clamp_sample_count"))
    cfg.clamp_sample_count = j["clamp_sample_count"].get<bool>();
  if (j.contains("c_h")) cfg.net.c_h = j["c_h"].get<int>();
  if (j.contains("c_d")) cfg.net.c_d = j["c_d"].get<int>();
  if (j.contains("leaky_slope")) cfg.net.leaky_slope = j["leaky_slope"].get<double>();
  if (j.contains("widths")) {
    const auto w = j["widths"].get<std::vector<int>>();
    if (w.size() != 4) throw std::runtime_error("config: widths must list 4 values");
    std::copy(w.begin(), w.end(), cfg.net.widths.begin());
  }
  return cfg;
}

}  // namespace dsir
