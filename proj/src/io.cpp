#include "unrollkit/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace unrollkit {

static_assert(std::endian::native == std::endian::little, "CFL files are little-endian");

namespace {

constexpr Index kCflDims = 5;

fs::path with_ext(fs::path const &stem, char const *ext)
{
  return fs::path(stem.string() + ext);
}

std::string format_double(double v)
{
  char buf[64];
  auto const res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string const &s, std::string const &what)
{
  double v = 0;
  auto const res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("cannot parse '" + s + "' as a number for " + what);
  }
  return v;
}

Index parse_index(std::string const &s, std::string const &what)
{
  Index v = 0;
  auto const res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("cannot parse '" + s + "' as an integer for " + what);
  }
  return v;
}

std::vector<Index> read_header(fs::path const &stem)
{
  auto const path = with_ext(stem, ".hdr");
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::string line;
  std::vector<Index> dims;
  while (std::getline(in, line)) {
    if (line.rfind("# Dimensions", 0) == 0) {
      if (!std::getline(in, line)) {
        break;
      }
      std::istringstream ss(line);
      Index d;
      while (ss >> d) {
        dims.push_back(d);
      }
      break;
    }
  }
  if (dims.empty() || std::any_of(dims.begin(), dims.end(), [](Index d) { return d < 1; })) {
    throw Error("malformed header " + path.string());
  }
  return dims;
}

Shape shape_from_dims(std::vector<Index> dims, std::optional<Index> rank, fs::path const &stem)
{
  if (rank) {
    if (*rank < 1) {
      throw Error("read_cfl: rank must be >= 1");
    }
    while (static_cast<Index>(dims.size()) < *rank) {
      dims.push_back(1);
    }
    for (size_t i = *rank; i < dims.size(); i++) {
      if (dims[i] != 1) {
        throw Error("read_cfl: " + stem.string() + " has more than " + std::to_string(*rank) + " dimensions");
      }
    }
    dims.resize(*rank);
  } else {
    while (dims.size() > 1 && dims.back() == 1) {
      dims.pop_back();
    }
  }
  return Shape(dims.rbegin(), dims.rend());
}

} // namespace

void write_cfl(fs::path const &stem, ComplexTensor const &t)
{
  if (t.rank() < 1 || t.rank() > kCflDims) {
    throw Error("write_cfl: rank must lie in [1, 5], got " + std::to_string(t.rank()));
  }
  if (stem.has_parent_path()) {
    fs::create_directories(stem.parent_path());
  }
  {
    std::ofstream hdr(with_ext(stem, ".hdr"));
    hdr << "# Dimensions\n";
    for (Index i = 0; i < kCflDims; i++) {
      Index const d = i < t.rank() ? t.shape()[t.rank() - 1 - i] : 1;
      hdr << (i ? " " : "") << d;
    }
    hdr << "\n";
    if (!hdr) {
      throw Error("cannot write " + with_ext(stem, ".hdr").string());
    }
  }
  std::ofstream cfl(with_ext(stem, ".cfl"), std::ios::binary);
  cfl.write(reinterpret_cast<char const *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(t[0])));
  if (!cfl) {
    throw Error("cannot write " + with_ext(stem, ".cfl").string());
  }
}

ComplexTensor read_cfl(fs::path const &stem, std::optional<Index> rank)
{
  ComplexTensor t(shape_from_dims(read_header(stem), rank, stem));
  auto const path = with_ext(stem, ".cfl");
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  auto const bytes = static_cast<std::streamsize>(t.size() * sizeof(t[0]));
  in.read(reinterpret_cast<char *>(t.data()), bytes);
  if (in.gcount() != bytes) {
    throw Error(path.string() + " is shorter than its header declares");
  }
  return t;
}

void write_real_cfl(fs::path const &stem, Tensor<float> const &t)
{
  write_cfl(stem, t.cast<std::complex<float>>());
}

Tensor<float> read_real_cfl(fs::path const &stem, std::optional<Index> rank)
{
  auto const c = read_cfl(stem, rank);
  return Tensor<float>(c.shape(), c.vec().real());
}

std::map<std::string, std::string> read_key_values(fs::path const &file)
{
  std::ifstream in(file);
  if (!in) {
    throw Error("cannot open " + file.string());
  }
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(file.string() + ": expected key=value, got '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_key_values(fs::path const &file, std::map<std::string, std::string> const &kv)
{
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
  std::ofstream out(file);
  for (auto const &[k, v] : kv) {
    out << k << "=" << v << "\n";
  }
  if (!out) {
    throw Error("cannot write " + file.string());
  }
}

namespace {

std::string const &require(std::map<std::string, std::string> const &kv, std::string const &key)
{
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw Error("missing key '" + key + "'");
  }
  return it->second;
}

} // namespace

void write_mask(fs::path const &stem, SamplingMask const &mask)
{
  ComplexTensor t({mask.nx(), mask.ny()});
  for (Index x = 0; x < mask.nx(); x++) {
    for (Index y = 0; y < mask.ny(); y++) {
      t(x, y) = mask.grid(x, y) ? 1.0f : 0.0f;
    }
  }
  write_cfl(stem, t);
  write_key_values(with_ext(stem, ".meta"), {{"kind", to_string(mask.kind)},
                                             {"rate", std::to_string(mask.nominal_rate)},
                                             {"acs", std::to_string(mask.acs_lines)},
                                             {"seed", std::to_string(mask.seed)}});
}

SamplingMask read_mask(fs::path const &stem)
{
  auto const t = read_cfl(stem, 2);
  SamplingMask m;
  m.grid = MaskGrid::Zero(t.dim(0), t.dim(1));
  for (Index x = 0; x < t.dim(0); x++) {
    for (Index y = 0; y < t.dim(1); y++) {
      auto const v = t(x, y);
      if (v != std::complex<float>(0) && v != std::complex<float>(1)) {
        throw Error(stem.string() + " is not a binary mask");
      }
      m.grid(x, y) = v.real() != 0;
    }
  }
  auto const meta = with_ext(stem, ".meta");
  if (fs::exists(meta)) {
    auto const kv = read_key_values(meta);
    m.kind = parse_mask_kind(require(kv, "kind"));
    m.nominal_rate = parse_index(require(kv, "rate"), "rate");
    m.acs_lines = parse_index(require(kv, "acs"), "acs");
    m.seed = std::stoull(require(kv, "seed"));
  } else {
    // Without metadata the rate is unknown; routing then falls back to the achieved rate.
    m.kind = is_line_mask(m.grid) ? MaskKind::GaussianRandom : MaskKind::PseudoRadial;
    m.nominal_rate = 0;
  }
  return m;
}

fs::path sample_dir(fs::path const &root, MaskKind kind, Index rate, Index contrast, std::uint64_t seed)
{
  return root / to_string(kind) / std::to_string(rate) / std::to_string(contrast) / std::to_string(seed);
}

void write_sample(fs::path const &dir, ReconSample const &s)
{
  fs::create_directories(dir);
  write_cfl(dir / "y", s.y);
  write_mask(dir / "mask", s.mask);
  write_cfl(dir / "sens", s.sens.maps);
  write_cfl(dir / "target", s.target);
  write_key_values(dir / "sample.txt",
                   {{"contrast", std::to_string(s.contrast_id)}, {"seed", std::to_string(s.seed)}});
}

ReconSample read_sample(fs::path const &dir)
{
  ReconSample s;
  s.y = read_cfl(dir / "y", 4);
  s.mask = read_mask(dir / "mask");
  s.sens.maps = read_cfl(dir / "sens", 3);
  s.target = read_cfl(dir / "target", 3);
  auto const kv = read_key_values(dir / "sample.txt");
  s.contrast_id = parse_index(require(kv, "contrast"), "contrast");
  s.seed = std::stoull(require(kv, "seed"));
  if (s.y.dim(0) != s.sens.ncoils() || s.y.dim(1) != s.target.dim(0) || s.y.dim(2) != s.mask.nx() ||
      s.y.dim(3) != s.mask.ny() || s.target.dim(1) != s.mask.nx() || s.target.dim(2) != s.mask.ny()) {
    throw Error(dir.string() + ": inconsistent sample extents");
  }
  return s;
}

std::vector<fs::path> find_samples(fs::path const &root)
{
  if (!fs::is_directory(root)) {
    throw Error("dataset directory " + root.string() + " does not exist");
  }
  std::vector<fs::path> out;
  for (auto const &e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "sample.txt") {
      out.push_back(e.path().parent_path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string config_to_text(CascadeConfig const &c)
{
  std::ostringstream ss;
  std::string map;
  for (auto const &[rate, entry] : c.entry_map) {
    map += (map.empty() ? "" : ",") + format_double(rate) + ":" + std::to_string(entry);
  }
  ss << "n_ui=" << c.n_ui << "\n"
     << "entry_map=" << map << "\n"
     << "adaptive=" << (c.adaptive ? 1 : 0) << "\n"
     << "cg_iters=" << c.cg_iters << "\n"
     << "cg_tol=" << format_double(c.cg_tol) << "\n"
     << "mu_init=" << format_double(c.mu_init) << "\n"
     << "net.kind=" << nn::to_string(c.net.kind) << "\n"
     << "net.scales=" << c.net.scales << "\n"
     << "net.base_channels=" << c.net.base_channels << "\n"
     << "net.contrast_dim=" << c.net.contrast_dim << "\n"
     << "net.pattern_dim=" << c.net.pattern_dim << "\n"
     << "net.shift_count=" << c.net.shift_count << "\n"
     << "net.prompt_count=" << c.net.prompt_count << "\n"
     << "net.prompt_channels=" << c.net.prompt_channels << "\n"
     << "net.prompt_size=" << c.net.prompt_size << "\n"
     << "net.temporal_kernel=" << c.net.temporal_kernel << "\n";
  return ss.str();
}

CascadeConfig config_from_text(std::map<std::string, std::string> const &kv)
{
  CascadeConfig c;
  auto idx = [&](std::string const &k) { return parse_index(require(kv, k), k); };
  c.n_ui = idx("n_ui");
  std::istringstream map(require(kv, "entry_map"));
  std::string item;
  while (std::getline(map, item, ',')) {
    auto const colon = item.find(':');
    if (colon == std::string::npos) {
      throw Error("entry_map: expected rate:entry, got '" + item + "'");
    }
    c.entry_map.emplace_back(parse_double(item.substr(0, colon), "entry_map"),
                             parse_index(item.substr(colon + 1), "entry_map"));
  }
  c.adaptive = idx("adaptive") != 0;
  c.cg_iters = idx("cg_iters");
  c.cg_tol = parse_double(require(kv, "cg_tol"), "cg_tol");
  c.mu_init = parse_double(require(kv, "mu_init"), "mu_init");
  c.net.kind = nn::parse_net_kind(require(kv, "net.kind"));
  c.net.scales = idx("net.scales");
  c.net.base_channels = idx("net.base_channels");
  c.net.contrast_dim = idx("net.contrast_dim");
  c.net.pattern_dim = idx("net.pattern_dim");
  c.net.shift_count = idx("net.shift_count");
  c.net.prompt_count = idx("net.prompt_count");
  c.net.prompt_channels = idx("net.prompt_channels");
  c.net.prompt_size = idx("net.prompt_size");
  c.net.temporal_kernel = idx("net.temporal_kernel");
  c.validate();
  return c;
}

void save_model(fs::path const &dir, Model const &model, std::vector<double> const &loss_history)
{
  check_model(model);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << config_to_text(model.config);
  }
  std::ofstream manifest(dir / "manifest.txt");
  Index total = 0;
  for (auto const &s : model.stages) {
    total += s.count();
  }
  Tensor<float> blob({total});
  Index offset = 0;
  for (size_t i = 0; i < model.stages.size(); i++) {
    for (auto const &name : model.stages[i].names()) {
      auto const &t = model.stages[i].at(name);
      manifest << i << " " << name << " " << offset;
      for (auto d : t.shape()) {
        manifest << " " << d;
      }
      manifest << "\n";
      blob.vec().segment(offset, t.size()) = t.vec();
      offset += t.size();
    }
  }
  if (!manifest) {
    throw Error("cannot write checkpoint manifest in " + dir.string());
  }
  write_real_cfl(dir / "params", blob);
  if (!loss_history.empty()) {
    std::ofstream loss(dir / "loss.csv");
    loss << "epoch,loss\n";
    for (size_t e = 0; e < loss_history.size(); e++) {
      loss << e << "," << format_double(loss_history[e]) << "\n";
    }
  }
}

Model load_model(fs::path const &dir)
{
  if (!fs::is_directory(dir)) {
    throw Error("checkpoint directory " + dir.string() + " does not exist");
  }
  Model m{config_from_text(read_key_values(dir / "config.txt")), {}};
  m.stages.resize(m.config.n_ui);
  auto const blob = read_real_cfl(dir / "params", 1);
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) {
    throw Error("cannot open " + (dir / "manifest.txt").string());
  }
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream ss(line);
    Index stage, offset;
    std::string name;
    if (!(ss >> stage >> name >> offset)) {
      throw Error("malformed manifest line '" + line + "'");
    }
    Shape shape;
    Index d;
    while (ss >> d) {
      shape.push_back(d);
    }
    Index const n = NumElements(shape);
    if (stage < 0 || stage >= m.config.n_ui || offset < 0 || offset + n > blob.size()) {
      throw Error("manifest entry '" + line + "' is out of range");
    }
    m.stages[stage].add(name, Tensor<float>(shape, blob.vec().segment(offset, n)));
  }
  check_model(m);
  return m;
}

} // namespace unrollkit
