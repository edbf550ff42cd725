#include "seqtx/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "seqtx/config_io.hpp"

namespace seqtx {

namespace {

constexpr const char* kHeader = "seqtx-checkpoint 1";

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
};

struct Manifest {
  ModelConfig config;
  std::vector<ManifestEntry> entries;
};

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& tok) {
  Shape s;
  std::size_t start = 0;
  while (start <= tok.size()) {
    const auto x = tok.find('x', start);
    s.push_back(std::stoull(tok.substr(start, x - start)));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return s;
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "model.manifest";
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kHeader)
    throw Error(path.string() + ": unsupported checkpoint header");
  Manifest m;
  if (!std::getline(is, line) || line.rfind("config ", 0) != 0)
    throw Error(path.string() + ": missing config line");
  Json::parse(line.substr(7)).get_to(m.config);
  if (!std::getline(is, line) || line.rfind("tensors ", 0) != 0)
    throw Error(path.string() + ": missing tensor count");
  const auto n = std::stoull(line.substr(8));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw Error(path.string() + ": truncated tensor list");
    std::istringstream ls(line);
    ManifestEntry e;
    std::string dtype, shape;
    if (!(ls >> e.name >> dtype >> shape >> e.offset >> e.count) || dtype != "f32")
      throw Error(path.string() + ": malformed tensor line '" + line + "'");
    e.shape = parse_shape(shape);
    if (numel(e.shape) != e.count) throw Error(path.string() + ": count mismatch for " + e.name);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void fill_parameters(TransformerModel& model, const Manifest& m, const std::filesystem::path& dir) {
  const auto params = model.named_parameters();
  if (params.size() != m.entries.size())
    throw Error("checkpoint holds " + std::to_string(m.entries.size()) + " tensors, model has " +
                std::to_string(params.size()));
  std::ifstream blob(dir / "model.bin", std::ios::binary);
  if (!blob) throw Error("cannot open " + (dir / "model.bin").string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    const auto& e = m.entries[i];
    if (e.name != name) throw Error("checkpoint tensor " + e.name + " where " + name + " expected");
    if (e.shape != t.shape())
      throw ShapeError("checkpoint shape " + shape_str(e.shape) + " for " + name + ", model has " +
                       shape_str(t.shape()));
    blob.seekg(static_cast<std::streamoff>(e.offset));
    Tensor target = t;
    detail::read_f32_le(blob, target.data());
  }
}

}  // namespace

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "model.manifest", std::ios::binary);
  std::ofstream blob(dir / "model.bin", std::ios::binary);
  if (!manifest || !blob) throw Error("cannot write checkpoint in " + dir.string());
  const auto params = model.named_parameters();
  manifest << kHeader << '\n';
  manifest << "config " << Json(model.config()).dump() << '\n';
  manifest << "tensors " << params.size() << '\n';
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    manifest << name << " f32 " << shape_token(t.shape()) << ' ' << offset << ' ' << t.size()
             << '\n';
    detail::write_f32_le(blob, t.data());
    offset += t.size() * sizeof(float);
  }
  if (!manifest || !blob) throw Error("failed writing checkpoint in " + dir.string());
}

std::unique_ptr<TransformerModel> load_checkpoint(const std::filesystem::path& dir) {
  const Manifest m = read_manifest(dir);
  auto model = std::make_unique<TransformerModel>(m.config, 0);
  fill_parameters(*model, m, dir);
  return model;
}

void load_parameters(TransformerModel& model, const std::filesystem::path& dir) {
  fill_parameters(model, read_manifest(dir), dir);
}

}  // namespace seqtx
