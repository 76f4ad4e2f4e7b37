#include "mdopt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mdopt {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'O', 'P', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& value) {
  f.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f, const std::string& what) {
  T value{};
  f.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!f) throw DataError("checkpoint: truncated reading " + what);
  return value;
}

void write_values(std::ofstream& f, const ParamVector& v) {
  f.write(reinterpret_cast<const char*>(v.values().data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_values(std::ifstream& f, ParamVector& v, const std::string& what) {
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw DataError("checkpoint: truncated reading " + what);
}

}  // namespace

void save_checkpoint(const MdrState& state, const std::string& path) {
  if (!state.shared.layout()) throw LayoutError("checkpoint: empty state");
  const auto& spec = state.shared.layout()->spec();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kVersion);
  write_pod(f, spec.num_users);
  write_pod(f, spec.num_items);
  write_pod(f, spec.embed_dim);
  write_pod(f, static_cast<std::uint64_t>(spec.hidden.size()));
  for (auto h : spec.hidden) write_pod(f, h);
  write_pod(f, static_cast<std::uint8_t>(spec.activation));
  write_pod(f, spec.seed);
  write_pod(f, static_cast<std::uint64_t>(state.n_domains()));
  write_values(f, state.shared);
  for (const auto& v : state.specific) {
    if (!v.same_layout(state.shared))
      throw LayoutError("checkpoint: specific vector layout differs");
    write_values(f, v);
  }
  if (!f) throw DataError("checkpoint: write failed: " + path);
}

MdrState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(f, "version");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));

  ModelSpec spec;
  spec.num_users = read_pod<std::int64_t>(f, "num_users");
  spec.num_items = read_pod<std::int64_t>(f, "num_items");
  spec.embed_dim = read_pod<std::int64_t>(f, "embed_dim");
  const auto n_hidden = read_pod<std::uint64_t>(f, "hidden count");
  if (n_hidden == 0 || n_hidden > 64)
    throw DataError("checkpoint: implausible hidden layer count");
  spec.hidden.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i)
    spec.hidden.push_back(read_pod<std::int64_t>(f, "hidden width"));
  const auto act = read_pod<std::uint8_t>(f, "activation");
  if (act > 1) throw DataError("checkpoint: bad activation tag");
  spec.activation = static_cast<Activation>(act);
  spec.seed = read_pod<std::int64_t>(f, "seed");
  spec.validate();

  const auto n_domains = read_pod<std::uint64_t>(f, "domain count");
  auto layout = ParamLayout::make(spec);
  MdrState state;
  state.shared = ParamVector(layout);
  read_values(f, state.shared, "shared");
  state.specific.reserve(n_domains);
  for (std::uint64_t d = 0; d < n_domains; ++d) {
    ParamVector v(layout);
    read_values(f, v, "specific " + std::to_string(d));
    state.specific.push_back(std::move(v));
  }
  f.peek();
  if (!f.eof()) throw DataError("checkpoint: trailing bytes in " + path);
  return state;
}

}  // namespace mdopt
