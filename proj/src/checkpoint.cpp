#include "lost/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <type_traits>

#include "lost/error.hpp"

namespace lost {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host scalars directly");

namespace {

constexpr char kMagic[5] = {'L', 'O', 'S', 'T', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <class N>
  void num(N v) {
    raw(&v, sizeof v);
  }
  void str32(const std::string& s) {
    num(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  void raw(void* p, std::size_t n) {
    if (n > bytes.size() - pos)
      throw InputError("checkpoint: truncated at byte " + std::to_string(pos));
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  template <class N>
  N num() {
    N v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str(std::uint64_t n) {
    if (n > bytes.size() - pos) throw InputError("checkpoint: truncated string");
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

template <class T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 1 : 2;
}

}  // namespace

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model, const ExperimentConfig& cfg) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.num(kCheckpointVersion);
  ExperimentConfig echo = cfg;
  echo.model = model.config();
  const std::string text = write_config(echo);
  w.num(static_cast<std::uint64_t>(text.size()));
  w.raw(text.data(), text.size());

  const auto tensors = model.tensors();
  w.num(static_cast<std::uint64_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str32(t.name);
    w.num(dtype_code<T>());
    w.num(std::uint8_t{2});
    w.num(static_cast<std::uint64_t>(t.value->rows()));
    w.num(static_cast<std::uint64_t>(t.value->cols()));
    w.raw(t.value->data(), t.value->size() * sizeof(T));
  }
  const auto sels = model.selections();
  w.num(static_cast<std::uint64_t>(sels.size()));
  for (const auto& [name, sel] : sels) {
    w.str32(name);
    w.num(static_cast<std::uint64_t>(sel->k()));
    for (std::size_t i : sel->indices) w.num(static_cast<std::uint64_t>(i));
  }
  return std::move(w.out);
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const ExperimentConfig& cfg) {
  const auto bytes = encode_checkpoint(model, cfg);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
LoadedCheckpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[5];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InputError("checkpoint: bad magic");
  const auto version = r.num<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::string text = r.str(r.num<std::uint64_t>());
  LoadedCheckpoint<T> out{parse_config(text, "<checkpoint config>"), {}};
  out.model = Model<T>::build(out.config.model);

  auto slots = out.model.params();
  const auto count = r.num<std::uint64_t>();
  if (count != slots.size()) {
    throw InputError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                     std::to_string(slots.size()));
  }
  for (auto& slot : slots) {
    const std::string name = r.str(r.num<std::uint32_t>());
    if (name != slot.name) {
      throw InputError("checkpoint: expected tensor '" + slot.name + "', found '" + name + "'");
    }
    const auto dtype = r.num<std::uint8_t>();
    const auto rank = r.num<std::uint8_t>();
    if (rank != 2)
      throw InputError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    const auto rows = r.num<std::uint64_t>();
    const auto cols = r.num<std::uint64_t>();
    if (rows != slot.value->rows() || cols != slot.value->cols()) {
      throw InputError("checkpoint: tensor '" + name + "' is " + shape_str(rows, cols) +
                       ", config implies " + shape_str(*slot.value));
    }
    if (dtype == dtype_code<T>()) {
      r.raw(slot.value->data(), slot.value->size() * sizeof(T));
    } else if (dtype == 1 || dtype == 2) {
      for (T& v : slot.value->flat()) {
        v = dtype == 1 ? static_cast<T>(r.num<float>()) : static_cast<T>(r.num<double>());
      }
    } else {
      throw InputError("checkpoint: tensor '" + name + "' has unknown dtype " +
                       std::to_string(dtype));
    }
  }

  std::map<std::string, std::vector<std::size_t>> lists;
  const auto nlists = r.num<std::uint64_t>();
  for (std::uint64_t i = 0; i < nlists; ++i) {
    std::string name = r.str(r.num<std::uint32_t>());
    const auto k = r.num<std::uint64_t>();
    std::vector<std::size_t> idx(k);
    for (auto& v : idx) v = static_cast<std::size_t>(r.num<std::uint64_t>());
    lists.emplace(std::move(name), std::move(idx));
  }
  if (r.pos != bytes.size()) throw InputError("checkpoint: trailing bytes");

  const auto expected = out.model.selections();
  if (lists.size() != expected.size()) {
    throw InputError("checkpoint: " + std::to_string(lists.size()) +
                     " index lists, config implies " + std::to_string(expected.size()));
  }
  auto& blocks = out.model.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (LinearRole role : kLinearRoles) {
      auto& slot = blocks[b].linears[static_cast<std::size_t>(role)];
      auto* layer = std::get_if<LostLinear<T>>(&slot);
      if (!layer || layer->k() == 0) continue;
      const std::string name =
          "block" + std::to_string(b) + "." + std::string(to_string(role)) + ".idx";
      const auto it = lists.find(name);
      if (it == lists.end()) throw InputError("checkpoint: missing index list '" + name + "'");
      if (it->second.size() != layer->k()) {
        throw InputError("checkpoint: index list '" + name + "' has " +
                         std::to_string(it->second.size()) + " entries, expected " +
                         std::to_string(layer->k()));
      }
      ChannelSelection sel = layer->selection();
      sel.indices = it->second;
      try {
        slot = LostLinear<T>(layer->A(), layer->B(), layer->Ws(), std::move(sel), layer->gamma(),
                             layer->activation(), layer->combine());
      } catch (const Error& e) {
        throw InputError("checkpoint: index list '" + name + "': " + e.what());
      }
    }
  }
  return out;
}

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_checkpoint<T>(bytes);
}

#define LOST_INSTANTIATE(T)                                                            \
  template std::vector<std::uint8_t> encode_checkpoint<T>(const Model<T>&,             \
                                                          const ExperimentConfig&);    \
  template void save_checkpoint<T>(const std::filesystem::path&, const Model<T>&,      \
                                   const ExperimentConfig&);                           \
  template LoadedCheckpoint<T> decode_checkpoint<T>(const std::vector<std::uint8_t>&); \
  template LoadedCheckpoint<T> load_checkpoint<T>(const std::filesystem::path&);

LOST_INSTANTIATE(float)
LOST_INSTANTIATE(double)
#undef LOST_INSTANTIATE

}  // namespace lost
