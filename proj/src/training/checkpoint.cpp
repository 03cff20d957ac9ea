#include "forge/training/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "forge/error.hpp"

namespace forge::training {
namespace {

constexpr char kMagic[4] = {'A', 'F', 'R', 'G'};

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
  }
  void put_f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put(u);
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32(const char* what) {
    const auto u = get<std::uint32_t>(what);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated reading ") + what + " at byte " + std::to_string(pos_) +
                        " (need " + std::to_string(n) + ", have " + std::to_string(bytes_.size() - pos_) + ")");
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

TensorRecord f32_record(const std::string& name, const Shape& dims, std::span<const float> values) {
  TensorRecord r;
  r.name = name;
  r.dtype = 0;
  r.dims = dims;
  r.f32.assign(values.begin(), values.end());
  return r;
}

}  // namespace

const TensorRecord* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  Writer w;
  w.raw(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name.substr(0, 64));
    if (t.dims.size() > 0xFF) throw FormatError("tensor " + t.name + " has too many dimensions");
    std::int64_t count = 1;
    for (auto d : t.dims) count *= d;
    const std::size_t stored = t.dtype == 0 ? t.f32.size() : t.u64.size();
    if (static_cast<std::size_t>(count) != stored) {
      throw FormatError("tensor " + t.name + " holds " + std::to_string(stored) + " values for shape " +
                        shape_str(t.dims));
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.put<std::uint8_t>(t.dtype);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    if (t.dtype == 0) {
      for (float f : t.f32) w.put_f32(f);
    } else {
      for (auto u : t.u64) w.put<std::uint64_t>(u);
    }
  }
  w.put<std::uint64_t>(file.step);
  w.put<std::uint8_t>(file.phase);
  for (auto s : file.rng) w.put<std::uint64_t>(s);
  return std::move(w.bytes);
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::string magic = r.get_string(4, "magic");
  if (magic != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic at byte 0 (expected AFRG)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " at byte 4 (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  TensorFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    TensorRecord t;
    const auto name_len = r.get<std::uint16_t>("name length");
    t.name = r.get_string(name_len, "name");
    t.dtype = r.get<std::uint8_t>("dtype");
    if (t.dtype > 1) {
      throw FormatError("tensor " + t.name + " at byte " + std::to_string(at) + ": unknown dtype " +
                        std::to_string(t.dtype));
    }
    const auto rank = r.get<std::uint8_t>("rank");
    std::uint64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>("dims");
      if (dim == 0 || dim > (1ULL << 40)) {
        throw FormatError("tensor " + t.name + " at byte " + std::to_string(at) + ": invalid dimension " +
                          std::to_string(dim));
      }
      t.dims.push_back(static_cast<std::int64_t>(dim));
      n *= dim;
    }
    const std::size_t elem = t.dtype == 0 ? 4 : 8;
    if (n > r.remaining() / elem) {
      throw FormatError("tensor " + t.name + " at byte " + std::to_string(at) + ": shape " + shape_str(t.dims) +
                        " needs " + std::to_string(n * elem) + " bytes, " + std::to_string(r.remaining()) +
                        " remain");
    }
    if (t.dtype == 0) {
      t.f32.resize(n);
      for (auto& f : t.f32) f = r.get_f32("data");
    } else {
      t.u64.resize(n);
      for (auto& u : t.u64) u = r.get<std::uint64_t>("data");
    }
    file.tensors.push_back(std::move(t));
  }
  file.step = r.get<std::uint64_t>("step");
  file.phase = r.get<std::uint8_t>("phase");
  for (auto& s : file.rng) s = r.get<std::uint64_t>("rng state");
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after checkpoint end at byte " +
                      std::to_string(r.pos()));
  }
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  const auto bytes = encode_tensor_file(file);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor_file(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TensorFile make_checkpoint(const model::AudioLM& m, const AdamW* optimizer, const CheckpointState& state) {
  TensorFile file;
  for (const auto& p : m.parameters()) file.tensors.push_back(f32_record(p.name, p.tensor.shape(), p.tensor.data()));
  if (optimizer) {
    TensorRecord t;
    t.name = "optim.t";
    t.dtype = 1;
    t.dims = {1};
    t.u64 = {optimizer->steps()};
    file.tensors.push_back(std::move(t));
    const auto& params = optimizer->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].tensor.requires_grad()) continue;
      file.tensors.push_back(f32_record("optim.m." + params[i].name, params[i].tensor.shape(), optimizer->first_moments()[i]));
      file.tensors.push_back(f32_record("optim.v." + params[i].name, params[i].tensor.shape(), optimizer->second_moments()[i]));
    }
  }
  file.step = state.step;
  file.phase = static_cast<std::uint8_t>(state.phase);
  file.rng = state.rng;
  return file;
}

void save_checkpoint(const std::filesystem::path& path, const model::AudioLM& m, const AdamW* optimizer,
                     const CheckpointState& state) {
  write_tensor_file(path, make_checkpoint(m, optimizer, state));
}

LoadReport apply_checkpoint(const TensorFile& file, model::AudioLM& m, AdamW* optimizer) {
  if (file.phase > static_cast<std::uint8_t>(Phase::Base)) {
    throw FormatError("checkpoint phase byte " + std::to_string(file.phase) + " is not a known phase");
  }
  LoadReport report;
  report.state = CheckpointState{static_cast<Phase>(file.phase), file.step, file.rng};

  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : file.tensors) {
    if (!by_name.emplace(t.name, &t).second) throw FormatError("duplicate tensor " + t.name + " in checkpoint");
  }

  auto params = m.parameters();
  // validate everything before touching the model
  std::map<std::string, bool> known;
  for (const auto& p : params) {
    known[p.name] = true;
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      if (p.name.starts_with("lora.")) {
        report.warnings.push_back("checkpoint has no " + p.name + "; keeping fresh initialization");
        continue;
      }
      throw FormatError("checkpoint is missing tensor " + p.name + " " + shape_str(p.tensor.shape()));
    }
    const TensorRecord& rec = *it->second;
    if (rec.dtype != 0 || rec.dims != p.tensor.shape()) {
      throw FormatError("tensor " + p.name + ": checkpoint has " + shape_str(rec.dims) +
                        (rec.dtype != 0 ? " u64" : "") + ", model expects " + shape_str(p.tensor.shape()) + " f32");
    }
  }
  for (const auto& t : file.tensors) {
    if (t.name.starts_with("optim.")) continue;
    if (!known.count(t.name)) {
      const std::string hint = t.name.starts_with("lora.") ? " (attach LoRA before loading)" : "";
      throw FormatError("checkpoint tensor " + t.name + " " + shape_str(t.dims) + " has no model parameter" + hint);
    }
  }

  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) continue;
    auto dst = p.tensor.mutable_data();
    std::copy(it->second->f32.begin(), it->second->f32.end(), dst.begin());
  }

  if (optimizer) {
    const auto& oparams = optimizer->params();
    bool complete = by_name.count("optim.t") > 0;
    for (const auto& p : oparams) {
      if (!p.tensor.requires_grad()) continue;
      auto mi = by_name.find("optim.m." + p.name);
      auto vi = by_name.find("optim.v." + p.name);
      if (mi == by_name.end() || vi == by_name.end() || mi->second->dims != p.tensor.shape() ||
          vi->second->dims != p.tensor.shape()) {
        complete = false;
        break;
      }
    }
    if (complete) {
      for (std::size_t i = 0; i < oparams.size(); ++i) {
        if (!oparams[i].tensor.requires_grad()) continue;
        optimizer->first_moments()[i] = by_name["optim.m." + oparams[i].name]->f32;
        optimizer->second_moments()[i] = by_name["optim.v." + oparams[i].name]->f32;
      }
      const auto* t = by_name["optim.t"];
      if (t->dtype != 1 || t->u64.size() != 1) throw FormatError("optim.t must be a single u64");
      optimizer->set_steps(t->u64[0]);
      report.optimizer_restored = true;
    } else {
      report.warnings.push_back("optimizer state not restored (checkpoint does not cover the trainable set)");
    }
  }
  return report;
}

LoadReport load_checkpoint(const std::filesystem::path& path, model::AudioLM& m, AdamW* optimizer) {
  return apply_checkpoint(read_tensor_file(path), m, optimizer);
}

}  // namespace forge::training
