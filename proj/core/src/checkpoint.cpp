#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "rmaml/models.hpp"

namespace rmaml {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path.string() + "'");
}

}  // namespace detail

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<std::uint8_t> encode_checkpoint(const MetaModel& model) {
  detail::ByteWriter w;
  const ArchSpec& a = model.arch();
  w.tag("RMLC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(a.height));
  w.u32(static_cast<std::uint32_t>(a.width));
  w.u32(static_cast<std::uint32_t>(a.channels));
  w.u32(static_cast<std::uint32_t>(a.hidden.size()));
  for (std::size_t h : a.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(a.embed_dim));
  w.u32(static_cast<std::uint32_t>(a.n_classes));
  w.u8(static_cast<std::uint8_t>(a.activation));
  w.u32(static_cast<std::uint32_t>(model.layout().size()));
  for (const ParamSlot& s : model.layout()) {
    w.str(s.name);
    w.u32(static_cast<std::uint32_t>(s.shape.size()));
    for (std::size_t d : s.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u8(static_cast<std::uint8_t>(s.block));
  }
  w.u64(model.size());
  for (double p : model.params()) w.f64(p);
  return w.take();
}

MetaModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_tag("RMLC");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ArchSpec a;
  a.height = r.u32("height");
  a.width = r.u32("width");
  a.channels = r.u32("channels");
  const std::uint32_t n_hidden = r.u32("hidden count");
  r.need(4ull * n_hidden, "hidden widths");
  for (std::uint32_t i = 0; i < n_hidden; ++i) a.hidden.push_back(r.u32("hidden width"));
  a.embed_dim = r.u32("embed_dim");
  a.n_classes = r.u32("n_classes");
  const std::uint8_t act = r.u8("activation");
  if (act > static_cast<std::uint8_t>(Activation::Linear)) {
    throw FormatError("checkpoint: unknown activation code " + std::to_string(act));
  }
  a.activation = static_cast<Activation>(act);
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }

  const auto expected = make_layout(a);
  const std::uint32_t n_slots = r.u32("slot count");
  if (n_slots != expected.size()) throw FormatError("checkpoint: layout slot count mismatch");
  for (const ParamSlot& slot : expected) {
    const std::string name = r.str("slot name");
    const std::uint32_t rank = r.u32("slot rank");
    ad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("slot extent"));
    const std::uint8_t block = r.u8("slot block");
    if (name != slot.name || shape != slot.shape || block != static_cast<std::uint8_t>(slot.block)) {
      throw FormatError("checkpoint: layout entry '" + name + "' does not match architecture");
    }
  }
  const std::uint64_t count = r.u64("parameter count");
  if (count != expected.back().offset + expected.back().size) {
    throw FormatError("checkpoint: parameter count " + std::to_string(count) +
                      " does not match architecture");
  }
  r.need(8 * count, "parameters");
  std::vector<double> params(count);
  for (double& p : params) p = r.f64("parameter");
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after payload");
  return MetaModel(a, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const MetaModel& model) {
  detail::write_file(path, encode_checkpoint(model));
}

MetaModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace rmaml
