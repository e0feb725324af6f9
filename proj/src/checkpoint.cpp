#include "ctxscope/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"

namespace ctxscope {

namespace {

constexpr std::string_view kMagic = "CTXSCKPT";

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelWeights& weights) {
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  weights.for_each([&](const std::string& name, const Tensor& t) {
    table.push_back({{"name", name},
                     {"shape", {t.rows, t.cols}},
                     {"offset", offset}});
    offset += t.size() * sizeof(double);
  });
  const std::string header =
      nlohmann::json{{"config", weights.config.to_json()}, {"tensors", table}}.dump();

  std::string out(kMagic);
  put_u64(out, header.size());
  out += header;
  out.reserve(out.size() + offset);
  weights.for_each([&](const std::string&, const Tensor& t) {
    const auto* p = reinterpret_cast<const char*>(t.data.data());
    out.append(p, t.size() * sizeof(double));
  });
  write_file(path, out);
}

ModelWeights load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  auto corrupt = [&path](const std::string& why) {
    fail(ErrorKind::CorruptArtifact, path + ": " + why);
  };
  if (bytes.size() < kMagic.size() + 8 ||
      std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    corrupt("not a checkpoint");
  }
  const std::uint64_t hlen = get_u64(std::string_view(bytes).substr(kMagic.size()));
  const std::size_t base = kMagic.size() + 8;
  if (hlen > bytes.size() - base) corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(base, hlen));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad header: ") + e.what());
  }
  const std::size_t payload = base + hlen;

  ModelWeights w;
  try {
    w = ModelWeights::zeros(ModelConfig::from_json(header.at("config")));
    const auto& table = header.at("tensors");
    std::size_t i = 0;
    std::size_t expected_end = 0;
    w.for_each([&](const std::string& name, Tensor& t) {
      if (i >= table.size()) corrupt("missing tensor " + name);
      const auto& entry = table[i++];
      if (entry.at("name").get<std::string>() != name) {
        corrupt("unexpected tensor " + entry.at("name").get<std::string>());
      }
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols) {
        corrupt("shape mismatch for " + name);
      }
      const auto off = entry.at("offset").get<std::size_t>();
      const std::size_t n = t.size() * sizeof(double);
      if (payload + off + n > bytes.size()) corrupt("truncated payload");
      std::memcpy(t.data.data(), bytes.data() + payload + off, n);
      expected_end = std::max(expected_end, off + n);
    });
    if (i != table.size()) corrupt("unexpected extra tensors");
    if (payload + expected_end != bytes.size()) corrupt("trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad header: ") + e.what());
  }
  return w;
}

}  // namespace ctxscope
