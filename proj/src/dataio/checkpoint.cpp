#include "offpolicy/dataio/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "offpolicy/errors.hpp"
#include "offpolicy/policies/factory.hpp"

namespace offpolicy::dataio {

namespace {

constexpr char kMagic[4] = {'O', 'P', 'S', 'C'};

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::uint64_t n) {
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw ValidationError("checkpoint integrity error: truncated data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Checkpoint make_checkpoint(const numkit::ParameterSet& params, nlohmann::json config, std::string rng_state) {
  Checkpoint c;
  c.config = std::move(config);
  c.rng_state = std::move(rng_state);
  for (const auto& e : params.entries()) {
    c.entries.push_back({e.name, e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()}});
  }
  return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, c.version);
  put_string(out, c.config.dump());
  put_string(out, c.rng_state);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    std::size_t count = 1;
    for (auto d : e.shape) count *= d;
    if (count != e.values.size()) throw ContractError("checkpoint entry " + e.name + " has a shape/value mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    for (double v : e.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) throw ValidationError("not a checkpoint file (bad magic)");
  if (bytes.size() < 4 + 4 + 8) throw ValidationError("checkpoint integrity error: truncated data");
  Reader r(bytes);
  r.get_string(4);
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(c.version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.get<std::uint64_t>() != fnv1a(body)) throw ValidationError("checkpoint integrity error: checksum mismatch");

  Reader in(body);
  in.get_string(8);
  try {
    c.config = nlohmann::json::parse(in.get_string(in.get<std::uint64_t>()));
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError("checkpoint integrity error: config is not JSON");
  }
  c.rng_state = in.get_string(in.get<std::uint64_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 2) throw ValidationError("checkpoint entry " + e.name + " has unsupported rank " + std::to_string(rank));
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = in.get<std::uint64_t>();
      e.shape.push_back(static_cast<std::size_t>(dim));
      total *= dim;
    }
    if (total > (body.size() - in.position()) / 8) throw ValidationError("checkpoint integrity error: truncated data");
    e.values.resize(total);
    for (auto& v : e.values) v = std::bit_cast<double>(in.get<std::uint64_t>());
    c.entries.push_back(std::move(e));
  }
  if (in.position() != body.size()) throw ValidationError("checkpoint integrity error: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed while writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_parameters(numkit::ParameterSet& params, const Checkpoint& checkpoint) {
  const auto& entries = params.entries();
  if (entries.size() != checkpoint.entries.size()) {
    throw ValidationError("checkpoint has " + std::to_string(checkpoint.entries.size()) + " entries, model has " +
                          std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = checkpoint.entries[i];
    if (e.name != entries[i].name || e.shape != entries[i].tensor.shape()) {
      throw ValidationError("checkpoint entry " + e.name + " does not match model parameter " + entries[i].name);
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    numkit::Tensor t = entries[i].tensor;
    std::copy(checkpoint.entries[i].values.begin(), checkpoint.entries[i].values.end(), t.mutable_data().begin());
  }
}

void save_policy(const std::filesystem::path& path, const policies::Policy& policy, nlohmann::json extra,
                 const std::string& rng_state) {
  extra["policy"] = policy.config_json();
  save_checkpoint(path, make_checkpoint(policy.parameters(), std::move(extra), rng_state));
}

std::unique_ptr<policies::Policy> policy_from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.config.contains("policy")) throw ValidationError("checkpoint does not describe a policy");
  auto policy = policies::make_policy(checkpoint.config.at("policy"));
  restore_parameters(policy->parameters(), checkpoint);
  return policy;
}

std::unique_ptr<policies::Policy> load_policy(const std::filesystem::path& path) {
  return policy_from_checkpoint(load_checkpoint(path));
}

}  // namespace offpolicy::dataio
