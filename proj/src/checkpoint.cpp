#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ddat/network.hpp"
#include "ddat/types.hpp"

namespace ddat {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'D', 'A', 'T', 'C', 'K', 'P', '1'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_vector(const Eigen::VectorXd& v) {
    put<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
    out_.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  Eigen::VectorXd get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw DataError("checkpoint: truncated parameter block");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  void expect_magic() {
    need(sizeof kMagic);
    if (std::memcmp(bytes_.data(), kMagic, sizeof kMagic) != 0) throw DataError("checkpoint: bad magic");
    pos_ += sizeof kMagic;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated record");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const GruNetwork& net, const AdamState& adam) {
  const auto& c = net.config();
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::int32_t>(c.num_layers);
  w.put<std::int32_t>(c.units_per_layer);
  w.put<std::int32_t>(c.input_dim);
  w.put<std::int32_t>(static_cast<std::int32_t>(c.aux_head));
  w.put<std::int32_t>(c.reconstruction_dim);
  w.put<std::uint64_t>(c.seed);
  w.put_vector(net.parameters());
  w.put<std::int64_t>(adam.step);
  w.put<double>(adam.learning_rate);
  w.put<double>(adam.beta1);
  w.put<double>(adam.beta2);
  w.put<double>(adam.epsilon);
  w.put_vector(adam.m);
  w.put_vector(adam.v);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic();
  NetworkConfig c;
  c.num_layers = r.get<std::int32_t>();
  c.units_per_layer = r.get<std::int32_t>();
  c.input_dim = r.get<std::int32_t>();
  const auto head = r.get<std::int32_t>();
  if (head < 0 || head > 2) throw DataError("checkpoint: unknown auxiliary head");
  c.aux_head = static_cast<AuxHead>(head);
  c.reconstruction_dim = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();

  Checkpoint ck{GruNetwork(c), AdamState{}};
  auto params = r.get_vector();
  if (params.size() != ck.network.parameters().size())
    throw DataError("checkpoint: parameter count does not match the stored configuration");
  ck.network.parameters() = std::move(params);
  ck.adam.step = r.get<std::int64_t>();
  ck.adam.learning_rate = r.get<double>();
  ck.adam.beta1 = r.get<double>();
  ck.adam.beta2 = r.get<double>();
  ck.adam.epsilon = r.get<double>();
  ck.adam.m = r.get_vector();
  ck.adam.v = r.get_vector();
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const GruNetwork& net, const AdamState& adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write checkpoint");
  const auto bytes = serialize_checkpoint(net, adam);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open checkpoint");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace ddat
