#include "uc2i/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "uc2i/error.hpp"

namespace uc2i {

namespace {

constexpr unsigned char kMagic[4] = {'U', 'C', '2', 'I'};

class Writer {
 public:
  void bytes(const unsigned char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void matrix(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw FormatError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p_[pos_++]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p_[pos_++]) << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Matrix matrix(std::uint64_t rows, std::uint64_t cols) {
    if (cols != 0 && rows > (n_ - pos_) / 8 / cols) throw FormatError("checkpoint truncated");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    }
    return m;
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  const auto& emb = ckpt.embeddings;
  const auto dim = static_cast<std::uint64_t>(emb.weights.cols());
  for (const Matrix* t : {&ckpt.user_targets, &ckpt.item_targets}) {
    if (t->rows() > 0 && static_cast<std::uint64_t>(t->cols()) != dim) {
      throw ShapeError("checkpoint: target width differs from embedding dimension");
    }
  }
  if (emb.rows() != emb.num_users + emb.num_items) {
    throw ShapeError("checkpoint: embedding rows differ from user + item count");
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(emb.num_users);
  w.u64(emb.num_items);
  w.u64(dim);
  w.u64(ckpt.layers);
  w.u64(ckpt.user_clusters);
  w.u64(ckpt.item_clusters);
  w.u64(ckpt.seed);
  w.u64(ckpt.best_epoch);
  w.f64(ckpt.best_val_recall);
  w.u64(static_cast<std::uint64_t>(ckpt.user_targets.rows()));
  w.u64(static_cast<std::uint64_t>(ckpt.item_targets.rows()));
  w.matrix(emb.weights);
  w.matrix(ckpt.user_targets);
  w.matrix(ckpt.item_targets);
  const auto crc = crc_of(w.data().data(), w.data().size());
  w.u32(crc);
  return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  Reader r(bytes.data() + 4, bytes.size() - 4);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& emb = ckpt.embeddings;
  emb.num_users = r.u64();
  emb.num_items = r.u64();
  const auto dim = r.u64();
  ckpt.layers = r.u64();
  ckpt.user_clusters = r.u64();
  ckpt.item_clusters = r.u64();
  ckpt.seed = r.u64();
  ckpt.best_epoch = r.u64();
  ckpt.best_val_recall = r.f64();
  const auto user_rows = r.u64();
  const auto item_rows = r.u64();
  if (emb.num_users > (1ULL << 40) || emb.num_items > (1ULL << 40)) {
    throw FormatError("checkpoint: implausible dimensions");
  }
  emb.weights = r.matrix(emb.num_users + emb.num_items, dim);
  ckpt.user_targets = r.matrix(user_rows, dim);
  ckpt.item_targets = r.matrix(item_rows, dim);
  if (r.remaining() != 4) {
    throw FormatError(r.remaining() < 4 ? "checkpoint truncated" : "checkpoint: trailing bytes");
  }
  const auto stored = r.u32();
  if (stored != crc_of(bytes.data(), bytes.size() - 4)) throw FormatError("checkpoint: CRC mismatch");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace uc2i
