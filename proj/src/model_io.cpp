#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "netlasso/errors.hpp"
#include "netlasso/model.hpp"

namespace netlasso {
namespace {

constexpr std::array<char, 8> kMagic = {'N', 'L', 'M', 'O', 'D', 'E', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw InvalidArgument("model container truncated");
  }
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw InvalidArgument("model container truncated");
  }
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_model(std::ostream& out, const LinearModel& model) {
  const ModelConfig& cfg = model.config();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg.covariance.kind));
  put_u32(out, static_cast<std::uint32_t>(cfg.signal));
  put_u32(out, 0);
  put_u64(out, cfg.d);
  put_u64(out, cfg.s);
  put_u64(out, cfg.m);
  put_u64(out, cfg.n);
  put_u64(out, cfg.seed);
  put_f64(out, cfg.sigma_noise);
  put_f64(out, cfg.covariance.low);
  put_f64(out, cfg.covariance.high);
  put_f64(out, cfg.covariance.corr);
  for (double v : model.theta_star()) put_f64(out, v);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    const RealMatrix& x = model.design(i);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) put_f64(out, x(r, c));
    }
    for (double v : model.noise(i)) put_f64(out, v);
  }
  if (!out) throw Error("failed writing model container");
}

LinearModel read_model(std::istream& in) {
  std::array<char, 8> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw InvalidArgument("not a model container (bad magic)");
  }
  if (get_u32(in) != kVersion) throw InvalidArgument("unsupported model container version");
  ModelConfig cfg;
  const std::uint32_t cov_tag = get_u32(in);
  const std::uint32_t signal_tag = get_u32(in);
  if (cov_tag > 2 || signal_tag > 1) throw InvalidArgument("unknown tag in model header");
  cfg.covariance.kind = static_cast<CovarianceKind>(cov_tag);
  cfg.signal = static_cast<SignalRule>(signal_tag);
  get_u32(in);
  cfg.d = get_u64(in);
  cfg.s = get_u64(in);
  cfg.m = get_u64(in);
  cfg.n = get_u64(in);
  cfg.seed = get_u64(in);
  cfg.sigma_noise = get_f64(in);
  cfg.covariance.low = get_f64(in);
  cfg.covariance.high = get_f64(in);
  cfg.covariance.corr = get_f64(in);
  cfg.validate();

  RealVector theta_star(cfg.d);
  for (auto& v : theta_star) v = get_f64(in);
  std::vector<RealMatrix> designs;
  std::vector<RealVector> noise;
  for (std::size_t i = 0; i < cfg.m; ++i) {
    RealMatrix x(cfg.n, cfg.d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = get_f64(in);
    }
    RealVector e(cfg.n);
    for (auto& v : e) v = get_f64(in);
    designs.push_back(std::move(x));
    noise.push_back(std::move(e));
  }
  return LinearModel(cfg, std::move(designs), std::move(noise), std::move(theta_star));
}

void save_model(const std::filesystem::path& path, const LinearModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_model(out, model);
}

LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return read_model(in);
}

}  // namespace netlasso
