#pragma once

#include <array>
#include <cstdint>

namespace netlasso {

// Philox4x32-10 (Salmon et al., Random123). Counter-based: every output block
// is a pure function of (key, counter), so independent streams are obtained
// by fixing the high counter words to a stream id.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Named streams. A model draws its design from kDesign, its noise from kNoise
// and the ground truth from kSignal; the RSC/RSM probe uses kDirections.
// Adding draws to one stream never shifts another.
enum class Stream : std::uint32_t {
  kDesign = 1,
  kNoise = 2,
  kSignal = 3,
  kDirections = 4,
  kGraph = 5,
};

/// 64-bit generator over one (seed, stream, substream) triple.
///
/// Counter layout: words 0-1 hold the 64-bit block index, word 2 the stream
/// id and word 3 the substream (e.g. agent index). Each block yields two
/// 64-bit outputs.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint32_t substream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1]; never returns 0 so it is safe under log().
  double uniform_open0();
  /// Standard normal by Box-Muller; the sine branch is cached.
  double normal();
  /// Uniform integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_;
  std::uint32_t substream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace netlasso
