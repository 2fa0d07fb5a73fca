#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace juggle::lcp {

inline constexpr std::uint8_t kMagic0 = 0x4C;
inline constexpr std::uint8_t kMagic1 = 0x43;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kPoseTwist = 1;
inline constexpr std::size_t kFrameSize = 68;

/// Pose and twist of one rigid body at one instant.
struct StateFrame {
  std::uint8_t msg_type = kPoseTwist;
  std::uint32_t seq = 0;
  std::uint64_t timestamp_ns = 0;
  std::array<float, 3> position{};
  std::array<float, 4> quaternion{1.0f, 0.0f, 0.0f, 0.0f};  // w, x, y, z
  std::array<float, 3> velocity{};
  std::array<float, 3> angular_velocity{};

  bool operator==(const StateFrame&) const = default;
};

using FrameBytes = std::array<std::uint8_t, kFrameSize>;

enum class DecodeError { kNone, kShortBuffer, kBadMagic, kBadVersion, kBadMessageType, kOversized, kMalformed };

std::string_view toString(DecodeError e);

struct DecodeResult {
  DecodeError error = DecodeError::kNone;
  StateFrame frame;
  bool quaternion_suspect = false;  // norm outside [0.99, 1.01]

  bool ok() const { return error == DecodeError::kNone; }
};

/// Little-endian fixed layout: magic, version, type, seq, timestamp, 13 floats.
FrameBytes encode(const StateFrame& frame);
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Self-describing text encoding used as the heavyweight comparison point.
std::string encodeVerbose(const StateFrame& frame);
DecodeResult decodeVerbose(std::string_view text);

enum class Codec { kLcp, kVerbose };
enum class TransportKind { kLoopback, kUdp };

std::string_view toString(Codec c);
std::string_view toString(TransportKind t);
std::optional<Codec> parseCodec(std::string_view s);
std::optional<TransportKind> parseTransport(std::string_view s);

std::vector<std::uint8_t> encodeWith(Codec codec, const StateFrame& frame);
DecodeResult decodeWith(Codec codec, std::span<const std::uint8_t> bytes);

/// Raised when a socket cannot be created, bound or used.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Serial link between publisher and consumer on the in-process transport.
struct LinkModel {
  double bandwidth_bps = 2.0e6;     // 0 means unlimited
  double propagation_s = 50.0e-6;
  double codec_ns_per_byte = 2.0;   // modelled encode/decode cost on the virtual clock
};

struct LatencyBenchConfig {
  double rate_hz = 200.0;
  double duration_s = 10.0;
  double consumer_rate_hz = 1000.0;  // staleness sampling ticks
  Codec codec = Codec::kLcp;
  TransportKind transport = TransportKind::kLoopback;
  LinkModel link;
  /// Publisher skips the middle frame of every block of drop_period frames
  /// (0 disables).
  std::uint32_t drop_period = 0;
  /// Timestamps come from a virtual clock, making the report reproducible.
  bool deterministic = false;
  std::uint16_t udp_port = 0;  // 0 picks an ephemeral port

  void validate() const;
};

struct LatencySample {
  std::uint32_t seq = 0;
  std::uint64_t send_ns = 0;
  std::uint64_t recv_ns = 0;
  std::uint64_t latencyNs() const { return recv_ns - send_ns; }
};

struct StalenessSample {
  std::uint64_t tick_ns = 0;
  std::uint64_t age_ns = 0;
};

struct LatencyReport {
  double rate_hz = 0.0;
  std::size_t bytes_per_frame = 0;
  std::uint32_t frames_sent = 0;
  std::uint32_t frames_dropped = 0;  // skipped by the drop schedule
  std::uint32_t frames_received = 0;
  std::uint32_t decode_errors = 0;
  std::uint32_t seq_gaps = 0;        // missing sequence numbers seen by the consumer
  std::vector<LatencySample> samples;
  std::vector<StalenessSample> staleness;

  double medianLatencySeconds() const;
  double medianStalenessSeconds() const;
};

/// Whether the drop schedule skips frame `seq`; the last frame of a block is
/// never dropped, so every drop is visible as a gap.
bool scheduledDrop(std::uint32_t seq, std::uint32_t drop_period);

/// Synthetic smooth trajectory used as the published state stream.
StateFrame syntheticState(std::uint32_t seq, double t);

LatencyReport latencyBench(const LatencyBenchConfig& cfg);

std::string latencyCsvHeader();
void writeLatencyCsv(std::ostream& out, const LatencyReport& report);
void writeStalenessCsv(std::ostream& out, const LatencyReport& report);

/// Datagram socket bound to 127.0.0.1.
class UdpEndpoint {
 public:
  explicit UdpEndpoint(std::uint16_t port = 0);
  ~UdpEndpoint();
  UdpEndpoint(const UdpEndpoint&) = delete;
  UdpEndpoint& operator=(const UdpEndpoint&) = delete;

  std::uint16_t port() const { return port_; }
  void sendTo(std::uint16_t port, std::span<const std::uint8_t> bytes);
  /// Waits up to `timeout`; empty when nothing arrived.
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::nanoseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace juggle::lcp
