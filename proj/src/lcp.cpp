#include "juggle/lcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "json.hpp"

namespace juggle::lcp {

namespace {

void putU32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void putU64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t getU32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t getU64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <std::size_t N>
std::uint8_t* putFloats(std::uint8_t* p, const std::array<float, N>& a) {
  for (float f : a) {
    putU32(p, std::bit_cast<std::uint32_t>(f));
    p += 4;
  }
  return p;
}

template <std::size_t N>
const std::uint8_t* getFloats(const std::uint8_t* p, std::array<float, N>& a) {
  for (float& f : a) {
    f = std::bit_cast<float>(getU32(p));
    p += 4;
  }
  return p;
}

bool quaternionSuspect(const std::array<float, 4>& q) {
  double n2 = 0.0;
  for (float c : q) n2 += static_cast<double>(c) * c;
  const double n = std::sqrt(n2);
  return !(n >= 0.99 && n <= 1.01);
}

}  // namespace

std::string_view toString(DecodeError e) {
  switch (e) {
    case DecodeError::kNone: return "ok";
    case DecodeError::kShortBuffer: return "short_buffer";
    case DecodeError::kBadMagic: return "bad_magic";
    case DecodeError::kBadVersion: return "bad_version";
    case DecodeError::kBadMessageType: return "bad_message_type";
    case DecodeError::kOversized: return "oversized";
    case DecodeError::kMalformed: return "malformed";
  }
  return "unknown";
}

FrameBytes encode(const StateFrame& frame) {
  FrameBytes out{};
  out[0] = kMagic0;
  out[1] = kMagic1;
  out[2] = kVersion;
  out[3] = frame.msg_type;
  putU32(out.data() + 4, frame.seq);
  putU64(out.data() + 8, frame.timestamp_ns);
  std::uint8_t* p = out.data() + 16;
  p = putFloats(p, frame.position);
  p = putFloats(p, frame.quaternion);
  p = putFloats(p, frame.velocity);
  putFloats(p, frame.angular_velocity);
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  // Header fields are checked as soon as they are available so that a
  // truncated frame with a foreign header still reports the header problem.
  if (bytes.size() < 2) {
    r.error = DecodeError::kShortBuffer;
    return r;
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) {
    r.error = DecodeError::kBadMagic;
    return r;
  }
  if (bytes.size() >= 3 && bytes[2] != kVersion) {
    r.error = DecodeError::kBadVersion;
    return r;
  }
  if (bytes.size() < kFrameSize) {
    r.error = DecodeError::kShortBuffer;
    return r;
  }
  if (bytes[3] != kPoseTwist) {
    r.error = DecodeError::kBadMessageType;
    return r;
  }
  if (bytes.size() > kFrameSize) {
    r.error = DecodeError::kOversized;
    return r;
  }
  const std::uint8_t* p = bytes.data();
  r.frame.msg_type = p[3];
  r.frame.seq = getU32(p + 4);
  r.frame.timestamp_ns = getU64(p + 8);
  p += 16;
  p = getFloats(p, r.frame.position);
  p = getFloats(p, r.frame.quaternion);
  p = getFloats(p, r.frame.velocity);
  getFloats(p, r.frame.angular_velocity);
  r.quaternion_suspect = quaternionSuspect(r.frame.quaternion);
  return r;
}

// ------------------------------------------------------------ verbose codec

namespace {

template <std::size_t N>
nlohmann::ordered_json namedVector(const std::array<float, N>& a, const char* const (&names)[N]) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < N; ++i) j[names[i]] = static_cast<double>(a[i]);
  return j;
}

template <std::size_t N>
void readNamedVector(const nlohmann::json& j, std::array<float, N>& a, const char* const (&names)[N]) {
  for (std::size_t i = 0; i < N; ++i) a[i] = static_cast<float>(j.at(names[i]).template get<double>());
}

constexpr const char* kXyz[3] = {"x", "y", "z"};
constexpr const char* kWxyz[4] = {"w", "x", "y", "z"};

}  // namespace

std::string encodeVerbose(const StateFrame& frame) {
  nlohmann::ordered_json j;
  j["magic"] = "LC";
  j["version"] = kVersion;
  j["message_type"] = frame.msg_type == kPoseTwist ? "pose_twist" : "unknown";
  j["sequence_number"] = frame.seq;
  j["timestamp_nanoseconds"] = frame.timestamp_ns;
  j["position_meters"] = namedVector(frame.position, kXyz);
  j["orientation_quaternion"] = namedVector(frame.quaternion, kWxyz);
  j["linear_velocity_meters_per_second"] = namedVector(frame.velocity, kXyz);
  j["angular_velocity_radians_per_second"] = namedVector(frame.angular_velocity, kXyz);
  return j.dump(4);
}

DecodeResult decodeVerbose(std::string_view text) {
  DecodeResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("magic").get<std::string>() != "LC") {
      r.error = DecodeError::kBadMagic;
      return r;
    }
    if (j.at("version").get<int>() != kVersion) {
      r.error = DecodeError::kBadVersion;
      return r;
    }
    if (j.at("message_type").get<std::string>() != "pose_twist") {
      r.error = DecodeError::kBadMessageType;
      return r;
    }
    r.frame.msg_type = kPoseTwist;
    r.frame.seq = j.at("sequence_number").get<std::uint32_t>();
    r.frame.timestamp_ns = j.at("timestamp_nanoseconds").get<std::uint64_t>();
    readNamedVector(j.at("position_meters"), r.frame.position, kXyz);
    readNamedVector(j.at("orientation_quaternion"), r.frame.quaternion, kWxyz);
    readNamedVector(j.at("linear_velocity_meters_per_second"), r.frame.velocity, kXyz);
    readNamedVector(j.at("angular_velocity_radians_per_second"), r.frame.angular_velocity, kXyz);
  } catch (const nlohmann::json::exception&) {
    r = DecodeResult{};
    r.error = DecodeError::kMalformed;
    return r;
  }
  r.quaternion_suspect = quaternionSuspect(r.frame.quaternion);
  return r;
}

std::string_view toString(Codec c) { return c == Codec::kLcp ? "lcp" : "verbose"; }
std::string_view toString(TransportKind t) { return t == TransportKind::kLoopback ? "loopback" : "udp"; }

std::optional<Codec> parseCodec(std::string_view s) {
  if (s == "lcp") return Codec::kLcp;
  if (s == "verbose") return Codec::kVerbose;
  return std::nullopt;
}

std::optional<TransportKind> parseTransport(std::string_view s) {
  if (s == "loopback") return TransportKind::kLoopback;
  if (s == "udp") return TransportKind::kUdp;
  return std::nullopt;
}

std::vector<std::uint8_t> encodeWith(Codec codec, const StateFrame& frame) {
  if (codec == Codec::kLcp) {
    const FrameBytes b = encode(frame);
    return {b.begin(), b.end()};
  }
  const std::string s = encodeVerbose(frame);
  return {s.begin(), s.end()};
}

DecodeResult decodeWith(Codec codec, std::span<const std::uint8_t> bytes) {
  if (codec == Codec::kLcp) return decode(bytes);
  return decodeVerbose({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

// ------------------------------------------------------------------ UDP

UdpEndpoint::UdpEndpoint(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = std::string("bind 127.0.0.1:") + std::to_string(port) + ": " + std::strerror(errno);
    ::close(fd_);
    throw IoError(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

UdpEndpoint::~UdpEndpoint() {
  if (fd_ >= 0) ::close(fd_);
}

void UdpEndpoint::sendTo(std::uint16_t port, std::span<const std::uint8_t> bytes) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (n < 0 || static_cast<std::size_t>(n) != bytes.size()) {
    throw IoError(std::string("sendto: ") + std::strerror(errno));
  }
}

std::optional<std::vector<std::uint8_t>> UdpEndpoint::receive(std::chrono::nanoseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const auto ns = std::max<std::int64_t>(timeout.count(), 0);
  const timespec ts{static_cast<time_t>(ns / 1'000'000'000), static_cast<long>(ns % 1'000'000'000)};
  const int rc = ::ppoll(&pfd, 1, &ts, nullptr);
  if (rc < 0) {
    if (errno == EINTR) return std::nullopt;
    throw IoError(std::string("poll: ") + std::strerror(errno));
  }
  if (rc == 0) return std::nullopt;
  std::vector<std::uint8_t> buf(65536);
  const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
  if (n < 0) throw IoError(std::string("recv: ") + std::strerror(errno));
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

// ---------------------------------------------------------------- bench

void LatencyBenchConfig::validate() const {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("latency bench rate must be > 0");
  if (!(duration_s > 0.0)) throw std::invalid_argument("latency bench duration must be > 0");
  if (!(consumer_rate_hz > 0.0)) throw std::invalid_argument("latency bench consumer rate must be > 0");
  if (!(link.bandwidth_bps >= 0.0 && link.propagation_s >= 0.0 && link.codec_ns_per_byte >= 0.0)) {
    throw std::invalid_argument("latency bench link parameters must be >= 0");
  }
  if (drop_period == 1) throw std::invalid_argument("latency bench drop period 1 would drop every frame");
}

bool scheduledDrop(std::uint32_t seq, std::uint32_t drop_period) {
  return drop_period > 0 && seq % drop_period == drop_period / 2;
}

StateFrame syntheticState(std::uint32_t seq, double t) {
  StateFrame f;
  f.seq = seq;
  const double w = std::numbers::pi;
  f.position = {static_cast<float>(0.3 * std::sin(w * t)), static_cast<float>(0.3 * std::cos(w * t)),
                static_cast<float>(1.0 + 0.1 * std::sin(2.0 * w * t))};
  const double yaw = 0.2 * std::sin(w * t);
  f.quaternion = {static_cast<float>(std::cos(0.5 * yaw)), 0.0f, 0.0f, static_cast<float>(std::sin(0.5 * yaw))};
  f.velocity = {static_cast<float>(0.3 * w * std::cos(w * t)), static_cast<float>(-0.3 * w * std::sin(w * t)),
                static_cast<float>(0.2 * w * std::cos(2.0 * w * t))};
  f.angular_velocity = {0.0f, 0.0f, static_cast<float>(0.2 * w * std::cos(w * t))};
  return f;
}

double LatencyReport::medianLatencySeconds() const {
  if (samples.empty()) return std::nan("");
  std::vector<std::uint64_t> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.latencyNs());
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2] * 1e-9;
}

double LatencyReport::medianStalenessSeconds() const {
  if (staleness.empty()) return std::nan("");
  std::vector<std::uint64_t> v;
  v.reserve(staleness.size());
  for (const auto& s : staleness) v.push_back(s.age_ns);
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2] * 1e-9;
}

namespace {

using SteadyClock = std::chrono::steady_clock;

/// Decodes arrivals and tracks the newest state for staleness ticks.
class Consumer {
 public:
  Consumer(Codec codec, LatencyReport& report) : codec_(codec), report_(report) {}

  DecodeResult decode(std::span<const std::uint8_t> bytes) const { return decodeWith(codec_, bytes); }

  void onBytes(std::span<const std::uint8_t> bytes, std::uint64_t recv_ns) { onDecoded(decode(bytes), recv_ns); }

  /// recv_ns is taken after decoding so that the codec cost counts as latency.
  void onDecoded(const DecodeResult& r, std::uint64_t recv_ns) {
    if (!r.ok()) {
      ++report_.decode_errors;
      return;
    }
    ++report_.frames_received;
    const std::uint32_t seq = r.frame.seq;
    if (have_newest_ && seq > newest_seq_ + 1) report_.seq_gaps += seq - newest_seq_ - 1;
    if (!have_newest_ && seq > 0) report_.seq_gaps += seq;
    if (!have_newest_ || seq > newest_seq_) {
      newest_seq_ = seq;
      newest_send_ns_ = r.frame.timestamp_ns;
      have_newest_ = true;
    }
    report_.samples.push_back({seq, r.frame.timestamp_ns, std::max(recv_ns, r.frame.timestamp_ns)});
  }

  void onTick(std::uint64_t tick_ns, std::uint64_t now_ns) {
    if (!have_newest_) return;
    report_.staleness.push_back({tick_ns, now_ns > newest_send_ns_ ? now_ns - newest_send_ns_ : 0});
  }

 private:
  Codec codec_;
  LatencyReport& report_;
  bool have_newest_ = false;
  std::uint32_t newest_seq_ = 0;
  std::uint64_t newest_send_ns_ = 0;
};

std::uint64_t periodNs(double hz) { return static_cast<std::uint64_t>(std::llround(1e9 / hz)); }

std::uint32_t frameCount(const LatencyBenchConfig& cfg) {
  return static_cast<std::uint32_t>(std::llround(cfg.duration_s * cfg.rate_hz));
}

double transmitNs(const LinkModel& link, std::size_t bytes) {
  return link.bandwidth_bps > 0.0 ? bytes * 8.0 / link.bandwidth_bps * 1e9 : 0.0;
}

// Virtual clock: publication instants are exact multiples of the period and
// codec and link costs are modelled, so the report depends only on cfg.
LatencyReport benchVirtual(const LatencyBenchConfig& cfg) {
  LatencyReport report;
  report.rate_hz = cfg.rate_hz;
  Consumer consumer(cfg.codec, report);
  const std::uint64_t period = periodNs(cfg.rate_hz);
  const std::uint64_t tick_period = periodNs(cfg.consumer_rate_hz);
  const std::uint64_t end_ns = static_cast<std::uint64_t>(std::llround(cfg.duration_s * 1e9));

  std::optional<UdpEndpoint> rx, tx;
  if (cfg.transport == TransportKind::kUdp) {
    rx.emplace(cfg.udp_port);
    tx.emplace(0);
  }

  struct Arrival {
    std::vector<std::uint8_t> bytes;
    std::uint64_t recv_ns;
  };
  std::deque<Arrival> arrivals;
  double link_free = 0.0;
  const std::uint32_t n = frameCount(cfg);
  for (std::uint32_t k = 0; k < n; ++k) {
    if (scheduledDrop(k, cfg.drop_period)) {
      ++report.frames_dropped;
      continue;
    }
    const std::uint64_t send_ns = k * period;
    StateFrame f = syntheticState(k, send_ns * 1e-9);
    f.timestamp_ns = send_ns;
    std::vector<std::uint8_t> bytes = encodeWith(cfg.codec, f);
    report.bytes_per_frame = std::max(report.bytes_per_frame, bytes.size());
    const double codec_ns = cfg.link.codec_ns_per_byte * bytes.size();
    const double depart = std::max(send_ns + codec_ns, link_free);
    link_free = depart + transmitNs(cfg.link, bytes.size());
    const double recv = link_free + cfg.link.propagation_s * 1e9 + codec_ns;
    ++report.frames_sent;
    if (tx) {
      tx->sendTo(rx->port(), bytes);
      auto got = rx->receive(std::chrono::milliseconds(200));
      if (!got) continue;  // lost on the host; shows up as a sequence gap
      bytes = std::move(*got);
    }
    arrivals.push_back({std::move(bytes), static_cast<std::uint64_t>(std::llround(recv))});
  }

  for (std::uint64_t tick = 0; tick < end_ns || !arrivals.empty(); tick += tick_period) {
    while (!arrivals.empty() && arrivals.front().recv_ns <= tick) {
      consumer.onBytes(arrivals.front().bytes, arrivals.front().recv_ns);
      arrivals.pop_front();
    }
    if (tick < end_ns) consumer.onTick(tick, tick);
  }
  return report;
}

std::uint64_t elapsedNs(SteadyClock::time_point start) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(SteadyClock::now() - start).count());
}

// Real clock, in-process queue standing in for the serial link.
LatencyReport benchLoopbackRealtime(const LatencyBenchConfig& cfg) {
  LatencyReport report;
  report.rate_hz = cfg.rate_hz;
  Consumer consumer(cfg.codec, report);
  const std::uint64_t period = periodNs(cfg.rate_hz);
  const std::uint64_t tick_period = periodNs(cfg.consumer_rate_hz);
  const std::uint64_t end_ns = static_cast<std::uint64_t>(std::llround(cfg.duration_s * 1e9));
  const std::uint32_t n = frameCount(cfg);

  struct InFlight {
    std::vector<std::uint8_t> bytes;
    std::uint64_t deliver_ns;
  };
  std::mutex m;
  std::condition_variable cv;
  std::deque<InFlight> queue;
  bool done = false;
  std::uint32_t sent = 0, dropped = 0;
  std::size_t max_bytes = 0;
  const auto start = SteadyClock::now();

  std::jthread publisher([&] {
    double link_free = 0.0;
    for (std::uint32_t k = 0; k < n; ++k) {
      std::this_thread::sleep_until(start + std::chrono::nanoseconds(k * period));
      if (scheduledDrop(k, cfg.drop_period)) {
        ++dropped;
        continue;
      }
      const std::uint64_t send_ns = elapsedNs(start);
      StateFrame f = syntheticState(k, send_ns * 1e-9);
      f.timestamp_ns = send_ns;
      std::vector<std::uint8_t> bytes = encodeWith(cfg.codec, f);
      max_bytes = std::max(max_bytes, bytes.size());
      const double depart = std::max<double>(elapsedNs(start), link_free);
      link_free = depart + transmitNs(cfg.link, bytes.size());
      const auto deliver = static_cast<std::uint64_t>(link_free + cfg.link.propagation_s * 1e9);
      {
        std::lock_guard lk(m);
        queue.push_back({std::move(bytes), deliver});
        ++sent;
      }
      cv.notify_one();
    }
    {
      std::lock_guard lk(m);
      done = true;
    }
    cv.notify_one();
  });

  std::uint64_t next_tick = 0;
  std::unique_lock lk(m);
  while (true) {
    const std::uint64_t now = elapsedNs(start);
    if (!queue.empty() && queue.front().deliver_ns <= now) {
      InFlight item = std::move(queue.front());
      queue.pop_front();
      lk.unlock();
      const DecodeResult r = consumer.decode(item.bytes);
      consumer.onDecoded(r, elapsedNs(start));
      lk.lock();
      continue;
    }
    if (next_tick < end_ns && now >= next_tick) {
      lk.unlock();
      consumer.onTick(next_tick, now);
      lk.lock();
      next_tick += tick_period;
      continue;
    }
    if (done && queue.empty() && next_tick >= end_ns) break;
    std::uint64_t target = next_tick < end_ns ? next_tick : end_ns + 1'000'000'000;
    if (!queue.empty()) target = std::min(target, queue.front().deliver_ns);
    cv.wait_until(lk, start + std::chrono::nanoseconds(target));
  }
  lk.unlock();
  publisher.join();
  report.frames_sent = sent;
  report.frames_dropped = dropped;
  report.bytes_per_frame = max_bytes;
  return report;
}

// Real clock over a localhost datagram socket.
LatencyReport benchUdpRealtime(const LatencyBenchConfig& cfg) {
  LatencyReport report;
  report.rate_hz = cfg.rate_hz;
  Consumer consumer(cfg.codec, report);
  const std::uint64_t period = periodNs(cfg.rate_hz);
  const std::uint64_t tick_period = periodNs(cfg.consumer_rate_hz);
  const std::uint64_t end_ns = static_cast<std::uint64_t>(std::llround(cfg.duration_s * 1e9));
  const std::uint32_t n = frameCount(cfg);

  UdpEndpoint rx(cfg.udp_port);
  UdpEndpoint tx(0);
  std::atomic<bool> done = false;
  std::uint32_t sent = 0, dropped = 0;
  std::size_t max_bytes = 0;
  std::exception_ptr publisher_error;
  const auto start = SteadyClock::now();

  std::jthread publisher([&] {
    try {
      for (std::uint32_t k = 0; k < n; ++k) {
        std::this_thread::sleep_until(start + std::chrono::nanoseconds(k * period));
        if (scheduledDrop(k, cfg.drop_period)) {
          ++dropped;
          continue;
        }
        const std::uint64_t send_ns = elapsedNs(start);
        StateFrame f = syntheticState(k, send_ns * 1e-9);
        f.timestamp_ns = send_ns;
        const std::vector<std::uint8_t> bytes = encodeWith(cfg.codec, f);
        max_bytes = std::max(max_bytes, bytes.size());
        tx.sendTo(rx.port(), bytes);
        ++sent;
      }
    } catch (...) {
      publisher_error = std::current_exception();
    }
    done = true;
  });

  std::uint64_t next_tick = 0;
  std::uint64_t quiet_since = 0;
  while (true) {
    const std::uint64_t now = elapsedNs(start);
    if (next_tick < end_ns && now >= next_tick) {
      consumer.onTick(next_tick, now);
      next_tick += tick_period;
      continue;
    }
    const std::uint64_t wait = next_tick < end_ns ? next_tick - now : 20'000'000;
    if (auto bytes = rx.receive(std::chrono::nanoseconds(wait))) {
      const DecodeResult r = consumer.decode(*bytes);
      consumer.onDecoded(r, elapsedNs(start));
      quiet_since = elapsedNs(start);
      continue;
    }
    if (done && next_tick >= end_ns) {
      if (quiet_since == 0) quiet_since = now;
      if (elapsedNs(start) - quiet_since > 50'000'000) break;
    }
  }
  publisher.join();
  if (publisher_error) std::rethrow_exception(publisher_error);
  report.frames_sent = sent;
  report.frames_dropped = dropped;
  report.bytes_per_frame = max_bytes;
  return report;
}

}  // namespace

LatencyReport latencyBench(const LatencyBenchConfig& cfg) {
  cfg.validate();
  if (cfg.deterministic) return benchVirtual(cfg);
  if (cfg.transport == TransportKind::kUdp) return benchUdpRealtime(cfg);
  return benchLoopbackRealtime(cfg);
}

std::string latencyCsvHeader() { return "seq,send_ns,recv_ns,latency_ns"; }

void writeLatencyCsv(std::ostream& out, const LatencyReport& report) {
  out << latencyCsvHeader() << '\n';
  for (const auto& s : report.samples) {
    out << s.seq << ',' << s.send_ns << ',' << s.recv_ns << ',' << s.latencyNs() << '\n';
  }
}

void writeStalenessCsv(std::ostream& out, const LatencyReport& report) {
  out << "tick_ns,staleness_ns\n";
  for (const auto& s : report.staleness) out << s.tick_ns << ',' << s.age_ns << '\n';
}

}  // namespace juggle::lcp
