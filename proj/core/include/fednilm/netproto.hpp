#pragma once

// Multi-process federation transport. Length-prefixed binary framing over a
// reliable byte stream (TCP):
//
//   offset  size  field
//   0       4     magic "FNLM"
//   4       1     version 0x01
//   5       1     msg_type
//   6       4     payload_len, little-endian unsigned
//   10      n     payload
//   10+n    4     crc32 of the payload, little-endian
//
// Message payloads (all integers/floats little-endian):
//   HELLO      client_id u32, n_k u64, spec_hash u64
//   GLOBAL     round u32, lr f64, params (spec_hash u64, count u64, f32[count])
//   UPDATE     round u32, client_id u32, n_k u64, mean_train_loss f64, params
//   ROUND_DONE round u32, global_digest u64
//   SHUTDOWN   reason_code u32
//
// The params block is byte-identical to a checkpoint body, so one
// serialization covers disk and wire.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fednilm/fedavg.hpp"
#include "fednilm/model.hpp"

namespace fednilm::netproto {

constexpr std::uint8_t kVersion = 0x01;
constexpr char kMagic[5] = "FNLM";
constexpr std::size_t kHeaderLen = 10;
constexpr std::size_t kTrailerLen = 4;

enum class MsgType : std::uint8_t {
  hello = 1,
  global = 2,
  update = 3,
  round_done = 4,
  shutdown = 5,
};

struct Hello {
  std::uint32_t client_id = 0;
  std::uint64_t n_k = 0;
  std::uint64_t spec_hash = 0;
};

struct Global {
  std::uint32_t round = 0;
  double lr = 0.0;
  ParameterVector params;
};

struct Update {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint64_t n_k = 0;
  double mean_train_loss = 0.0;
  ParameterVector params;
};

struct RoundDone {
  std::uint32_t round = 0;
  std::uint64_t global_digest = 0;
};

enum class ShutdownReason : std::uint32_t {
  finished = 0,
  duplicate_client = 1,
  spec_mismatch = 2,
  aborted = 3,
};

struct Shutdown {
  std::uint32_t reason_code = 0;
};

using Message = std::variant<Hello, Global, Update, RoundDone, Shutdown>;

std::vector<std::uint8_t> encode_frame(const Message& msg);

enum class DecodeStatus {
  ok,
  need_more,        // incomplete frame; feed more bytes
  bad_magic,        // fatal for the connection
  bad_version,
  bad_type,
  bad_crc,
  bad_payload,      // frame-level ok, payload malformed for its type
};

struct DecodeResult {
  DecodeStatus status = DecodeStatus::need_more;
  std::optional<Message> message;
  std::size_t consumed = 0;  // bytes to drop from the stream buffer
};

// Attempts to decode one frame from the front of `buffer`. On ok, consumed
// is the full frame length; on fatal statuses consumed is 0 and the
// connection should be dropped.
DecodeResult decode_frame(std::span<const std::uint8_t> buffer);

const char* decode_status_name(DecodeStatus s);

struct ServeOptions {
  std::string bind_host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  ArchitectureSpec spec;
  FederationConfig cfg;
  // Called once the listener is up, with the actual bound port.
  std::function<void(std::uint16_t)> on_listening;
  RoundSink on_round;
};

struct ServeResult {
  ParameterVector final_params;
  std::vector<RoundRecord> records;
};

// Coordinator: waits for K HELLOs with the expected spec hash, then per
// round sends GLOBAL to every client, collects K UPDATEs, aggregates and
// emits ROUND_DONE; after R rounds sends SHUTDOWN. The coordinator holds no
// training data. A client disconnect or protocol violation mid-federation
// aborts the run.
ServeResult serve(const ServeOptions& opts);

struct ClientOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  int client_id = 0;
  std::shared_ptr<const WindowedDataset> dataset;
  ArchitectureSpec spec;
  FederationConfig cfg;
};

struct ClientRunResult {
  int rounds_trained = 0;
  ShutdownReason reason = ShutdownReason::finished;
};

// Worker: HELLO, then {GLOBAL -> local_update -> UPDATE} until SHUTDOWN.
// Training is bit-identical to the in-process engine given the same seeds.
ClientRunResult client_run(const ClientOptions& opts);

}  // namespace fednilm::netproto
