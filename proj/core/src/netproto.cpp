#include "fednilm/netproto.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "fednilm/checkpoint.hpp"
#include "fednilm/hash.hpp"
#include "fednilm/wire.hpp"

namespace fednilm::netproto {

namespace {

std::uint8_t msg_type_of(const Message& msg) {
  return static_cast<std::uint8_t>(std::visit(
      [](const auto& m) -> MsgType {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) return MsgType::hello;
        else if constexpr (std::is_same_v<T, Global>) return MsgType::global;
        else if constexpr (std::is_same_v<T, Update>) return MsgType::update;
        else if constexpr (std::is_same_v<T, RoundDone>) return MsgType::round_done;
        else return MsgType::shutdown;
      },
      msg));
}

std::vector<std::uint8_t> encode_payload(const Message& msg) {
  std::vector<std::uint8_t> p;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          wire::put_u32(p, m.client_id);
          wire::put_u64(p, m.n_k);
          wire::put_u64(p, m.spec_hash);
        } else if constexpr (std::is_same_v<T, Global>) {
          wire::put_u32(p, m.round);
          wire::put_f64(p, m.lr);
          const auto body = encode_params(m.params);
          p.insert(p.end(), body.begin(), body.end());
        } else if constexpr (std::is_same_v<T, Update>) {
          wire::put_u32(p, m.round);
          wire::put_u32(p, m.client_id);
          wire::put_u64(p, m.n_k);
          wire::put_f64(p, m.mean_train_loss);
          const auto body = encode_params(m.params);
          p.insert(p.end(), body.begin(), body.end());
        } else if constexpr (std::is_same_v<T, RoundDone>) {
          wire::put_u32(p, m.round);
          wire::put_u64(p, m.global_digest);
        } else {
          wire::put_u32(p, m.reason_code);
        }
      },
      msg);
  return p;
}

// Throws ProtocolError when the payload does not parse exactly for the type.
Message parse_payload(MsgType type, std::span<const std::uint8_t> p) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (p.size() - pos < n) {
      throw ProtocolError("payload truncated for its message type");
    }
  };
  auto take_params = [&]() {
    need(16);
    std::size_t peek = pos + 8;
    const std::uint64_t count = wire::get_u64(p, peek);
    if (count > (p.size() - pos - 16) / 4) {
      throw ProtocolError("parameter count exceeds the payload");
    }
    const std::size_t total = 16 + static_cast<std::size_t>(count) * 4;
    auto pv = decode_params(p.subspan(pos, total));
    pos += total;
    return pv;
  };
  Message out;
  switch (type) {
    case MsgType::hello: {
      Hello m;
      need(20);
      m.client_id = wire::get_u32(p, pos);
      m.n_k = wire::get_u64(p, pos);
      m.spec_hash = wire::get_u64(p, pos);
      out = m;
      break;
    }
    case MsgType::global: {
      Global m;
      need(12);
      m.round = wire::get_u32(p, pos);
      m.lr = wire::get_f64(p, pos);
      m.params = take_params();
      out = std::move(m);
      break;
    }
    case MsgType::update: {
      Update m;
      need(24);
      m.round = wire::get_u32(p, pos);
      m.client_id = wire::get_u32(p, pos);
      m.n_k = wire::get_u64(p, pos);
      m.mean_train_loss = wire::get_f64(p, pos);
      m.params = take_params();
      out = std::move(m);
      break;
    }
    case MsgType::round_done: {
      RoundDone m;
      need(12);
      m.round = wire::get_u32(p, pos);
      m.global_digest = wire::get_u64(p, pos);
      out = m;
      break;
    }
    case MsgType::shutdown: {
      Shutdown m;
      need(4);
      m.reason_code = wire::get_u32(p, pos);
      out = m;
      break;
    }
    default:
      throw ProtocolError("unknown message type");
  }
  if (pos != p.size()) {
    throw ProtocolError("payload has trailing bytes");
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Message& msg) {
  const auto payload = encode_payload(msg);
  if (payload.size() > 0xFFFFFFFFull) {
    throw ProtocolError("payload exceeds the 32-bit frame limit");
  }
  std::vector<std::uint8_t> frame;
  frame.reserve(kHeaderLen + payload.size() + kTrailerLen);
  for (int i = 0; i < 4; ++i) frame.push_back(static_cast<std::uint8_t>(kMagic[i]));
  frame.push_back(kVersion);
  frame.push_back(msg_type_of(msg));
  wire::put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  wire::put_u32(frame, crc32(payload));
  return frame;
}

DecodeResult decode_frame(std::span<const std::uint8_t> buffer) {
  DecodeResult res;
  if (buffer.size() < kHeaderLen) {
    res.status = DecodeStatus::need_more;
    return res;
  }
  if (std::memcmp(buffer.data(), kMagic, 4) != 0) {
    res.status = DecodeStatus::bad_magic;
    return res;
  }
  if (buffer[4] != kVersion) {
    res.status = DecodeStatus::bad_version;
    return res;
  }
  const std::uint8_t type_byte = buffer[5];
  if (type_byte < 1 || type_byte > 5) {
    res.status = DecodeStatus::bad_type;
    return res;
  }
  std::size_t pos = 6;
  const std::uint32_t payload_len = wire::get_u32(buffer, pos);
  const std::size_t total =
      kHeaderLen + static_cast<std::size_t>(payload_len) + kTrailerLen;
  if (buffer.size() < total) {
    res.status = DecodeStatus::need_more;
    return res;
  }
  const auto payload = buffer.subspan(kHeaderLen, payload_len);
  std::size_t crc_pos = kHeaderLen + payload_len;
  const std::uint32_t declared_crc = wire::get_u32(buffer, crc_pos);
  if (crc32(payload) != declared_crc) {
    res.status = DecodeStatus::bad_crc;
    return res;
  }
  try {
    res.message = parse_payload(static_cast<MsgType>(type_byte), payload);
  } catch (const ProtocolError&) {
    res.status = DecodeStatus::bad_payload;
    return res;
  }
  res.status = DecodeStatus::ok;
  res.consumed = total;
  return res;
}

const char* decode_status_name(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::ok: return "ok";
    case DecodeStatus::need_more: return "need_more";
    case DecodeStatus::bad_magic: return "bad_magic";
    case DecodeStatus::bad_version: return "bad_version";
    case DecodeStatus::bad_type: return "bad_type";
    case DecodeStatus::bad_crc: return "bad_crc";
    case DecodeStatus::bad_payload: return "bad_payload";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Socket plumbing
// ---------------------------------------------------------------------------

namespace {

struct Socket {
  int fd = -1;

  Socket() = default;
  explicit Socket(int f) : fd(f) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd(other.fd) { other.fd = -1; }
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close_fd();
      fd = other.fd;
      other.fd = -1;
    }
    return *this;
  }
  ~Socket() { close_fd(); }

  void shutdown_fd() {
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }

  void close_fd() {
    if (fd >= 0) {
      ::close(fd);
      fd = -1;
    }
  }
};

void send_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n =
        ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      throw ProtocolError("connection closed while sending");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void send_message(int fd, const Message& msg, std::uint64_t* bytes_counter = nullptr) {
  const auto frame = encode_frame(msg);
  send_all(fd, frame);
  if (bytes_counter != nullptr) *bytes_counter += frame.size();
}

// Accumulating reader: returns one decoded message per call, or nullopt on
// clean EOF at a frame boundary. Corrupt input throws ProtocolError.
class FrameReader {
 public:
  explicit FrameReader(int fd) : fd_(fd) {}

  std::optional<Message> next(std::uint64_t* frame_bytes = nullptr) {
    for (;;) {
      auto res = decode_frame(buf_);
      if (res.status == DecodeStatus::ok) {
        buf_.erase(buf_.begin(),
                   buf_.begin() + static_cast<std::ptrdiff_t>(res.consumed));
        if (frame_bytes != nullptr) *frame_bytes = res.consumed;
        return std::move(res.message);
      }
      if (res.status != DecodeStatus::need_more) {
        throw ProtocolError(std::string("corrupt frame: ") +
                            decode_status_name(res.status));
      }
      std::uint8_t chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n == 0) {
        if (buf_.empty()) return std::nullopt;
        throw ProtocolError("connection closed mid-frame");
      }
      if (n < 0) {
        throw ProtocolError("recv failed");
      }
      buf_.insert(buf_.end(), chunk, chunk + n);
    }
  }

 private:
  int fd_;
  std::vector<std::uint8_t> buf_;
};

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw ConfigError("bad IPv4 address: " + host);
  }
  return addr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Coordinator
// ---------------------------------------------------------------------------

namespace {

struct Conn {
  Socket sock;
  std::thread reader;
  bool registered = false;
  bool dead = false;
  std::uint32_t client_id = 0;
  std::uint64_t n_k = 0;
};

struct InboundEvent {
  Conn* conn = nullptr;
  std::optional<Message> message;  // nullopt + empty error = clean disconnect
  std::string error;               // non-empty = protocol failure
  std::uint64_t frame_bytes = 0;
};

struct EventQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<InboundEvent> events;

  void push(InboundEvent ev) {
    {
      std::lock_guard<std::mutex> lock(mu);
      events.push_back(std::move(ev));
    }
    cv.notify_one();
  }

  InboundEvent pop() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return !events.empty(); });
    InboundEvent ev = std::move(events.front());
    events.pop_front();
    return ev;
  }
};

}  // namespace

ServeResult serve(const ServeOptions& opts) {
  opts.cfg.validate();
  validate(opts.spec);
  const std::size_t expected_clients =
      static_cast<std::size_t>(opts.cfg.client_count);
  const std::uint64_t expected_hash = spec_hash(opts.spec);

  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.fd < 0) {
    throw ProtocolError("cannot create listening socket");
  }
  const int one = 1;
  ::setsockopt(listener.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = make_addr(opts.bind_host, opts.port);
  if (::bind(listener.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw ProtocolError("cannot bind " + opts.bind_host + ":" +
                        std::to_string(opts.port));
  }
  if (::listen(listener.fd, static_cast<int>(expected_clients) + 4) != 0) {
    throw ProtocolError("listen failed");
  }
  socklen_t alen = sizeof addr;
  ::getsockname(listener.fd, reinterpret_cast<sockaddr*>(&addr), &alen);
  if (opts.on_listening) opts.on_listening(ntohs(addr.sin_port));

  EventQueue queue;
  std::mutex conns_mu;
  std::vector<std::unique_ptr<Conn>> conns;
  std::uint64_t registration_bytes = 0;

  auto start_reader = [&queue](Conn* conn) {
    conn->reader = std::thread([fd = conn->sock.fd, conn, &queue] {
      FrameReader reader(fd);
      try {
        for (;;) {
          std::uint64_t frame_bytes = 0;
          auto msg = reader.next(&frame_bytes);
          const bool eof = !msg.has_value();
          queue.push({conn, std::move(msg), "", frame_bytes});
          if (eof) return;
        }
      } catch (const std::exception& e) {
        queue.push({conn, std::nullopt, e.what(), 0});
      }
    });
  };

  // Acceptor thread: hands every incoming connection to its own reader.
  // Stopped by shutting down the listener.
  std::thread acceptor([&] {
    for (;;) {
      const int cfd = ::accept(listener.fd, nullptr, nullptr);
      if (cfd < 0) return;
      const int nd = 1;
      ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &nd, sizeof nd);
      auto conn = std::make_unique<Conn>();
      conn->sock = Socket(cfd);
      Conn* raw = conn.get();
      {
        std::lock_guard<std::mutex> lock(conns_mu);
        conns.push_back(std::move(conn));
      }
      start_reader(raw);
    }
  });

  auto stop_acceptor = [&] {
    listener.shutdown_fd();
    if (acceptor.joinable()) acceptor.join();
  };

  auto for_each_conn = [&](auto&& fn) {
    std::lock_guard<std::mutex> lock(conns_mu);
    for (auto& c : conns) fn(*c);
  };

  auto shutdown_all = [&](ShutdownReason reason) {
    for_each_conn([&](Conn& c) {
      if (c.sock.fd < 0 || c.dead || !c.registered) return;
      try {
        send_message(c.sock.fd, Shutdown{static_cast<std::uint32_t>(reason)});
      } catch (...) {
        // connection already gone
      }
    });
  };

  auto join_all = [&] {
    for_each_conn([](Conn& c) { c.sock.shutdown_fd(); });
    for_each_conn([](Conn& c) {
      if (c.reader.joinable()) c.reader.join();
      c.sock.close_fd();
    });
  };

  auto reject = [&](Conn& c, ShutdownReason reason) {
    try {
      send_message(c.sock.fd, Shutdown{static_cast<std::uint32_t>(reason)},
                   &registration_bytes);
    } catch (...) {
    }
    c.sock.shutdown_fd();
    c.dead = true;
  };

  try {
    // Registration: collect K HELLOs with the expected spec hash and
    // distinct client ids. Anything else on a fresh connection is fatal;
    // bad HELLOs are rejected and the slot stays open.
    std::unordered_set<std::uint32_t> seen_ids;
    std::vector<Conn*> active;
    while (active.size() < expected_clients) {
      InboundEvent ev = queue.pop();
      Conn& c = *ev.conn;
      if (!ev.error.empty() || !ev.message.has_value()) {
        if (c.registered) {
          throw TrainingError("federation aborted: client " +
                              std::to_string(c.client_id) +
                              " lost before the first round: " + ev.error);
        }
        c.dead = true;
        continue;  // an unregistered or rejected connection went away
      }
      if (c.dead) continue;
      const auto* hello = std::get_if<Hello>(&*ev.message);
      if (hello == nullptr || c.registered) {
        throw ProtocolError("expected exactly one HELLO per fresh connection");
      }
      registration_bytes += ev.frame_bytes;
      if (hello->spec_hash != expected_hash) {
        reject(c, ShutdownReason::spec_mismatch);
        continue;
      }
      if (hello->n_k == 0 || !seen_ids.insert(hello->client_id).second) {
        reject(c, ShutdownReason::duplicate_client);
        continue;
      }
      c.registered = true;
      c.client_id = hello->client_id;
      c.n_k = hello->n_k;
      active.push_back(&c);
    }
    stop_acceptor();
    std::sort(active.begin(), active.end(),
              [](const Conn* a, const Conn* b) { return a->client_id < b->client_id; });

    // Step 1: initialize the global model. The coordinator holds parameters
    // only, never training data.
    ParameterVector global = init_params<float>(opts.spec, opts.cfg.seed);
    ServeResult result;
    result.records.reserve(static_cast<std::size_t>(opts.cfg.rounds));

    for (int round = 0; round < opts.cfg.rounds; ++round) {
      const auto t0 = std::chrono::steady_clock::now();
      std::uint64_t round_bytes = round == 0 ? registration_bytes : 0;
      const double lr =
          lr_schedule(static_cast<std::uint64_t>(round), opts.cfg.hyper);
      auto send_or_abort = [&](Conn* c, const Message& msg) {
        try {
          send_message(c->sock.fd, msg, &round_bytes);
        } catch (const std::exception& e) {
          throw TrainingError("federation aborted in round " + std::to_string(round) +
                              ": client " + std::to_string(c->client_id) + ": " +
                              e.what());
        }
      };
      for (Conn* c : active) {
        send_or_abort(c, Global{static_cast<std::uint32_t>(round), lr, global});
      }

      // Barrier: aggregation starts only after all K updates arrived.
      std::unordered_map<std::uint32_t, Update> updates;
      while (updates.size() < active.size()) {
        InboundEvent ev = queue.pop();
        Conn& c = *ev.conn;
        if (!c.registered) continue;  // stragglers from rejected connections
        if (!ev.error.empty()) {
          throw TrainingError("federation aborted in round " + std::to_string(round) +
                              ": client " + std::to_string(c.client_id) + ": " +
                              ev.error);
        }
        if (!ev.message.has_value()) {
          throw TrainingError("federation aborted in round " + std::to_string(round) +
                              ": client " + std::to_string(c.client_id) +
                              " disconnected");
        }
        auto* up = std::get_if<Update>(&*ev.message);
        if (up == nullptr) {
          throw TrainingError("federation aborted: unexpected message from client " +
                              std::to_string(c.client_id));
        }
        if (up->round != static_cast<std::uint32_t>(round)) {
          throw TrainingError("federation aborted: client " +
                              std::to_string(up->client_id) + " answered round " +
                              std::to_string(up->round) + " during round " +
                              std::to_string(round));
        }
        if (up->client_id != c.client_id || up->n_k != c.n_k) {
          throw TrainingError("federation aborted: client identity changed mid-run");
        }
        if (up->params.spec_hash != expected_hash) {
          throw TrainingError("federation aborted: update carries a foreign spec hash");
        }
        round_bytes += ev.frame_bytes;
        if (!updates.emplace(up->client_id, std::move(*up)).second) {
          throw TrainingError("federation aborted: duplicate update from client " +
                              std::to_string(up->client_id));
        }
      }

      std::vector<ClientUpdate> agg_in;
      agg_in.reserve(updates.size());
      RoundRecord record;
      record.round = round;
      record.lr = lr;
      for (auto& [cid, up] : updates) {
        record.per_client.push_back({static_cast<int>(cid),
                                     static_cast<std::size_t>(up.n_k),
                                     up.mean_train_loss});
        agg_in.push_back({static_cast<int>(cid), std::move(up.params),
                          static_cast<std::size_t>(up.n_k)});
      }
      std::sort(record.per_client.begin(), record.per_client.end(),
                [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
      global = aggregate<float>(std::span<const ClientUpdate>(agg_in));
      record.global_params_digest = params_digest(global);

      for (Conn* c : active) {
        send_or_abort(c, RoundDone{static_cast<std::uint32_t>(round),
                                   record.global_params_digest});
      }
      record.bytes_transferred = round_bytes;
      record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      if (opts.on_round) opts.on_round(record);
      result.records.push_back(std::move(record));
    }

    shutdown_all(ShutdownReason::finished);
    join_all();
    result.final_params = std::move(global);
    return result;
  } catch (...) {
    stop_acceptor();
    shutdown_all(ShutdownReason::aborted);
    join_all();
    throw;
  }
}

// ---------------------------------------------------------------------------
// Client worker
// ---------------------------------------------------------------------------

ClientRunResult client_run(const ClientOptions& opts) {
  opts.cfg.validate();
  validate(opts.spec);
  if (!opts.dataset || opts.dataset->count == 0) {
    throw DataError("client: empty dataset");
  }

  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (sock.fd < 0) {
    throw ProtocolError("cannot create socket");
  }
  sockaddr_in addr = make_addr(opts.host, opts.port);
  if (::connect(sock.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw ProtocolError("cannot connect to " + opts.host + ":" +
                        std::to_string(opts.port));
  }
  const int nd = 1;
  ::setsockopt(sock.fd, IPPROTO_TCP, TCP_NODELAY, &nd, sizeof nd);

  const std::uint64_t my_hash = spec_hash(opts.spec);
  send_message(sock.fd, Hello{static_cast<std::uint32_t>(opts.client_id),
                              static_cast<std::uint64_t>(opts.dataset->count),
                              my_hash});

  ClientState state;
  state.client_id = opts.client_id;
  state.dataset = opts.dataset;
  state.optimizer_state =
      make_optimizer_state<float>(opts.cfg.optimizer, param_count(opts.spec));

  FrameReader reader(sock.fd);
  ClientRunResult result;
  std::int64_t expected_round = 0;
  for (;;) {
    auto msg = reader.next();
    if (!msg.has_value()) {
      throw ProtocolError("coordinator closed the connection without SHUTDOWN");
    }
    if (const auto* shut = std::get_if<Shutdown>(&*msg)) {
      result.reason = static_cast<ShutdownReason>(shut->reason_code);
      return result;
    }
    if (const auto* done = std::get_if<RoundDone>(&*msg)) {
      if (static_cast<std::int64_t>(done->round) != expected_round - 1) {
        throw ProtocolError("ROUND_DONE for round " + std::to_string(done->round) +
                            " out of order");
      }
      continue;
    }
    const auto* global = std::get_if<Global>(&*msg);
    if (global == nullptr) {
      throw ProtocolError("unexpected message type from coordinator");
    }
    if (static_cast<std::int64_t>(global->round) != expected_round) {
      throw ProtocolError("GLOBAL for round " + std::to_string(global->round) +
                          ", expected round " + std::to_string(expected_round));
    }
    if (global->params.spec_hash != my_hash) {
      throw ProtocolError("GLOBAL parameters carry a foreign spec hash");
    }

    auto res = local_update(opts.spec, std::move(state), global->params,
                            opts.cfg.local_epochs,
                            static_cast<int>(global->round), opts.cfg);
    state = std::move(res.client);
    ++result.rounds_trained;
    ++expected_round;

    Update up;
    up.round = global->round;
    up.client_id = static_cast<std::uint32_t>(opts.client_id);
    up.n_k = static_cast<std::uint64_t>(opts.dataset->count);
    up.mean_train_loss = res.mean_train_loss;
    up.params = state.params;
    send_message(sock.fd, up);
  }
}

}  // namespace fednilm::netproto
