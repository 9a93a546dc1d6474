#include "panovid/external.hpp"

#include <poll.h>
#include <spdlog/spdlog.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>

#include "panovid/error.hpp"

namespace panovid {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

using nlohmann::json;

// ------------------------------------------------------------ messages

std::size_t WireTensor::elements() const {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

WireTensor WireTensor::from_floats(std::string name, std::vector<int> shape, const std::vector<float>& values) {
  WireTensor t{std::move(name), "f32", std::move(shape), {}};
  if (t.elements() != values.size()) fail(ErrorKind::Contract, "wire tensor '" + t.name + "' shape mismatch");
  t.bytes.resize(values.size() * 4);
  std::memcpy(t.bytes.data(), values.data(), t.bytes.size());
  return t;
}

WireTensor WireTensor::from_ints(std::string name, std::vector<int> shape, const std::vector<std::int32_t>& values) {
  WireTensor t{std::move(name), "i32", std::move(shape), {}};
  if (t.elements() != values.size()) fail(ErrorKind::Contract, "wire tensor '" + t.name + "' shape mismatch");
  t.bytes.resize(values.size() * 4);
  std::memcpy(t.bytes.data(), values.data(), t.bytes.size());
  return t;
}

std::vector<float> WireTensor::floats() const {
  if (dtype != "f32") fail(ErrorKind::Backend, "payload '" + name + "' is " + dtype + ", expected f32");
  std::vector<float> v(bytes.size() / 4);
  std::memcpy(v.data(), bytes.data(), v.size() * 4);
  return v;
}

std::vector<std::int32_t> WireTensor::ints() const {
  if (dtype != "i32") fail(ErrorKind::Backend, "payload '" + name + "' is " + dtype + ", expected i32");
  std::vector<std::int32_t> v(bytes.size() / 4);
  std::memcpy(v.data(), bytes.data(), v.size() * 4);
  return v;
}

const WireTensor& WireMessage::payload(const std::string& name) const {
  for (const auto& p : payloads) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::Backend, "reply is missing payload '" + name + "'");
}

namespace {

std::size_t payload_size(const json& desc) {
  const std::string dtype = desc.at("dtype").get<std::string>();
  if (dtype != "f32" && dtype != "i32") throw std::runtime_error("unsupported dtype " + dtype);
  std::size_t n = 4;
  for (const auto& s : desc.at("shape")) {
    const long v = s.get<long>();
    if (v < 0) throw std::runtime_error("negative dimension");
    n *= static_cast<std::size_t>(v);
  }
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_message(const WireMessage& m) {
  json header = m.header;
  json descs = json::array();
  for (const auto& p : m.payloads) {
    if (p.bytes.size() != p.elements() * 4) fail(ErrorKind::Contract, "wire tensor '" + p.name + "' size mismatch");
    descs.push_back({{"name", p.name}, {"dtype", p.dtype}, {"shape", p.shape}});
  }
  header["payloads"] = descs;
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(4 + text.size());
  const auto len = static_cast<std::uint32_t>(text.size());
  std::memcpy(out.data(), &len, 4);
  std::memcpy(out.data() + 4, text.data(), text.size());
  for (const auto& p : m.payloads) out.insert(out.end(), p.bytes.begin(), p.bytes.end());
  return out;
}

WireMessage decode_message(const std::uint8_t* data, std::size_t size) {
  try {
    if (size < 4) throw std::runtime_error("truncated length prefix");
    std::uint32_t len = 0;
    std::memcpy(&len, data, 4);
    if (4 + static_cast<std::size_t>(len) > size) throw std::runtime_error("truncated header");
    WireMessage m;
    m.header = json::parse(data + 4, data + 4 + len);
    std::size_t off = 4 + len;
    for (const auto& d : m.header.value("payloads", json::array())) {
      const std::size_t n = payload_size(d);
      if (off + n > size) throw std::runtime_error("truncated payload");
      WireTensor t{d.at("name").get<std::string>(), d.at("dtype").get<std::string>(),
                   d.at("shape").get<std::vector<int>>(), std::vector<std::uint8_t>(data + off, data + off + n)};
      m.payloads.push_back(std::move(t));
      off += n;
    }
    if (off != size) throw std::runtime_error("trailing bytes after payloads");
    return m;
  } catch (const std::exception& e) {
    fail(ErrorKind::Backend, std::string("malformed wire message: ") + e.what());
  }
}

// ------------------------------------------------------------ transport

namespace {

struct TransportFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

struct WireClient::Transport {
  int read_fd = -1;
  int write_fd = -1;
  pid_t pid = -1;

  ~Transport() {
    if (read_fd >= 0) ::close(read_fd);
    if (write_fd >= 0 && write_fd != read_fd) ::close(write_fd);
    if (pid > 0) {
      ::kill(pid, SIGTERM);
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }

  void write_all(const std::vector<std::uint8_t>& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::write(write_fd, bytes.data() + off, bytes.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportFailure(std::string("write failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::uint8_t* dst, std::size_t size, std::chrono::steady_clock::time_point deadline) {
    std::size_t off = 0;
    while (off < size) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TransportFailure("timed out waiting for the backend");
      pollfd p{read_fd, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) throw TransportFailure(std::string("poll failed: ") + std::strerror(errno));
      if (r == 0) throw TransportFailure("timed out waiting for the backend");
      const ssize_t n = ::read(read_fd, dst + off, size - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportFailure("backend closed the connection");
      off += static_cast<std::size_t>(n);
    }
  }
};

WireClient::WireClient(ExternalOptions options) : options_(std::move(options)) {
  std::signal(SIGPIPE, SIG_IGN);
  std::string last;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    try {
      connect();
      return;
    } catch (const TransportFailure& e) {
      last = e.what();
      disconnect();
    }
  }
  fail(ErrorKind::Backend, "cannot reach backend '" + options_.endpoint + "': " + last);
}

WireClient::~WireClient() = default;

void WireClient::connect() {
  auto t = std::make_unique<Transport>();
  const std::string& ep = options_.endpoint;
  if (ep.rfind("exec:", 0) == 0) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw TransportFailure("pipe() failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportFailure("fork() failed");
    if (pid == 0) {
      ::dup2(to_child[0], 0);
      ::dup2(from_child[1], 1);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", ep.c_str() + 5, static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    t->pid = pid;
    t->write_fd = to_child[1];
    t->read_fd = from_child[0];
  } else if (ep.rfind("unix:", 0) == 0) {
    const std::string path = ep.substr(5);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) fail(ErrorKind::Config, "socket path too long: " + path);
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw TransportFailure("socket() failed");
    t->read_fd = t->write_fd = fd;
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw TransportFailure("connect(" + path + ") failed: " + std::strerror(errno));
    }
  } else {
    fail(ErrorKind::Config, "backend endpoint must start with exec: or unix: ('" + ep + "')");
  }
  transport_ = std::move(t);

  WireMessage hello;
  hello.header = {{"api_version", kWireApiVersion}, {"op", "hello"}};
  const WireMessage reply = round_trip(hello);
  const int version = reply.header.value("api_version", -1);
  if (version != kWireApiVersion) {
    disconnect();
    fail(ErrorKind::Handshake, "backend speaks api_version " + std::to_string(version) + ", expected " +
                                   std::to_string(kWireApiVersion));
  }
  hello_ = reply.header;
}

void WireClient::disconnect() { transport_.reset(); }

WireMessage WireClient::round_trip(const WireMessage& request) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long>(options_.timeout_seconds * 1000.0));
  transport_->write_all(encode_message(request));
  std::vector<std::uint8_t> buf(4);
  transport_->read_exact(buf.data(), 4, deadline);
  std::uint32_t len = 0;
  std::memcpy(&len, buf.data(), 4);
  if (len > (1u << 26)) fail(ErrorKind::Backend, "backend reply header too large");
  buf.resize(4 + len);
  transport_->read_exact(buf.data() + 4, len, deadline);
  std::size_t total = 0;
  try {
    const json header = json::parse(buf.begin() + 4, buf.end());
    for (const auto& d : header.value("payloads", json::array())) total += payload_size(d);
  } catch (const std::exception& e) {
    fail(ErrorKind::Backend, std::string("malformed reply header: ") + e.what());
  }
  buf.resize(4 + len + total);
  transport_->read_exact(buf.data() + 4 + len, total, deadline);
  return decode_message(buf.data(), buf.size());
}

WireMessage WireClient::call(WireMessage request) {
  std::lock_guard lock(mutex_);
  request.header["api_version"] = kWireApiVersion;
  std::string last;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    try {
      if (!transport_) connect();
      WireMessage reply = round_trip(request);
      if (reply.header.contains("error")) {
        fail(ErrorKind::Backend, "backend error on '" + request.header.value("op", std::string()) +
                                     "': " + reply.header["error"].dump());
      }
      return reply;
    } catch (const TransportFailure& e) {
      last = e.what();
      spdlog::warn("backend '{}': {} (attempt {})", options_.endpoint, last, attempt + 1);
      disconnect();
    }
  }
  fail(ErrorKind::Backend, "backend '" + options_.endpoint + "' failed: " + last);
}

// ------------------------------------------------------------ descriptors

json descriptor_to_json(const BackendDescriptor& d) {
  return {{"flavor", to_string(d.flavor)},
          {"context_frames", d.context_frames},
          {"native_height", d.native_height},
          {"native_width", d.native_width},
          {"causal", d.causal},
          {"sampling_steps", d.sampling_steps},
          {"vocabulary_size", d.vocabulary_size},
          {"patch_size", d.patch_size},
          {"token_frames", d.token_frames},
          {"max_concurrency", d.max_concurrency},
          {"state_independent", d.state_independent}};
}

BackendDescriptor descriptor_from_json(const json& j) {
  BackendDescriptor d;
  try {
    d.flavor = parse_flavor(j.at("flavor").get<std::string>());
    d = d.flavor == Flavor::Gaussian ? BackendDescriptor::gaussian_defaults() : BackendDescriptor::token_defaults();
    d.context_frames = j.value("context_frames", d.context_frames);
    d.native_height = j.value("native_height", d.native_height);
    d.native_width = j.value("native_width", d.native_width);
    d.causal = j.value("causal", d.causal);
    d.sampling_steps = j.value("sampling_steps", d.sampling_steps);
    d.vocabulary_size = j.value("vocabulary_size", d.vocabulary_size);
    d.patch_size = j.value("patch_size", d.patch_size);
    d.token_frames = j.value("token_frames", d.token_frames);
    d.max_concurrency = j.value("max_concurrency", d.max_concurrency);
    d.state_independent = j.value("state_independent", d.state_independent);
    d.validate();
  } catch (const json::exception& e) {
    fail(ErrorKind::Handshake, std::string("bad backend descriptor: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Handshake, std::string("bad backend descriptor: ") + e.what());
  }
  return d;
}

// ------------------------------------------------------------ backends

namespace {

std::vector<int> video_shape(const Video& v) { return {v.frames(), v.height(), v.width(), v.channels()}; }

std::vector<float> mask_floats(const Mask& m) { return {m.data().begin(), m.data().end()}; }

Video video_from(const WireTensor& t, const std::vector<int>& shape) {
  if (t.shape != shape) fail(ErrorKind::Backend, "payload '" + t.name + "' has the wrong shape");
  Video v(shape[0], shape[1], shape[2], shape[3]);
  v.data() = t.floats();
  return v;
}

json context_json(const WindowContext& c) {
  json spans = json::array();
  for (const auto& s : c.spans) spans.push_back({s.first, s.last});
  return {{"level", c.level},       {"spans", spans},
          {"x_offset", c.x_offset}, {"working_width", c.working_width},
          {"working_height", c.working_height}, {"time_reversed", c.time_reversed}};
}

void send_prepare(WireClient& client, const Video& canvas, const Mask& mask) {
  WireMessage m;
  m.header = {{"op", "prepare"}, {"window_shape", video_shape(canvas)}};
  m.payloads.push_back(WireTensor::from_floats("canvas", video_shape(canvas), canvas.data()));
  m.payloads.push_back(WireTensor::from_floats("mask", {mask.frames(), mask.height(), mask.width()}, mask_floats(mask)));
  client.call(std::move(m));
}

}  // namespace

ExternalGaussianBackend::ExternalGaussianBackend(std::shared_ptr<WireClient> client, BackendDescriptor descriptor)
    : client_(std::move(client)), descriptor_(std::move(descriptor)) {}

void ExternalGaussianBackend::prepare(const Video& canvas, const Mask& mask) { send_prepare(*client_, canvas, mask); }

GaussianField ExternalGaussianBackend::predict(const GaussianRequest& r) const {
  const auto shape = video_shape(r.window);
  WireMessage m;
  m.header = {{"op", "gaussian_predict"},
              {"flavor", to_string(Flavor::Gaussian)},
              {"window_shape", shape},
              {"step", r.step},
              {"timestep", r.timestep},
              {"alpha_bar", r.schedule.alpha_bar(r.timestep)},
              {"alpha_bar_prev", r.schedule.alpha_bar(r.timestep - 1)},
              {"beta", r.schedule.beta(r.timestep)},
              {"seed", r.seed},
              {"context", context_json(r.context)}};
  m.payloads.push_back(WireTensor::from_floats("window", shape, r.window.data()));
  m.payloads.push_back(
      WireTensor::from_floats("mask", {r.pinned.frames(), r.pinned.height(), r.pinned.width()}, mask_floats(r.pinned)));
  m.payloads.push_back(WireTensor::from_floats("state", shape, r.state.data()));
  const WireMessage reply = client_->call(std::move(m));
  return {video_from(reply.payload("mean"), shape), video_from(reply.payload("variance"), shape)};
}

ExternalTokenBackend::ExternalTokenBackend(std::shared_ptr<WireClient> client, BackendDescriptor descriptor)
    : client_(std::move(client)), descriptor_(std::move(descriptor)) {}

void ExternalTokenBackend::prepare(const Video& canvas, const Mask& mask) { send_prepare(*client_, canvas, mask); }

TokenGrid ExternalTokenBackend::encode(const Video& window) const {
  WireMessage m;
  m.header = {{"op", "token_encode"}, {"flavor", to_string(Flavor::Token)}, {"window_shape", video_shape(window)}};
  m.payloads.push_back(WireTensor::from_floats("window", video_shape(window), window.data()));
  const WireMessage reply = client_->call(std::move(m));
  const WireTensor& t = reply.payload("tokens");
  if (t.shape.size() != 3) fail(ErrorKind::Backend, "token payload must be 3-D");
  TokenGrid g(t.shape[0], t.shape[1], t.shape[2]);
  g.ids = t.ints();
  return g;
}

Video ExternalTokenBackend::decode(const TokenGrid& tokens) const {
  WireMessage m;
  m.header = {{"op", "token_decode"}, {"flavor", to_string(Flavor::Token)}};
  m.payloads.push_back(WireTensor::from_ints("tokens", {tokens.frames, tokens.height, tokens.width}, tokens.ids));
  const WireMessage reply = client_->call(std::move(m));
  const WireTensor& t = reply.payload("window");
  if (t.shape.size() != 4) fail(ErrorKind::Backend, "window payload must be 4-D");
  return video_from(t, t.shape);
}

CategoricalField ExternalTokenBackend::predict(const TokenGrid& tokens, const Mask& token_mask,
                                               const WindowContext& context) const {
  WireMessage m;
  m.header = {{"op", "token_predict"}, {"flavor", to_string(Flavor::Token)}, {"context", context_json(context)}};
  const std::vector<int> shape{tokens.frames, tokens.height, tokens.width};
  m.payloads.push_back(WireTensor::from_ints("tokens", shape, tokens.ids));
  m.payloads.push_back(WireTensor::from_floats("mask", shape, mask_floats(token_mask)));
  const WireMessage reply = client_->call(std::move(m));
  const WireTensor& t = reply.payload("probs");
  const std::vector<int> want{tokens.frames, tokens.height, tokens.width, descriptor_.vocabulary_size};
  if (t.shape != want) fail(ErrorKind::Backend, "probs payload has the wrong shape");
  CategoricalField f(tokens.frames, tokens.height, tokens.width, descriptor_.vocabulary_size);
  f.probs = t.floats();
  return f;
}

Backend connect_external(const ExternalOptions& options) {
  auto client = std::make_shared<WireClient>(options);
  const json& hello = client->hello();
  if (!hello.contains("descriptor")) fail(ErrorKind::Handshake, "backend hello carries no descriptor");
  const BackendDescriptor d = descriptor_from_json(hello["descriptor"]);
  Backend b;
  if (d.flavor == Flavor::Gaussian) {
    b.gaussian = std::make_shared<ExternalGaussianBackend>(client, d);
  } else {
    b.token = std::make_shared<ExternalTokenBackend>(client, d);
  }
  return b;
}

}  // namespace panovid
