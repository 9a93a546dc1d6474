#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panovid/backends.hpp"

namespace panovid {

constexpr int kWireApiVersion = 1;

// One message on the wire: u32 little-endian header length, the JSON header,
// then each payload's raw little-endian bytes in the order the header's
// "payloads" array lists them ({name, dtype: f32|i32, shape}).
struct WireTensor {
  std::string name;
  std::string dtype;  // "f32" or "i32"
  std::vector<int> shape;
  std::vector<std::uint8_t> bytes;

  std::size_t elements() const;
  static WireTensor from_floats(std::string name, std::vector<int> shape, const std::vector<float>& values);
  static WireTensor from_ints(std::string name, std::vector<int> shape, const std::vector<std::int32_t>& values);
  std::vector<float> floats() const;
  std::vector<std::int32_t> ints() const;
};

struct WireMessage {
  nlohmann::json header;
  std::vector<WireTensor> payloads;

  const WireTensor& payload(const std::string& name) const;
};

std::vector<std::uint8_t> encode_message(const WireMessage& m);
// Parses a complete frame, length prefix included.
WireMessage decode_message(const std::uint8_t* data, std::size_t size);

struct ExternalOptions {
  std::string endpoint;  // "exec:<shell command>" or "unix:<socket path>"
  double timeout_seconds = 60.0;
  int retries = 1;       // reconnect attempts after a transport failure
};

// Request/response channel with reconnect-and-retry. Calls are serialized.
class WireClient {
 public:
  explicit WireClient(ExternalOptions options);
  ~WireClient();
  WireClient(const WireClient&) = delete;
  WireClient& operator=(const WireClient&) = delete;

  WireMessage call(WireMessage request);
  const nlohmann::json& hello() const { return hello_; }

 private:
  struct Transport;
  void connect();
  void disconnect();
  WireMessage round_trip(const WireMessage& request);

  ExternalOptions options_;
  std::unique_ptr<Transport> transport_;
  nlohmann::json hello_;
  std::mutex mutex_;
};

class ExternalGaussianBackend final : public GaussianBackend {
 public:
  ExternalGaussianBackend(std::shared_ptr<WireClient> client, BackendDescriptor descriptor);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  void prepare(const Video& canvas, const Mask& mask) override;
  GaussianField predict(const GaussianRequest& request) const override;

 private:
  std::shared_ptr<WireClient> client_;
  BackendDescriptor descriptor_;
};

class ExternalTokenBackend final : public TokenBackend {
 public:
  ExternalTokenBackend(std::shared_ptr<WireClient> client, BackendDescriptor descriptor);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  void prepare(const Video& canvas, const Mask& mask) override;
  TokenGrid encode(const Video& window) const override;
  Video decode(const TokenGrid& tokens) const override;
  CategoricalField predict(const TokenGrid& tokens, const Mask& token_mask,
                           const WindowContext& context) const override;

 private:
  std::shared_ptr<WireClient> client_;
  BackendDescriptor descriptor_;
};

BackendDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json descriptor_to_json(const BackendDescriptor& d);

// Connects, performs the handshake and wraps the advertised flavor.
Backend connect_external(const ExternalOptions& options);

}  // namespace panovid
