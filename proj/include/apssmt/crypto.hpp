#pragma once

#include <algorithm>
#include <cstdint>

#include "apssmt/bytes.hpp"
#include "apssmt/hashing.hpp"
#include "apssmt/types.hpp"

namespace apssmt {

using Signature = std::uint64_t;
using SharedKey = std::uint64_t;

// Signing and pairwise key establishment, injected into the protocol layers.
// Implementations must be deterministic: route discovery signs packets and any
// nondeterminism would break replayable runs.
class CryptoProvider {
 public:
  virtual ~CryptoProvider() = default;

  virtual Signature sign(NodeId signer, ByteView message) const = 0;
  virtual bool verify(NodeId signer, ByteView message, Signature sig) const = 0;
  virtual SharedKey shared_key(NodeId a, NodeId b) const = 0;
  virtual std::uint64_t ack_tag(SharedKey key, std::uint64_t packet_id,
                                NodeId probe) const = 0;
};

// Keyed-hash stand-in for public key signatures and Diffie-Hellman. Each node
// owns a secret derived from the scenario seed, so two runs with the same seed
// produce identical signatures and shared keys.
class SimulatedCryptoProvider final : public CryptoProvider {
 public:
  explicit SimulatedCryptoProvider(std::uint64_t scenario_seed)
      : seed_(scenario_seed) {}

  Signature sign(NodeId signer, ByteView message) const override {
    return hash_combine(secret(signer), fnv1a64(message));
  }

  bool verify(NodeId signer, ByteView message, Signature sig) const override {
    return sign(signer, message) == sig;
  }

  SharedKey shared_key(NodeId a, NodeId b) const override {
    const std::uint64_t sa = secret(a);
    const std::uint64_t sb = secret(b);
    return hash_combine(std::min(sa, sb), std::max(sa, sb));
  }

  std::uint64_t ack_tag(SharedKey key, std::uint64_t packet_id,
                        NodeId probe) const override {
    return hash_combine(key, hash_combine(packet_id, probe));
  }

 private:
  std::uint64_t secret(NodeId id) const {
    return hash_combine(seed_, 0x5ec7e700ull + id);
  }

  std::uint64_t seed_;
};

// Accepts everything and signs with zeros. Lets tests disable the
// verification gates to show what they are worth.
class NullCryptoProvider final : public CryptoProvider {
 public:
  Signature sign(NodeId, ByteView) const override { return 0; }
  bool verify(NodeId, ByteView, Signature) const override { return true; }
  SharedKey shared_key(NodeId, NodeId) const override { return 0; }
  std::uint64_t ack_tag(SharedKey, std::uint64_t, NodeId) const override {
    return 0;
  }
};

}  // namespace apssmt
