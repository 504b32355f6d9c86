#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "apssmt/bytes.hpp"
#include "apssmt/gf256.hpp"
#include "apssmt/hashing.hpp"

namespace apssmt {

// Threshold erasure coding: a message is split into `piece_count` shares such
// that any `threshold` of them reconstruct it exactly. Shares are evaluations
// of a degree < threshold polynomial over GF(256); the first `threshold`
// shares are the message blocks themselves (systematic code).

struct DispersalConfig {
  int piece_count = 1;  // n, shares emitted
  int threshold = 1;    // m, shares needed to reconstruct

  bool valid() const {
    return threshold >= 1 && piece_count >= threshold && piece_count <= 255;
  }
};

struct MessageShare {
  std::uint64_t dispersal_id = 0;
  std::uint8_t index = 0;
  std::uint8_t piece_count = 0;
  std::uint8_t threshold = 0;
  Bytes payload;
  std::uint32_t checksum = 0;
};

class DispersalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientSharesError : public DispersalError {
 public:
  using DispersalError::DispersalError;
};

class ShareMismatchError : public DispersalError {
 public:
  using DispersalError::DispersalError;
};

inline std::uint32_t share_checksum(std::uint64_t dispersal_id,
                                    std::uint8_t index, ByteView payload) {
  Bytes head;
  head.reserve(9);
  put_u64be(head, dispersal_id);
  put_u8(head, index);
  return fnv1a32(payload, fnv1a32(head));
}

namespace detail {

// Weight of sample point `points[c]` in the Lagrange interpolation of the
// share polynomial evaluated at `x`.
inline std::uint8_t lagrange_weight(std::uint8_t x,
                                    const std::vector<std::uint8_t>& points,
                                    std::size_t c) {
  std::uint8_t num = 1;
  std::uint8_t den = 1;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == c) {
      continue;
    }
    num = gf256::mul(num, gf256::add(x, points[j]));
    den = gf256::mul(den, gf256::add(points[c], points[j]));
  }
  return gf256::div(num, den);
}

}  // namespace detail

inline std::vector<MessageShare> disperse(ByteView message,
                                          const DispersalConfig& config,
                                          std::uint64_t dispersal_id) {
  if (!config.valid()) {
    throw std::invalid_argument(
        "disperse: invalid config, need 1 <= threshold <= piece_count <= 255");
  }
  if (message.empty()) {
    throw std::invalid_argument("disperse: empty message");
  }
  const int n = config.piece_count;
  const int m = config.threshold;

  // 4-byte length prefix, then zero padding up to a multiple of m.
  Bytes buf;
  buf.reserve(message.size() + 4);
  put_u32be(buf, static_cast<std::uint32_t>(message.size()));
  buf.insert(buf.end(), message.begin(), message.end());
  const std::size_t piece_len = (buf.size() + m - 1) / static_cast<std::size_t>(m);
  if (piece_len > 0xffff) {
    throw std::invalid_argument("disperse: message too large for share wire format");
  }
  buf.resize(piece_len * static_cast<std::size_t>(m), 0);

  std::vector<MessageShare> shares(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& s = shares[static_cast<std::size_t>(i)];
    s.dispersal_id = dispersal_id;
    s.index = static_cast<std::uint8_t>(i);
    s.piece_count = static_cast<std::uint8_t>(n);
    s.threshold = static_cast<std::uint8_t>(m);
    s.payload.assign(piece_len, 0);
  }

  // Systematic part: share i < m is message block i.
  for (int c = 0; c < m; ++c) {
    auto& dst = shares[static_cast<std::size_t>(c)].payload;
    const std::size_t base = static_cast<std::size_t>(c) * piece_len;
    for (std::size_t o = 0; o < piece_len; ++o) {
      dst[o] = buf[base + o];
    }
  }

  // Parity shares evaluate the interpolating polynomial at x = r.
  std::vector<std::uint8_t> sample_points(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) {
    sample_points[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(c);
  }
  for (int r = m; r < n; ++r) {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
      row[static_cast<std::size_t>(c)] = detail::lagrange_weight(
          static_cast<std::uint8_t>(r), sample_points, static_cast<std::size_t>(c));
    }
    auto& dst = shares[static_cast<std::size_t>(r)].payload;
    for (int c = 0; c < m; ++c) {
      const std::uint8_t w = row[static_cast<std::size_t>(c)];
      if (w == 0) {
        continue;
      }
      const auto& src = shares[static_cast<std::size_t>(c)].payload;
      for (std::size_t o = 0; o < piece_len; ++o) {
        dst[o] = gf256::add(dst[o], gf256::mul(w, src[o]));
      }
    }
  }

  for (auto& s : shares) {
    s.checksum = share_checksum(s.dispersal_id, s.index, s.payload);
  }
  return shares;
}

inline Bytes reconstruct(const std::vector<MessageShare>& shares) {
  // Corrupt shares are excluded up front so they can never poison the output.
  std::vector<const MessageShare*> valid;
  valid.reserve(shares.size());
  for (const auto& s : shares) {
    if (share_checksum(s.dispersal_id, s.index, s.payload) == s.checksum) {
      valid.push_back(&s);
    }
  }
  if (valid.empty()) {
    throw InsufficientSharesError("reconstruct: no shares with valid checksum");
  }

  const MessageShare* ref = valid.front();
  if (ref->threshold < 1 || ref->piece_count < ref->threshold) {
    throw ShareMismatchError("reconstruct: share carries invalid (n, m)");
  }
  std::map<int, const MessageShare*> by_index;
  for (const auto* s : valid) {
    if (s->dispersal_id != ref->dispersal_id) {
      throw ShareMismatchError("reconstruct: mixed dispersal ids");
    }
    if (s->piece_count != ref->piece_count || s->threshold != ref->threshold) {
      throw ShareMismatchError("reconstruct: inconsistent (n, m) across shares");
    }
    if (s->index >= s->piece_count) {
      throw ShareMismatchError("reconstruct: share index out of range");
    }
    if (s->payload.size() != ref->payload.size()) {
      throw ShareMismatchError("reconstruct: share payload sizes differ");
    }
    by_index.emplace(static_cast<int>(s->index), s);
  }

  const int m = ref->threshold;
  if (static_cast<int>(by_index.size()) < m) {
    throw InsufficientSharesError(
        "reconstruct: " + std::to_string(by_index.size()) + " distinct shares, need " +
        std::to_string(m));
  }

  std::vector<std::uint8_t> xs;
  std::vector<const MessageShare*> picked;
  for (const auto& [idx, s] : by_index) {
    xs.push_back(static_cast<std::uint8_t>(idx));
    picked.push_back(s);
    if (static_cast<int>(picked.size()) == m) {
      break;
    }
  }

  const std::size_t piece_len = ref->payload.size();
  Bytes buf(piece_len * static_cast<std::size_t>(m), 0);
  for (int t = 0; t < m; ++t) {
    std::uint8_t* dst = buf.data() + static_cast<std::size_t>(t) * piece_len;
    for (int k = 0; k < m; ++k) {
      const std::uint8_t w = detail::lagrange_weight(static_cast<std::uint8_t>(t), xs,
                                                     static_cast<std::size_t>(k));
      if (w == 0) {
        continue;
      }
      const auto& src = picked[static_cast<std::size_t>(k)]->payload;
      for (std::size_t o = 0; o < piece_len; ++o) {
        dst[o] = gf256::add(dst[o], gf256::mul(w, src[o]));
      }
    }
  }

  if (buf.size() < 4) {
    throw DispersalError("reconstruct: decoded buffer shorter than length header");
  }
  const std::uint32_t original_len = get_u32be(buf, 0);
  if (original_len + 4 > buf.size()) {
    throw DispersalError("reconstruct: corrupt length header");
  }
  return Bytes(buf.begin() + 4, buf.begin() + 4 + original_len);
}

// Wire layout:
// dispersal_id(8) | index(1) | n(1) | m(1) | payload_len(2, BE) | payload | checksum(4, BE)
inline Bytes encode_share(const MessageShare& s) {
  Bytes out;
  out.reserve(17 + s.payload.size());
  put_u64be(out, s.dispersal_id);
  put_u8(out, s.index);
  put_u8(out, s.piece_count);
  put_u8(out, s.threshold);
  put_u16be(out, static_cast<std::uint16_t>(s.payload.size()));
  out.insert(out.end(), s.payload.begin(), s.payload.end());
  put_u32be(out, s.checksum);
  return out;
}

inline MessageShare decode_share(ByteView wire) {
  if (wire.size() < 17) {
    throw DispersalError("decode_share: truncated share");
  }
  MessageShare s;
  s.dispersal_id = get_u64be(wire, 0);
  s.index = wire[8];
  s.piece_count = wire[9];
  s.threshold = wire[10];
  const std::size_t payload_len = get_u16be(wire, 11);
  if (wire.size() != 17 + payload_len) {
    throw DispersalError("decode_share: length field does not match share size");
  }
  s.payload.assign(wire.begin() + 13, wire.begin() + 13 + static_cast<long>(payload_len));
  s.checksum = get_u32be(wire, 13 + payload_len);
  return s;
}

}  // namespace apssmt
