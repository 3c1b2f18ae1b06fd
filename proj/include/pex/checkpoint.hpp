#ifndef PEX_CHECKPOINT_HPP_
#define PEX_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pex/binio.hpp"
#include "pex/numcore.hpp"

namespace pex
{

/**
 * "PEXC" checkpoint: a named, ordered list of networks.
 *
 *   magic "PEXC" | u16 version | u16 network count |
 *   per network: u16 name length, UTF-8 name, u32 size count, u32 sizes...,
 *                then per layer: weights (rows x cols, row-major f64), bias f64 |
 *   u32 CRC32 of everything after the version field
 */
struct Checkpoint
{
  static constexpr std::uint16_t kVersion = 1;

  std::vector<std::pair<std::string, Mlp>> networks;

  void add(std::string name, Mlp net) { networks.emplace_back(std::move(name), std::move(net)); }

  bool contains(const std::string & name) const
  {
    for (const auto & [n, m] : networks) {
      if (n == name) {
        return true;
      }
    }
    return false;
  }

  const Mlp & get(const std::string & name) const
  {
    for (const auto & [n, m] : networks) {
      if (n == name) {
        return m;
      }
    }
    throw DataError(DataErrorCode::Mismatch, "checkpoint has no network named '" + name + "'");
  }

  bool operator==(const Checkpoint & o) const { return networks == o.networks; }
};

inline void write_network(binio::Writer & w, const Mlp & net)
{
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (auto s : net.layer_sizes) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
  }
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Matrix & W = net.weights[i];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        w.put<double>(W(r, c));
      }
    }
    for (Eigen::Index r = 0; r < net.biases[i].size(); ++r) {
      w.put<double>(net.biases[i](r));
    }
  }
}

inline Mlp read_network(binio::Reader & r)
{
  const auto count = r.get<std::uint32_t>();
  if (count < 2) {
    throw DataError(DataErrorCode::Mismatch, "network with fewer than two layer sizes");
  }
  r.need(static_cast<std::size_t>(count) * 4);
  std::vector<std::size_t> sizes(count);
  for (auto & s : sizes) {
    s = r.get<std::uint32_t>();
    if (s == 0) {
      throw DataError(DataErrorCode::Mismatch, "zero layer size");
    }
  }
  std::size_t n_params = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    n_params += sizes[i + 1] * (sizes[i] + 1);
  }
  r.need(n_params * 8);
  Mlp net = Mlp::zeros(sizes);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    Matrix & W = net.weights[i];
    for (Eigen::Index row = 0; row < W.rows(); ++row) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        W(row, c) = r.get<double>();
      }
    }
    for (Eigen::Index row = 0; row < net.biases[i].size(); ++row) {
      net.biases[i](row) = r.get<double>();
    }
  }
  return net;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & ckpt)
{
  binio::Writer w;
  w.put_bytes("PEXC");
  w.put<std::uint16_t>(Checkpoint::kVersion);
  const std::size_t payload_start = w.bytes().size();
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ckpt.networks.size()));
  for (const auto & [name, net] : ckpt.networks) {
    w.put_string_u16(name);
    write_network(w, net);
  }
  binio::finish_with_crc(w, payload_start);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t> & bytes)
{
  binio::check_header(bytes, "PEXC", Checkpoint::kVersion);
  const std::size_t payload_start = 6;
  binio::Reader r(bytes, payload_start);
  Checkpoint ckpt;
  const auto n = r.get<std::uint16_t>();
  for (std::uint16_t i = 0; i < n; ++i) {
    std::string name = r.get_string_u16();
    ckpt.add(std::move(name), read_network(r));
  }
  binio::check_trailer(bytes, r, payload_start);
  return ckpt;
}

inline void save_checkpoint(const Checkpoint & ckpt, const std::string & path)
{
  binio::write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string & path)
{
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace pex

#endif  // PEX_CHECKPOINT_HPP_
