#ifndef PEX_REPLAY_HPP_
#define PEX_REPLAY_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pex/binio.hpp"
#include "pex/envs.hpp"
#include "pex/numcore.hpp"
#include "pex/rng.hpp"

namespace pex
{

/// Column-major training batch: one transition per column.
struct Batch
{
  Matrix obs;
  Matrix actions;
  Vector rewards;
  Matrix next_obs;
  Vector dones;   // 1.0 on true termination
  std::vector<std::uint8_t> from_online;

  Eigen::Index size() const { return obs.cols(); }

  static Batch with_shape(std::size_t obs_dim, std::size_t act_dim, std::size_t n)
  {
    const auto o = static_cast<Eigen::Index>(obs_dim);
    const auto a = static_cast<Eigen::Index>(act_dim);
    const auto m = static_cast<Eigen::Index>(n);
    return Batch{Matrix(o, m), Matrix(a, m), Vector(m), Matrix(o, m), Vector(m),
      std::vector<std::uint8_t>(n, 0)};
  }
};

/// Flat column storage of transitions.
class TransitionStore
{
public:
  TransitionStore() = default;
  TransitionStore(std::size_t obs_dim, std::size_t act_dim) : obs_dim_(obs_dim), act_dim_(act_dim) {}

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  std::size_t size() const { return rewards_.size(); }
  bool empty() const { return rewards_.empty(); }

  void reserve(std::size_t n)
  {
    obs_.reserve(n * obs_dim_);
    next_obs_.reserve(n * obs_dim_);
    actions_.reserve(n * act_dim_);
    rewards_.reserve(n);
    done_.reserve(n);
    truncated_.reserve(n);
  }

  void append(const Transition & t)
  {
    check(t);
    obs_.insert(obs_.end(), t.obs.data(), t.obs.data() + obs_dim_);
    actions_.insert(actions_.end(), t.action.data(), t.action.data() + act_dim_);
    rewards_.push_back(t.reward);
    next_obs_.insert(next_obs_.end(), t.next_obs.data(), t.next_obs.data() + obs_dim_);
    done_.push_back(t.done ? 1 : 0);
    truncated_.push_back(t.truncated ? 1 : 0);
  }

  void overwrite(std::size_t i, const Transition & t)
  {
    check(t);
    std::copy_n(t.obs.data(), obs_dim_, obs_.begin() + static_cast<std::ptrdiff_t>(i * obs_dim_));
    std::copy_n(t.action.data(), act_dim_, actions_.begin() + static_cast<std::ptrdiff_t>(i * act_dim_));
    rewards_[i] = t.reward;
    std::copy_n(t.next_obs.data(), obs_dim_, next_obs_.begin() + static_cast<std::ptrdiff_t>(i * obs_dim_));
    done_[i] = t.done ? 1 : 0;
    truncated_[i] = t.truncated ? 1 : 0;
  }

  Transition at(std::size_t i) const
  {
    Transition t;
    t.obs = Eigen::Map<const Vector>(obs_.data() + i * obs_dim_, static_cast<Eigen::Index>(obs_dim_));
    t.action = Eigen::Map<const Vector>(actions_.data() + i * act_dim_, static_cast<Eigen::Index>(act_dim_));
    t.reward = rewards_[i];
    t.next_obs = Eigen::Map<const Vector>(next_obs_.data() + i * obs_dim_, static_cast<Eigen::Index>(obs_dim_));
    t.done = done_[i] != 0;
    t.truncated = truncated_[i] != 0;
    return t;
  }

  /// Copies row `i` into column `col` of a batch.
  void gather_into(std::size_t i, Batch & b, Eigen::Index col) const
  {
    const auto od = static_cast<Eigen::Index>(obs_dim_);
    const auto ad = static_cast<Eigen::Index>(act_dim_);
    b.obs.col(col) = Eigen::Map<const Vector>(obs_.data() + i * obs_dim_, od);
    b.actions.col(col) = Eigen::Map<const Vector>(actions_.data() + i * act_dim_, ad);
    b.rewards(col) = rewards_[i];
    b.next_obs.col(col) = Eigen::Map<const Vector>(next_obs_.data() + i * obs_dim_, od);
    b.dones(col) = done_[i] ? 1.0 : 0.0;
  }

  const std::vector<double> & obs() const { return obs_; }
  const std::vector<double> & actions() const { return actions_; }
  const std::vector<double> & rewards() const { return rewards_; }
  const std::vector<double> & next_obs() const { return next_obs_; }
  const std::vector<std::uint8_t> & done() const { return done_; }
  const std::vector<std::uint8_t> & truncated() const { return truncated_; }

  bool operator==(const TransitionStore & o) const = default;

private:
  void check(const Transition & t) const
  {
    if (static_cast<std::size_t>(t.obs.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.next_obs.size()) != obs_dim_ ||
      static_cast<std::size_t>(t.action.size()) != act_dim_)
    {
      throw ShapeError(
              "transition dimensions (" + std::to_string(t.obs.size()) + ", " +
              std::to_string(t.action.size()) + ") do not match store (" +
              std::to_string(obs_dim_) + ", " + std::to_string(act_dim_) + ")");
    }
  }

  std::size_t obs_dim_ = 0;
  std::size_t act_dim_ = 0;
  std::vector<double> obs_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> next_obs_;
  std::vector<std::uint8_t> done_;
  std::vector<std::uint8_t> truncated_;
};

/// Online FIFO ring buffer.
class ReplayBuffer
{
public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim)
  : capacity_(capacity), store_(obs_dim, act_dim)
  {
    if (capacity == 0) {
      throw std::invalid_argument("replay capacity must be positive");
    }
    store_.reserve(std::min<std::size_t>(capacity, 1u << 17));
  }

  void push(const Transition & t)
  {
    if (store_.size() < capacity_) {
      store_.append(t);
    } else {
      store_.overwrite(cursor_, t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t write_cursor() const { return cursor_; }
  bool empty() const { return store_.empty(); }
  const TransitionStore & store() const { return store_; }
  Transition at(std::size_t i) const { return store_.at(i); }

  bool operator==(const ReplayBuffer & o) const = default;

private:
  std::size_t capacity_;
  TransitionStore store_;
  std::size_t cursor_ = 0;
};

struct DatasetMeta
{
  std::string env_id;
  BehaviorGrade grade = BehaviorGrade::Random;
  std::uint64_t seed = 0;

  bool operator==(const DatasetMeta &) const = default;
};

/// Immutable offline transitions plus their provenance.
class OfflineDataset
{
public:
  OfflineDataset() = default;
  OfflineDataset(DatasetMeta meta, TransitionStore data) : meta_(std::move(meta)), data_(std::move(data)) {}

  static OfflineDataset from_transitions(
    DatasetMeta meta, std::size_t obs_dim, std::size_t act_dim,
    const std::vector<Transition> & ts)
  {
    TransitionStore store(obs_dim, act_dim);
    store.reserve(ts.size());
    for (const auto & t : ts) {
      store.append(t);
    }
    return OfflineDataset(std::move(meta), std::move(store));
  }

  const DatasetMeta & meta() const { return meta_; }
  const TransitionStore & data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t obs_dim() const { return data_.obs_dim(); }
  std::size_t act_dim() const { return data_.act_dim(); }
  Transition at(std::size_t i) const { return data_.at(i); }

  std::vector<Transition> transitions() const
  {
    std::vector<Transition> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out.push_back(at(i));
    }
    return out;
  }

  /// CRC32 of the serialized payload.
  std::uint32_t checksum() const;

  bool operator==(const OfflineDataset &) const = default;

private:
  DatasetMeta meta_;
  TransitionStore data_;
};

// ---------------------------------------------------------------------------
// Sampling

/// n uniform draws with replacement from `store`, tagged with `online`.
inline Batch sample_batch(const TransitionStore & store, std::size_t n, Rng & rng, bool online = false)
{
  if (store.empty()) {
    throw std::invalid_argument("sample_batch: source is empty");
  }
  Batch b = Batch::with_shape(store.obs_dim(), store.act_dim(), n);
  for (std::size_t k = 0; k < n; ++k) {
    store.gather_into(rng.index(store.size()), b, static_cast<Eigen::Index>(k));
    b.from_online[k] = online ? 1 : 0;
  }
  return b;
}

inline Batch sample_batch(const ReplayBuffer & buf, std::size_t n, Rng & rng)
{
  return sample_batch(buf.store(), n, rng, true);
}

inline Batch sample_batch(const OfflineDataset & ds, std::size_t n, Rng & rng)
{
  return sample_batch(ds.data(), n, rng, false);
}

/**
 * Mixed batch: round(n * offline_fraction) offline draws and the rest online, then
 * shuffled. An empty online buffer yields an all-offline batch; an empty (or unused)
 * offline dataset yields an all-online batch.
 */
inline Batch sample_mixed(
  const ReplayBuffer & online, const OfflineDataset * offline, std::size_t n,
  Rng & rng, double offline_fraction = 0.5)
{
  const bool have_online = !online.empty();
  const bool have_offline = offline != nullptr && !offline->empty();
  if (!have_online && !have_offline) {
    throw std::invalid_argument("sample_mixed: both sources are empty");
  }
  std::size_t n_off = static_cast<std::size_t>(std::llround(static_cast<double>(n) * offline_fraction));
  if (!have_online) {
    n_off = n;
  } else if (!have_offline) {
    n_off = 0;
  }
  const TransitionStore & on_store = online.store();
  Batch b = Batch::with_shape(on_store.obs_dim(), on_store.act_dim(), n);
  std::vector<std::uint8_t> tags(n, 0);
  std::fill(tags.begin() + static_cast<std::ptrdiff_t>(n_off), tags.end(), 1);
  std::shuffle(tags.begin(), tags.end(), rng.engine());
  for (std::size_t k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    if (tags[k]) {
      on_store.gather_into(rng.index(on_store.size()), b, col);
    } else {
      offline->data().gather_into(rng.index(offline->size()), b, col);
    }
  }
  b.from_online = std::move(tags);
  return b;
}

// ---------------------------------------------------------------------------
// "PEXD" dataset file
//
//   magic "PEXD" | u16 version = 1 | u16 env_id length, env_id | u8 grade | u64 seed |
//   u32 obs_dim | u32 act_dim | u64 count |
//   count x [obs f64*obs_dim, action f64*act_dim, reward f64, next_obs f64*obs_dim,
//            done u8, truncated u8] |
//   u32 CRC32 of everything after the version field.  All little-endian.

constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const OfflineDataset & ds)
{
  const TransitionStore & s = ds.data();
  binio::Writer w;
  w.bytes().reserve(64 + s.size() * (8 * (2 * s.obs_dim() + s.act_dim() + 1) + 2));
  w.put_bytes("PEXD");
  w.put<std::uint16_t>(kDatasetVersion);
  const std::size_t payload_start = w.bytes().size();
  w.put_string_u16(ds.meta().env_id);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ds.meta().grade));
  w.put<std::uint64_t>(ds.meta().seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.obs_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.act_dim()));
  w.put<std::uint64_t>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < s.obs_dim(); ++k) {
      w.put<double>(s.obs()[i * s.obs_dim() + k]);
    }
    for (std::size_t k = 0; k < s.act_dim(); ++k) {
      w.put<double>(s.actions()[i * s.act_dim() + k]);
    }
    w.put<double>(s.rewards()[i]);
    for (std::size_t k = 0; k < s.obs_dim(); ++k) {
      w.put<double>(s.next_obs()[i * s.obs_dim() + k]);
    }
    w.put<std::uint8_t>(s.done()[i]);
    w.put<std::uint8_t>(s.truncated()[i]);
  }
  binio::finish_with_crc(w, payload_start);
  return std::move(w.bytes());
}

inline OfflineDataset decode_dataset(const std::vector<std::uint8_t> & bytes)
{
  binio::check_header(bytes, "PEXD", kDatasetVersion);
  constexpr std::size_t payload_start = 6;
  binio::Reader r(bytes, payload_start);
  DatasetMeta meta;
  meta.env_id = r.get_string_u16();
  const auto grade = r.get<std::uint8_t>();
  meta.seed = r.get<std::uint64_t>();
  const std::size_t od = r.get<std::uint32_t>();
  const std::size_t ad = r.get<std::uint32_t>();
  const std::uint64_t count = r.get<std::uint64_t>();
  const std::size_t record = 8 * (2 * od + ad + 1) + 2;
  if (record != 0 && count > r.remaining() / record) {
    throw DataError(DataErrorCode::Truncated, "record count exceeds file size");
  }
  TransitionStore store(od, ad);
  store.reserve(count);
  Transition t;
  t.obs.resize(static_cast<Eigen::Index>(od));
  t.next_obs.resize(static_cast<Eigen::Index>(od));
  t.action.resize(static_cast<Eigen::Index>(ad));
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < od; ++k) {
      t.obs(static_cast<Eigen::Index>(k)) = r.get<double>();
    }
    for (std::size_t k = 0; k < ad; ++k) {
      t.action(static_cast<Eigen::Index>(k)) = r.get<double>();
    }
    t.reward = r.get<double>();
    for (std::size_t k = 0; k < od; ++k) {
      t.next_obs(static_cast<Eigen::Index>(k)) = r.get<double>();
    }
    t.done = r.get<std::uint8_t>() != 0;
    t.truncated = r.get<std::uint8_t>() != 0;
    store.append(t);
  }
  binio::check_trailer(bytes, r, payload_start);
  if (grade > static_cast<std::uint8_t>(BehaviorGrade::MediumReplay)) {
    throw DataError(DataErrorCode::Mismatch, "invalid grade byte");
  }
  meta.grade = static_cast<BehaviorGrade>(grade);
  return OfflineDataset(std::move(meta), std::move(store));
}

inline std::uint32_t OfflineDataset::checksum() const
{
  const auto bytes = encode_dataset(*this);
  binio::Reader r(bytes, bytes.size() - 4);
  return r.get<std::uint32_t>();
}

inline void save_dataset(const OfflineDataset & ds, const std::string & path)
{
  binio::write_file(path, encode_dataset(ds));
}

inline OfflineDataset load_dataset(const std::string & path)
{
  return decode_dataset(binio::read_file(path));
}

}  // namespace pex

#endif  // PEX_REPLAY_HPP_
