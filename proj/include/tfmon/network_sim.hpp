#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <variant>
#include <vector>

#include "tfmon/result.hpp"

// Radio network model: binary-disc links derived from node positions,
// min-hop routing to the single coordinator, stop-and-wait ack/retry per
// hop with Bernoulli loss, duty-cycle battery accounting, and the
// deterministic event queue the simulation runs on.

namespace tfmon {

enum class NodeRole : std::uint8_t { Coordinator, Router, EndDevice };

constexpr std::string_view to_string(NodeRole r) {
  switch (r) {
    case NodeRole::Coordinator: return "coordinator";
    case NodeRole::Router: return "router";
    case NodeRole::EndDevice: return "end_device";
  }
  return "?";
}

struct Node {
  std::uint64_t id = 0;
  NodeRole role = NodeRole::EndDevice;
  double x_m = 0.0;
  double y_m = 0.0;

  bool operator==(const Node&) const = default;
};

class Topology {
 public:
  Topology() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  double max_range_m() const { return max_range_m_; }
  std::uint64_t coordinator_id() const { return coordinator_id_; }

  bool has_node(std::uint64_t id) const { return neighbors_.count(id) != 0; }

  const Node& node(std::uint64_t id) const {
    for (const auto& n : nodes_)
      if (n.id == id) return n;
    throw Error(Errc::InvalidConfig, "unknown node id");
  }

  // Neighbor ids sorted ascending; link (a,b) exists iff distance <= range.
  const std::vector<std::uint64_t>& neighbors(std::uint64_t id) const {
    auto it = neighbors_.find(id);
    if (it == neighbors_.end()) throw Error(Errc::InvalidConfig, "unknown node id");
    return it->second;
  }

  std::size_t link_count() const { return link_count_; }

  friend Topology build_topology(std::vector<Node> nodes, double max_range_m);

 private:
  std::vector<Node> nodes_;
  double max_range_m_ = 1000.0;
  std::uint64_t coordinator_id_ = 0;
  std::map<std::uint64_t, std::vector<std::uint64_t>> neighbors_;
  std::size_t link_count_ = 0;
};

inline Topology build_topology(std::vector<Node> nodes, double max_range_m = 1000.0) {
  Topology t;
  t.max_range_m_ = max_range_m;

  int coordinators = 0;
  for (const auto& n : nodes) {
    if (!t.neighbors_.emplace(n.id, std::vector<std::uint64_t>{}).second) {
      std::ostringstream msg;
      msg << "node id " << n.id << " appears twice";
      throw Error(Errc::DuplicateNodeId, msg.str());
    }
    if (n.role == NodeRole::Coordinator) {
      ++coordinators;
      t.coordinator_id_ = n.id;
    }
  }
  if (coordinators == 0) throw Error(Errc::NoCoordinator, "topology needs a coordinator");
  if (coordinators > 1) throw Error(Errc::MultipleCoordinators, "topology allows exactly one coordinator");

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const double dx = nodes[i].x_m - nodes[j].x_m;
      const double dy = nodes[i].y_m - nodes[j].y_m;
      if (std::hypot(dx, dy) <= max_range_m) {
        t.neighbors_[nodes[i].id].push_back(nodes[j].id);
        t.neighbors_[nodes[j].id].push_back(nodes[i].id);
        ++t.link_count_;
      }
    }
  }
  for (auto& [id, nbrs] : t.neighbors_) std::sort(nbrs.begin(), nbrs.end());

  t.nodes_ = std::move(nodes);
  return t;
}

// Node sequence from src to the coordinator inclusive; hops() == size - 1.
struct RoutePath {
  std::vector<std::uint64_t> nodes;
  int hops() const { return static_cast<int>(nodes.size()) - 1; }
};

// Min-hop path to the coordinator. Only the coordinator and routers relay;
// end devices are always leaves. Ties broken by the smallest next-hop id, so
// the path is unique and deterministic.
inline Result<RoutePath> route(const Topology& t, std::uint64_t src) {
  if (!t.has_node(src)) return fail(Errc::NoRoute, "unknown source node");
  if (src == t.coordinator_id()) return RoutePath{{src}};

  // BFS from the coordinator over relay-capable nodes.
  std::map<std::uint64_t, int> dist;
  dist[t.coordinator_id()] = 0;
  std::queue<std::uint64_t> frontier;
  frontier.push(t.coordinator_id());
  while (!frontier.empty()) {
    const std::uint64_t u = frontier.front();
    frontier.pop();
    const auto& nu = t.node(u);
    if (nu.role == NodeRole::EndDevice) continue;  // leaves never forward
    for (std::uint64_t v : t.neighbors(u)) {
      if (dist.emplace(v, dist[u] + 1).second) frontier.push(v);
    }
  }

  auto it = dist.find(src);
  if (it == dist.end()) {
    std::ostringstream msg;
    msg << "node " << src << " cannot reach the coordinator";
    return fail(Errc::NoRoute, msg.str());
  }

  RoutePath path;
  path.nodes.push_back(src);
  std::uint64_t cur = src;
  int d = it->second;
  while (cur != t.coordinator_id()) {
    std::uint64_t next = 0;
    bool found = false;
    for (std::uint64_t v : t.neighbors(cur)) {  // ascending, first match wins the tie
      auto dv = dist.find(v);
      if (dv == dist.end() || dv->second != d - 1) continue;
      const auto& nv = t.node(v);
      if (nv.role == NodeRole::EndDevice) continue;
      next = v;
      found = true;
      break;
    }
    if (!found) return fail(Errc::NoRoute, "inconsistent distance field");
    path.nodes.push_back(next);
    cur = next;
    --d;
  }
  return path;
}

struct RadioModel {
  double per_link_loss_prob = 0.0;
  int max_retries = 3;
  std::uint32_t ack_timeout_ms = 50;
  std::uint32_t tx_duration_ms = 5;

  bool operator==(const RadioModel&) const = default;
};

inline void validate(const RadioModel& r) {
  if (r.per_link_loss_prob < 0.0 || r.per_link_loss_prob > 1.0)
    throw Error(Errc::InvalidConfig, "radio.loss_prob must be in [0, 1]");
  if (r.max_retries < 0) throw Error(Errc::InvalidConfig, "radio.max_retries must be >= 0");
}

struct BatteryModel {
  double capacity_mah = 1000.0;
  double active_current_ma = 40.0;
  double sleep_current_ma = 0.01;
  double duty_cycle = 0.01;  // fraction of time awake, in (0, 1]

  bool operator==(const BatteryModel&) const = default;
};

inline void validate(const BatteryModel& b) {
  if (b.capacity_mah <= 0.0) throw Error(Errc::InvalidConfig, "battery.capacity_mah must be > 0");
  if (b.sleep_current_ma < 0.0 || b.active_current_ma < b.sleep_current_ma)
    throw Error(Errc::InvalidConfig, "battery currents must satisfy active >= sleep >= 0");
  if (b.duty_cycle <= 0.0 || b.duty_cycle > 1.0)
    throw Error(Errc::InvalidConfig, "battery.duty_cycle must be in (0, 1]");
}

inline double lifetime_hours(const BatteryModel& b) {
  validate(b);
  const double avg_ma = b.duty_cycle * b.active_current_ma + (1.0 - b.duty_cycle) * b.sleep_current_ma;
  return b.capacity_mah / avg_ma;
}

// One seeded generator per run, consumed strictly in event order. Raw engine
// output is mapped to [0,1) by hand; std::uniform_real_distribution is
// implementation-defined and would break byte-identical traces.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  bool chance(double p) { return uniform01() < p; }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct Delivered {
  std::uint64_t at_ms = 0;
  int hops = 0;
};

struct Dropped {
  std::uint64_t at_ms = 0;
  int at_hop = 0;    // 1-based index of the failing hop
  int attempts = 0;  // attempts spent on that hop (== 1 + max_retries)
};

using DeliveryOutcome = std::variant<Delivered, Dropped>;

inline bool delivered(const DeliveryOutcome& o) { return std::holds_alternative<Delivered>(o); }

// Walks the min-hop route, drawing one Bernoulli trial per attempt. Each
// attempt costs tx_duration_ms; a missed ack adds ack_timeout_ms before the
// retry. Frame bytes travel unmodified (the link is 8-bit clean).
inline Result<DeliveryOutcome> transmit(const Topology& t, std::uint64_t src,
                                        const RadioModel& radio, SimRng& rng,
                                        std::uint64_t start_ms = 0) {
  auto path = route(t, src);
  if (!path.ok()) return fail(path.error(), path.message());

  std::uint64_t now = start_ms;
  const int hops = path.value().hops();
  for (int hop = 1; hop <= hops; ++hop) {
    bool hop_ok = false;
    int attempts = 0;
    while (attempts <= radio.max_retries) {
      ++attempts;
      now += radio.tx_duration_ms;
      if (!rng.chance(radio.per_link_loss_prob)) {
        hop_ok = true;
        break;
      }
      now += radio.ack_timeout_ms;
    }
    if (!hop_ok) return DeliveryOutcome{Dropped{now, hop, attempts}};
  }
  return DeliveryOutcome{Delivered{now, hops}};
}

// Time-ordered queue with insertion-order tie-breaking; the simulation clock
// is the timestamp of the event being processed and never runs backwards.
template <typename E>
class EventQueue {
 public:
  void schedule(std::uint64_t t_ms, E event) {
    if (t_ms < now_ms_) throw Error(Errc::InvalidConfig, "cannot schedule into the past");
    heap_.push(Entry{t_ms, next_seq_++, std::move(event)});
  }

  bool empty() const { return heap_.empty(); }
  std::uint64_t now_ms() const { return now_ms_; }

  std::optional<std::pair<std::uint64_t, E>> pop() {
    if (heap_.empty()) return std::nullopt;
    Entry top = heap_.top();
    heap_.pop();
    now_ms_ = top.t_ms;
    return std::make_pair(top.t_ms, std::move(top.event));
  }

 private:
  struct Entry {
    std::uint64_t t_ms;
    std::uint64_t seq;
    E event;
    bool operator>(const Entry& o) const {
      return t_ms != o.t_ms ? t_ms > o.t_ms : seq > o.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t now_ms_ = 0;
};

}  // namespace tfmon
