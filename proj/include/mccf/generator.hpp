#pragma once

// Synthetic click-log generator. Class-conditional distributions are
// calibrated so the dataset reproduces published aggregate statistics:
// clicks-per-IP tails, cookie-age CDF at 900 s, fraud page concentration,
// and media-degree tails. Counts are drawn through low-discrepancy Weyl
// streams so small populations (a few hundred fraud IPs) still land within
// the +-0.02 acceptance window.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mccf/click_data.hpp"
#include "mccf/common.hpp"
#include "mccf/hetero_graph.hpp"
#include "mccf/rng.hpp"

namespace mccf {

struct GenTargets {
  double fraud_tail_p10 = 0.5469;    // P(clicks/IP >= 10 | fraud)
  double genuine_tail_p10 = 0.1153;  // P(clicks/IP >= 10 | genuine)
  double fraud_cdf_900 = 0.4081;     // P(cookie age <= 900 s | fraud)
  double genuine_cdf_900 = 0.2478;   // P(cookie age <= 900 s | genuine)
  double fraud_top3_pages = 0.998;   // fraud page-visit mass on top-3 pages
  double fraud_media_tail_p3 = 0.2186;    // P(media degree >= 3 | fraud cookie)
  double genuine_media_tail_p3 = 0.0631;  // P(media degree >= 3 | genuine cookie)
};

struct GenConfig {
  long long n_clicks = 50000;
  double positive_rate = 0.1089;
  GenTargets targets;
  std::vector<std::string> page_vocab = {"Homepage", "Detail", "List",    "Search",  "Cart",   "Pay",
                                         "Profile",  "Orders", "Coupons", "Reviews", "Help",   "Logout"};
  int ring_min = 2;  // fraud ring size range, inclusive
  int ring_max = 8;
  int n_advertisers = 50;
  int keywords_per_advertiser = 4;
  double attackable_fraction = 0.3;  // share of advertisers fraud rings target
  int wide_dim = 40;
  int node_attr_dim = 32;
  int edge_attr_dim = 8;
  std::uint64_t seed = 1;
};

// Geometric on {1,2,...} with P(X >= threshold) = tail_target.
inline double solve_geometric_param(double tail_target, int threshold) {
  if (!(tail_target > 0.0 && tail_target < 1.0))
    throw ContractError("solve_geometric_param: tail target must be inside (0,1)");
  if (threshold < 2) throw ContractError("solve_geometric_param: threshold must be >= 2");
  return 1.0 - std::pow(tail_target, 1.0 / static_cast<double>(threshold - 1));
}

// Exponential with P(T <= t) = cdf_target.
inline double solve_exponential_rate(double cdf_target, double t) {
  if (!(cdf_target > 0.0 && cdf_target < 1.0))
    throw ContractError("solve_exponential_rate: cdf target must be inside (0,1)");
  if (!(t > 0.0)) throw ContractError("solve_exponential_rate: t must be positive");
  return -std::log1p(-cdf_target) / t;
}

struct GenResult {
  std::vector<ClickRecord> records;  // sorted by click_time
  HeteroGraph graph;
  std::vector<std::vector<std::string>> rings;  // cookie node ids per fraud ring
};

struct ClassStats {
  bool present = false;
  double ip_tail_p10 = 0.0;
  double age_cdf_900 = 0.0;
  double top3_share = 0.0;
  double media_tail_p3 = 0.0;
  long long n_clicks = 0;
  long long n_ips = 0;
  long long n_cookies = 0;
};

struct StatReport {
  ClassStats fraud;
  ClassStats genuine;
  double positive_rate = 0.0;
  long long n_labeled = 0;
};

namespace gen_detail {

// Assigns every capacity unit of a planned IP sequence to exactly one
// (cookie, ip) click while tracking which cookies may revisit which IPs, so
// realized clicks-per-IP match the planned geometric draws exactly.
struct Overlay {
  std::vector<long long> caps;
  std::vector<long long> rem;
  std::size_t next = 0;
  std::deque<std::size_t> pool;                      // opened, not yet exhausted
  std::vector<std::vector<std::size_t>> touchers;    // per ip: cookies that visited
  std::vector<std::vector<std::size_t>> cookie_ips;  // per cookie: distinct ips
  std::vector<std::pair<std::size_t, std::size_t>> clicks;  // (cookie, ip)

  explicit Overlay(std::vector<long long> c) : caps(std::move(c)), rem(caps), touchers(caps.size()) {}

  std::size_t new_cookie() {
    cookie_ips.emplace_back();
    return cookie_ips.size() - 1;
  }

  void touch(std::size_t ck, std::size_t ip) {
    auto& owned = cookie_ips[ck];
    if (std::find(owned.begin(), owned.end(), ip) == owned.end()) {
      owned.push_back(ip);
      touchers[ip].push_back(ck);
    }
    clicks.emplace_back(ck, ip);
    --rem[ip];
  }

  // One click on an IP the cookie has not seen yet: pooled leftovers first,
  // else open the next planned IP. Empty only when the plan is exhausted.
  std::optional<std::size_t> pull_distinct(std::size_t ck) {
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      const auto& owned = cookie_ips[ck];
      if (std::find(owned.begin(), owned.end(), *it) == owned.end()) {
        std::size_t ip = *it;
        touch(ck, ip);
        if (rem[ip] == 0) pool.erase(it);
        return ip;
      }
    }
    if (next < caps.size()) {
      std::size_t ip = next++;
      touch(ck, ip);
      if (rem[ip] > 0) pool.push_back(ip);
      return ip;
    }
    return std::nullopt;
  }

  // Repeat clicks on an already-owned IP, bounded by its leftover capacity.
  void revisit(std::size_t ck, std::size_t ip, long long want) {
    long long got = 0;
    while (got < want && rem[ip] > 0) {
      touch(ck, ip);
      ++got;
    }
    if (rem[ip] == 0) {
      auto it = std::find(pool.begin(), pool.end(), ip);
      if (it != pool.end()) pool.erase(it);
    }
  }

  // Burn leftover pool capacity with repeat visits (degrees unchanged).
  void drain() {
    while (!pool.empty()) {
      std::size_t ip = pool.front();
      pool.pop_front();
      const auto& who = touchers[ip];
      std::size_t j = 0;
      while (rem[ip] > 0) touch(who[j++ % who.size()], ip);
    }
  }
};

inline std::vector<long long> plan_capacities(long long budget, double p, WeylStream& w) {
  std::vector<long long> caps;
  long long sum = 0;
  while (sum < budget) {
    long long c = Rng::geometric_from_u(w.next(), p);
    if (sum + c > budget) c = budget - sum;  // last draw truncated to fit exactly
    caps.push_back(c);
    sum += c;
  }
  return caps;
}

inline std::string padded_id(const char* prefix, unsigned long long idx, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*llu", prefix, width, idx);
  return std::string(buf);
}

struct NodeAgg {
  long long clicks = 0;
  double sum_age = 0.0;
  std::set<int> advs;
};

}  // namespace gen_detail

inline GenResult generate_dataset(const GenConfig& cfg) {
  using gen_detail::Overlay;

  if (cfg.n_clicks < 1) throw ConfigError("generator: n_clicks must be >= 1");
  if (!(cfg.positive_rate >= 0.0 && cfg.positive_rate <= 1.0))
    throw ConfigError("generator: positive_rate must be in [0,1]");
  auto target_ok = [](double v) { return v > 0.0 && v < 1.0; };
  const GenTargets& tg = cfg.targets;
  if (!target_ok(tg.fraud_tail_p10) || !target_ok(tg.genuine_tail_p10) || !target_ok(tg.fraud_cdf_900) ||
      !target_ok(tg.genuine_cdf_900) || !target_ok(tg.fraud_top3_pages) || !target_ok(tg.fraud_media_tail_p3) ||
      !target_ok(tg.genuine_media_tail_p3))
    throw ConfigError("generator: every target must be inside (0,1)");
  if (cfg.ring_min < 1 || cfg.ring_max < cfg.ring_min) throw ConfigError("generator: bad ring size range");
  if (cfg.page_vocab.size() < 4) throw ConfigError("generator: page vocabulary needs at least 4 entries");
  if (cfg.n_advertisers < 1 || cfg.keywords_per_advertiser < 1)
    throw ConfigError("generator: advertiser/keyword counts must be positive");
  if (!(cfg.attackable_fraction > 0.0 && cfg.attackable_fraction <= 1.0))
    throw ConfigError("generator: attackable_fraction must be in (0,1]");
  if (cfg.wide_dim < 1) throw ConfigError("generator: wide_dim must be >= 1");
  if (cfg.node_attr_dim < 9) throw ConfigError("generator: node_attr_dim must be >= 9");
  if (cfg.edge_attr_dim < 4) throw ConfigError("generator: edge_attr_dim must be >= 4");

  const long long n = cfg.n_clicks;
  const long long n_f = std::llround(cfg.positive_rate * static_cast<double>(n));
  const long long n_g = n - n_f;
  if (n_f > 0 && n_f < cfg.ring_min)
    throw ConfigError("generator: fraud click budget " + std::to_string(n_f) +
                      " is smaller than the minimum ring size " + std::to_string(cfg.ring_min));

  // A slice of genuine traffic (mimic crews, below) copies the fraud ring
  // playbook wholesale: fraud-shaped address capacities, media degrees, and
  // fraud-young cookie ages. The regular genuine parameters are solved
  // against the crews' share so the class-level statistics stay on target.
  constexpr double kCrewClickShare = 0.16;   // genuine clicks made by crews, exact by budget
  constexpr double kCrewCookieShare = 0.07;  // genuine cookies in crews, measured at defaults
  auto offset_target = [](double cls, double fraud, double share, const char* what) {
    const double t = (cls - share * fraud) / (1.0 - share);
    if (!(t > 0.0 && t < 1.0))
      throw ConfigError(std::string("generator: ") + what +
                        " target is too small to offset the fraud-style genuine slice");
    return t;
  };
  const double p_ip_f = solve_geometric_param(tg.fraud_tail_p10, 10);
  const double p_md_f = solve_geometric_param(tg.fraud_media_tail_p3, 3);
  const double p_md_g = solve_geometric_param(
      offset_target(tg.genuine_media_tail_p3, tg.fraud_media_tail_p3, kCrewCookieShare, "genuine media tail"), 3);
  const double lam_f = solve_exponential_rate(tg.fraud_cdf_900, 900.0);
  const double lam_g = solve_exponential_rate(
      offset_target(tg.genuine_cdf_900, tg.fraud_cdf_900, kCrewClickShare, "genuine age"), 900.0);

  const std::uint64_t seed = cfg.seed;
  WeylStream w_cap_f(derive_seed(seed, "fraud-ip-cap"));
  WeylStream w_cap_g(derive_seed(seed, "genuine-ip-cap"));
  WeylStream w_cap_c(derive_seed(seed, "crew-ip-cap"));
  WeylStream w_md_f(derive_seed(seed, "fraud-media"));
  WeylStream w_md_g(derive_seed(seed, "genuine-media"));
  WeylStream w_md_c(derive_seed(seed, "crew-media"));
  Rng r_ring(derive_seed(seed, "rings"));
  Rng r_crew(derive_seed(seed, "crews"));
  Rng r_ff(derive_seed(seed, "fraud-fields"));
  Rng r_gf(derive_seed(seed, "genuine-fields"));
  Rng r_traits(derive_seed(seed, "genuine-traits"));
  Rng r_time(derive_seed(seed, "windows"));
  Rng r_wide(derive_seed(seed, "wide-noise"));
  Rng r_names(derive_seed(seed, "node-names"));
  Rng r_attr(derive_seed(seed, "node-attrs"));
  Rng r_edge(derive_seed(seed, "edge-attrs"));

  // Every modality must stay informative on its own and irreplaceable in
  // combination, so slices of genuine traffic mimic fraud signatures:
  // shoppers browse the same concentrated pages, impulsive users click as
  // fast and as high on the page, households share devices the way small
  // rings do. Mimic crews go further and copy the whole ring playbook
  // except for one clean channel, so dropping the modality that reads that
  // channel costs measurable ranking quality.
  constexpr double kShopperFrac = 0.40;     // genuine cookies with fraud-like page mix
  constexpr double kImpulsiveFrac = 0.35;   // genuine cookies with fraud-like cd/position
  constexpr double kHouseholdFrac = 0.30;   // genuine device owners on a shared device
  constexpr double kRevisitP = 0.55;        // geometric p for genuine home-IP revisits
  constexpr double kAttackablePull = 0.55;  // genuine click mass on attackable advertisers

  const int n_attackable =
      std::max(1, static_cast<int>(std::llround(cfg.attackable_fraction * cfg.n_advertisers)));

  // One ring on an overlay: a handful of cookies drain a shared anchor
  // address and spill onto pooled side addresses per their media degree.
  // The anchor must absorb one click per member; take the first unopened
  // address that fits, shrinking the ring to the largest remaining capacity
  // when none does. Fraud rings and mimic crews build through this same
  // routine so their connection texture is indistinguishable.
  struct RingDraw {
    std::vector<std::size_t> members;
    std::vector<long long> degrees;
  };
  auto build_ring = [&](Overlay& ov, Rng& r, WeylStream& w_md) {
    long long m = r.range(cfg.ring_min, cfg.ring_max);
    std::size_t pick = ov.caps.size();
    long long best = 0;
    std::size_t besti = ov.next;
    for (std::size_t i = ov.next; i < ov.caps.size(); ++i) {
      if (ov.caps[i] >= m) {
        pick = i;
        break;
      }
      if (ov.caps[i] > best) {
        best = ov.caps[i];
        besti = i;
      }
    }
    if (pick == ov.caps.size()) {
      m = best;
      pick = besti;
    }
    std::swap(ov.caps[ov.next], ov.caps[pick]);
    std::swap(ov.rem[ov.next], ov.rem[pick]);
    const std::size_t anchor = ov.next++;

    RingDraw rd;
    for (long long j = 0; j < m; ++j) {
      const std::size_t ck = ov.new_cookie();
      const long long d = Rng::geometric_from_u(w_md.next(), p_md_f);
      rd.members.push_back(ck);
      rd.degrees.push_back(d);
      ov.touch(ck, anchor);  // connectivity: every member visits the anchor
      const long long extra_ips = (d >= 3) ? d - 2 : 0;
      for (long long k = 0; k < extra_ips; ++k)
        if (!ov.pull_distinct(ck)) break;
    }
    std::size_t j = 0;
    while (ov.rem[anchor] > 0) ov.touch(rd.members[j++ % rd.members.size()], anchor);
    return rd;
  };

  // ---- fraud structure: rings sharing IPs through a common anchor ----
  Overlay fo(gen_detail::plan_capacities(n_f, p_ip_f, w_cap_f));
  std::vector<int> f_cookie_ring;
  std::vector<bool> f_cookie_device;
  std::vector<int> ring_adv;
  std::vector<std::vector<std::size_t>> ring_cookies;

  while (fo.next < fo.caps.size()) {
    const RingDraw rd = build_ring(fo, r_ring, w_md_f);
    const std::size_t rid = ring_cookies.size();
    ring_adv.push_back(static_cast<int>(r_ring.below(static_cast<std::uint64_t>(n_attackable))));
    ring_cookies.push_back(rd.members);
    for (long long d : rd.degrees) {
      f_cookie_ring.push_back(static_cast<int>(rid));
      f_cookie_device.push_back(d >= 2);
    }
  }
  fo.drain();
  if (static_cast<long long>(fo.clicks.size()) != n_f)
    throw ContractError("generator: fraud click budget mismatch");

  // ---- mimic crews: ring-built genuine traffic with one honest channel ----
  // A crew copies the ring algorithm on its own fraud-shaped capacity plan:
  // same size range, anchor drain, pooled side addresses, shared hardware,
  // one pinned advertiser, fraud-tail media degrees, fraud-young ages. Page
  // crews browse normally; pace crews click at a normal rhythm. Each keeps
  // exactly that one channel honest, so only the modality reading it can
  // clear them, and ablating that modality costs ranking quality.
  std::vector<bool> g_cookie_device;
  std::vector<bool> g_shopper, g_impulsive, g_fraud_age;
  std::vector<int> g_fixed_adv;  // pinned advertiser, -1: drawn per click
  std::vector<int> g_crew;       // mimic crew id, -1: solo
  int n_crews = 0;

  const long long crew_budget = std::llround(kCrewClickShare * static_cast<double>(n_g));
  Overlay co(gen_detail::plan_capacities(crew_budget, p_ip_f, w_cap_c));
  while (co.next < co.caps.size()) {
    const bool clean_pages = r_crew.uniform01() < 0.5;
    const RingDraw rd = build_ring(co, r_crew, w_md_c);
    const int adv = static_cast<int>(r_crew.below(static_cast<std::uint64_t>(n_attackable)));
    const int crew = n_crews++;
    for (long long d : rd.degrees) {
      g_cookie_device.push_back(d >= 2);
      g_shopper.push_back(!clean_pages);
      g_impulsive.push_back(clean_pages);
      g_fraud_age.push_back(true);
      g_fixed_adv.push_back(adv);
      g_crew.push_back(crew);
    }
  }
  co.drain();
  if (static_cast<long long>(co.clicks.size()) != crew_budget)
    throw ContractError("generator: crew click budget mismatch");

  // Crew addresses are fraud-shaped and fatten the genuine address tail, so
  // the solo plan is solved against the crews' exact realized tail. The solo
  // address count itself depends on the parameter; a few rounds of the fixed
  // point settle it.
  const long long n_solo = n_g - crew_budget;
  long long crew_heavy = 0;
  for (long long c : co.caps)
    if (c >= 10) ++crew_heavy;
  double p_ip_g = solve_geometric_param(tg.genuine_tail_p10, 10);
  if (!co.caps.empty()) {
    const double n_cip_d = static_cast<double>(co.caps.size());
    const double crew_tail = static_cast<double>(crew_heavy) / n_cip_d;
    for (int round = 0; round < 4; ++round) {
      const double n_sip_est = static_cast<double>(n_solo) * p_ip_g;  // plan count ~ clicks / mean
      const double w = n_cip_d / (n_cip_d + n_sip_est);
      const double t = (tg.genuine_tail_p10 - w * crew_tail) / (1.0 - w);
      if (!(t > 0.0 && t < 1.0))
        throw ConfigError("generator: genuine tail target is too small to offset the crew slice");
      p_ip_g = solve_geometric_param(t, 10);
    }
  }

  // ---- solo genuine structure: pooled IP sharing and home revisits ----
  Overlay go(gen_detail::plan_capacities(n_solo, p_ip_g, w_cap_g));
  auto new_genuine = [&](long long d, bool shopper, bool impulsive) {
    const std::size_t ck = go.new_cookie();
    g_cookie_device.push_back(d >= 2);
    g_shopper.push_back(shopper);
    g_impulsive.push_back(impulsive);
    g_fraud_age.push_back(false);
    g_fixed_adv.push_back(-1);
    g_crew.push_back(-1);
    return ck;
  };
  auto retract_genuine = [&]() {
    go.cookie_ips.pop_back();
    g_cookie_device.pop_back();
    g_shopper.pop_back();
    g_impulsive.pop_back();
    g_fraud_age.pop_back();
    g_fixed_adv.pop_back();
    g_crew.pop_back();
  };

  while (go.next < go.caps.size() || !go.pool.empty()) {
    const long long d = Rng::geometric_from_u(w_md_g.next(), p_md_g);
    const std::size_t ck = new_genuine(d, r_traits.uniform01() < kShopperFrac,
                                       r_traits.uniform01() < kImpulsiveFrac);
    const long long want = (d >= 3) ? d - 1 : 1;
    long long got = 0;
    std::optional<std::size_t> home;
    for (long long k = 0; k < want; ++k) {
      std::optional<std::size_t> ip = go.pull_distinct(ck);
      if (!ip) break;
      if (got == 0) home = ip;
      ++got;
    }
    if (got == 0) {  // plan exhausted; retract the empty cookie
      retract_genuine();
      break;
    }
    // Repeat clicks from the same address keep genuine click-per-IP counts
    // above their distinct-cookie counts, like fraud anchors.
    const long long extra = r_traits.geometric(kRevisitP) - 1;
    if (extra > 0) go.revisit(ck, *home, extra);
  }
  if (static_cast<long long>(go.clicks.size()) != n_solo)
    throw ContractError("generator: genuine click budget mismatch");

  // Crew and solo cookies and addresses merge into one genuine index space,
  // crews first.
  const std::size_t n_cip = co.caps.size(), n_sip = go.caps.size();
  const std::size_t n_cck = co.cookie_ips.size(), n_sck = go.cookie_ips.size();
  const std::size_t n_fip = fo.caps.size(), n_gip = n_cip + n_sip;
  const std::size_t n_fck = fo.cookie_ips.size(), n_gck = n_cck + n_sck;
  auto ip_gidx = [&](bool fraud, std::size_t i) { return fraud ? i : n_fip + i; };
  auto ck_gidx = [&](bool fraud, std::size_t i) { return fraud ? i : n_fck + i; };

  std::vector<std::pair<std::size_t, std::size_t>> g_clicks;
  g_clicks.reserve(co.clicks.size() + go.clicks.size());
  for (const auto& c : co.clicks) g_clicks.push_back(c);
  for (const auto& c : go.clicks) g_clicks.emplace_back(n_cck + c.first, n_cip + c.second);
  auto g_ip_count = [&](std::size_t i) {
    return i < n_cck ? co.cookie_ips[i].size() : go.cookie_ips[i - n_cck].size();
  };

  // Device slots. A ring's owners share ring hardware, up to four cookies
  // per device; a slice of genuine owners share a household device, the
  // rest get private ones. Per-cookie media degree is unchanged either way.
  std::vector<long long> device_of(n_fck + n_gck, -1);
  std::vector<int> dev_members;
  auto new_device = [&]() {
    dev_members.push_back(0);
    return static_cast<long long>(dev_members.size()) - 1;
  };
  auto attach_device = [&](std::size_t gidx, long long dev) {
    device_of[gidx] = dev;
    ++dev_members[static_cast<std::size_t>(dev)];
  };
  for (const auto& rc : ring_cookies) {
    long long dev = -1;
    for (std::size_t ck : rc) {
      if (!f_cookie_device[ck]) continue;
      if (dev < 0 || dev_members[static_cast<std::size_t>(dev)] >= 4) dev = new_device();
      attach_device(ck_gidx(true, ck), dev);
    }
  }
  {
    std::vector<long long> crew_dev(static_cast<std::size_t>(n_crews), -1);
    long long house = -1;
    int house_target = 0;
    for (std::size_t i = 0; i < n_gck; ++i) {
      if (!g_cookie_device[i]) continue;
      if (g_crew[i] >= 0) {
        long long& cd = crew_dev[static_cast<std::size_t>(g_crew[i])];
        if (cd < 0 || dev_members[static_cast<std::size_t>(cd)] >= 4) cd = new_device();
        attach_device(ck_gidx(false, i), cd);
      } else if (r_traits.uniform01() < kHouseholdFrac) {
        if (house < 0 || dev_members[static_cast<std::size_t>(house)] >= house_target) {
          house = new_device();
          house_target = 2 + static_cast<int>(r_traits.below(2));
        }
        attach_device(ck_gidx(false, i), house);
      } else {
        attach_device(ck_gidx(false, i), new_device());
      }
    }
  }
  const long long n_dev = static_cast<long long>(dev_members.size());

  // Realized click tallies drive wide features and node attributes.
  std::vector<long long> ip_clicks(n_fip + n_gip, 0), ck_clicks(n_fck + n_gck, 0);
  for (const auto& c : fo.clicks) {
    ++ip_clicks[ip_gidx(true, c.second)];
    ++ck_clicks[ck_gidx(true, c.first)];
  }
  for (const auto& c : g_clicks) {
    ++ip_clicks[ip_gidx(false, c.second)];
    ++ck_clicks[ck_gidx(false, c.first)];
  }
  std::vector<int> ck_degree(n_fck + n_gck, 0);
  for (std::size_t i = 0; i < n_fck; ++i)
    ck_degree[ck_gidx(true, i)] =
        static_cast<int>(fo.cookie_ips[i].size()) + (f_cookie_device[i] ? 1 : 0);
  for (std::size_t i = 0; i < n_gck; ++i)
    ck_degree[ck_gidx(false, i)] =
        static_cast<int>(g_ip_count(i)) + (g_cookie_device[i] ? 1 : 0);

  // ---- activity windows ----
  // Every ring, crew, and solo cookie operates inside one short burst,
  // placed in creation order across the two weeks. Address pools are
  // consumed in creation order too, so the cookies an address collects are
  // neighbors in time, the way real traffic overlaps. A chronological split
  // therefore holds out mostly unseen addresses and cookies, and a model
  // has to rank them by behavior rather than by recognizing the node.
  constexpr long long kWindowStart = 1700000000;
  constexpr long long kWindowLen = 1209600;       // 14 days
  constexpr double kBurstMean = 28800.0;          // 8 h typical burst
  constexpr double kBurstCap = 172800.0;          // 48 h at most
  std::vector<double> ck_tstart(n_fck + n_gck, 0.0), ck_tlen(n_fck + n_gck, 1.0);
  auto place_window = [&](double idx, double count) {
    const double len = std::min(r_time.exponential(1.0 / kBurstMean), kBurstCap);
    double start = (idx + r_time.uniform01()) / count * static_cast<double>(kWindowLen);
    start = std::max(0.0, std::min(start, static_cast<double>(kWindowLen) - len));
    return std::pair<double, double>(start, len);
  };
  for (std::size_t rid = 0; rid < ring_cookies.size(); ++rid) {
    const auto [s, l] = place_window(static_cast<double>(rid), static_cast<double>(ring_cookies.size()));
    for (std::size_t ck : ring_cookies[rid]) {
      ck_tstart[ck_gidx(true, ck)] = s;
      ck_tlen[ck_gidx(true, ck)] = l;
    }
  }
  for (std::size_t i = 0; i < n_cck;) {
    const int crew = g_crew[i];
    const auto [s, l] = place_window(static_cast<double>(crew), static_cast<double>(n_crews));
    for (; i < n_cck && g_crew[i] == crew; ++i) {
      ck_tstart[ck_gidx(false, i)] = s;
      ck_tlen[ck_gidx(false, i)] = l;
    }
  }
  for (std::size_t i = 0; i < n_sck; ++i) {
    const auto [s, l] = place_window(static_cast<double>(i), static_cast<double>(n_sck));
    ck_tstart[ck_gidx(false, n_cck + i)] = s;
    ck_tlen[ck_gidx(false, n_cck + i)] = l;
  }

  // ---- per-click field draws ----
  const int V = static_cast<int>(cfg.page_vocab.size());
  const double kSeqP = 1.0 / 3.0;  // mean sequence length 3 for both classes
  auto draw_len = [&](Rng& r) {
    return static_cast<int>(std::min<long long>(r.geometric(kSeqP), 50));
  };
  auto fraud_pages = [&](Rng& r) {
    const double mass = tg.fraud_top3_pages;
    const double stick = std::min(0.4, mass);
    const int len = draw_len(r);
    std::vector<int> pg;
    pg.reserve(static_cast<std::size_t>(len));
    auto top3 = [&]() { return static_cast<int>(r.below(3)); };
    auto rest = [&]() { return 3 + static_cast<int>(r.below(static_cast<std::uint64_t>(V - 3))); };
    int cur = (r.uniform01() < mass) ? top3() : rest();
    pg.push_back(cur);
    for (int i = 1; i < len; ++i) {
      const double u = r.uniform01();
      if (cur < 3) {
        if (u < stick) {
          // stay
        } else if (u < mass) {
          const int o = static_cast<int>(r.below(2));
          cur = (o >= cur) ? o + 1 : o;
        } else {
          cur = rest();
        }
      } else {
        cur = (u < mass) ? top3() : rest();
      }
      pg.push_back(cur);
    }
    return pg;
  };
  auto genuine_pages = [&](Rng& r) {
    const int len = draw_len(r);
    std::vector<int> pg(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) pg[static_cast<std::size_t>(i)] = static_cast<int>(r.below(static_cast<std::uint64_t>(V)));
    return pg;
  };

  constexpr double kCdMeanFraud = 1.5, kCdMeanGenuine = 12.0;

  struct Draft {
    std::size_t ck, ip;
    bool fraud;
    long long t;
    double age, cd;
    int pos, adv, kw;
    std::vector<int> pages;
    std::vector<double> wide;
  };
  std::vector<Draft> drafts;
  drafts.reserve(static_cast<std::size_t>(n));

  for (const auto& c : fo.clicks) {
    Draft d;
    d.fraud = true;
    d.ck = ck_gidx(true, c.first);
    d.ip = ip_gidx(true, c.second);
    d.t = kWindowStart +
          static_cast<long long>(std::floor(ck_tstart[d.ck] + r_ff.uniform01() * ck_tlen[d.ck]));
    d.age = r_ff.exponential(lam_f);
    d.cd = r_ff.exponential(1.0 / kCdMeanFraud);
    d.pos = static_cast<int>((r_ff.uniform01() < 0.9) ? r_ff.range(1, 3) : r_ff.range(1, 10));
    d.adv = ring_adv[static_cast<std::size_t>(f_cookie_ring[c.first])];
    d.kw = static_cast<int>(r_ff.below(static_cast<std::uint64_t>(cfg.keywords_per_advertiser)));
    d.pages = fraud_pages(r_ff);
    drafts.push_back(std::move(d));
  }
  for (const auto& c : g_clicks) {
    const bool shopper = g_shopper[c.first];
    const bool impulsive = g_impulsive[c.first];
    Draft d;
    d.fraud = false;
    d.ck = ck_gidx(false, c.first);
    d.ip = ip_gidx(false, c.second);
    d.t = kWindowStart +
          static_cast<long long>(std::floor(ck_tstart[d.ck] + r_gf.uniform01() * ck_tlen[d.ck]));
    d.age = r_gf.exponential(g_fraud_age[c.first] ? lam_f : lam_g);
    d.cd = r_gf.exponential(1.0 / (impulsive ? kCdMeanFraud : kCdMeanGenuine));
    if (impulsive)
      d.pos = static_cast<int>((r_gf.uniform01() < 0.9) ? r_gf.range(1, 3) : r_gf.range(1, 10));
    else
      d.pos = static_cast<int>(r_gf.range(1, 10));
    if (g_fixed_adv[c.first] >= 0)
      d.adv = g_fixed_adv[c.first];
    else if (n_attackable >= cfg.n_advertisers)
      d.adv = static_cast<int>(r_gf.below(static_cast<std::uint64_t>(cfg.n_advertisers)));
    else if (r_gf.uniform01() < kAttackablePull)
      d.adv = static_cast<int>(r_gf.below(static_cast<std::uint64_t>(n_attackable)));
    else
      d.adv = n_attackable +
              static_cast<int>(r_gf.below(static_cast<std::uint64_t>(cfg.n_advertisers - n_attackable)));
    d.kw = static_cast<int>(r_gf.below(static_cast<std::uint64_t>(cfg.keywords_per_advertiser)));
    d.pages = shopper ? fraud_pages(r_gf) : genuine_pages(r_gf);
    drafts.push_back(std::move(d));
  }

  // Wide features: heavily blurred copies of the volume statistics (the
  // graph carries sharp per-node versions) plus click delay and ad
  // position, which appear in no other modality.
  for (Draft& d : drafts) {
    std::vector<double> w(static_cast<std::size_t>(cfg.wide_dim), 0.0);
    auto put = [&](std::size_t i, double v) {
      if (i < w.size()) w[i] = v;
    };
    put(0, std::log1p(static_cast<double>(ip_clicks[d.ip])) + 1.0 * r_wide.normal());
    put(1, std::log1p(static_cast<double>(ck_clicks[d.ck])) + 1.0 * r_wide.normal());
    put(2, std::log1p(d.age) + 0.8 * r_wide.normal());
    put(3, std::log1p(d.cd) + 0.25 * r_wide.normal());
    put(4, d.pos / 10.0 + 0.05 * r_wide.normal());
    put(5, static_cast<double>(d.pages.size()) / 10.0 + 0.1 * r_wide.normal());
    for (std::size_t i = 6; i < w.size(); ++i) w[i] = r_wide.normal();
    d.wide = std::move(w);
  }

  // ---- node names: shuffled so file order carries no label information ----
  auto shuffled_names = [&](const char* prefix, std::size_t count, int width) {
    std::vector<std::size_t> perm(count);
    for (std::size_t i = 0; i < count; ++i) perm[i] = i;
    r_names.partial_shuffle(perm, count);
    std::vector<std::string> names(count);
    for (std::size_t i = 0; i < count; ++i)
      names[i] = gen_detail::padded_id(prefix, static_cast<unsigned long long>(perm[i]), width);
    return names;
  };
  const std::vector<std::string> ip_names = shuffled_names("ip_", n_fip + n_gip, 6);
  const std::vector<std::string> ck_names = shuffled_names("ck_", n_fck + n_gck, 6);
  const std::vector<std::string> dv_names = shuffled_names("dv_", static_cast<std::size_t>(n_dev), 6);

  // ---- records, time-sorted ----
  std::vector<std::size_t> order(drafts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return drafts[a].t < drafts[b].t; });

  GenResult out{std::vector<ClickRecord>(), HeteroGraph(cfg.node_attr_dim, cfg.edge_attr_dim), {}};
  out.records.reserve(drafts.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Draft& d = drafts[order[pos]];
    ClickRecord r;
    r.click_id = gen_detail::padded_id("c", static_cast<unsigned long long>(pos), 7);
    r.click_time = d.t;
    r.ip = ip_names[d.ip];
    r.cookie_id = ck_names[d.ck];
    if (device_of[d.ck] >= 0) r.device_id = dv_names[static_cast<std::size_t>(device_of[d.ck])];
    r.advertiser_id = gen_detail::padded_id("adv_", static_cast<unsigned long long>(d.adv), 2);
    r.keyword_id = gen_detail::padded_id(
        "kw_", static_cast<unsigned long long>(d.adv * cfg.keywords_per_advertiser + d.kw), 3);
    r.abs_pos = d.pos;
    r.cd_time = d.cd;
    r.cookie_time = d.t - std::llround(d.age);
    r.pages.reserve(d.pages.size());
    for (int p : d.pages) r.pages.push_back(cfg.page_vocab[static_cast<std::size_t>(p)]);
    r.wide = d.wide;
    r.label = d.fraud ? Label::fraud : Label::genuine;
    out.records.push_back(std::move(r));
  }

  // ---- aggregates for node and edge attributes ----
  using gen_detail::NodeAgg;
  std::vector<NodeAgg> ip_agg(n_fip + n_gip), ck_agg(n_fck + n_gck);
  std::vector<NodeAgg> dev_agg(static_cast<std::size_t>(n_dev));
  std::map<std::pair<std::size_t, std::size_t>, NodeAgg> pair_agg;
  for (const Draft& d : drafts) {
    std::vector<NodeAgg*> touched = {&ip_agg[d.ip], &ck_agg[d.ck], &pair_agg[{d.ck, d.ip}]};
    if (device_of[d.ck] >= 0) touched.push_back(&dev_agg[static_cast<std::size_t>(device_of[d.ck])]);
    for (NodeAgg* a : touched) {
      a->clicks += 1;
      a->sum_age += d.age;
      a->advs.insert(d.adv);
    }
  }

  // ---- graph: nodes in name order, edges in record order ----
  struct NodePlan {
    NodeType type;
    std::string name;
    std::size_t idx;  // index into the matching aggregate array
  };
  std::vector<NodePlan> nodes;
  nodes.reserve(ip_names.size() + ck_names.size() + dv_names.size());
  for (std::size_t i = 0; i < ip_names.size(); ++i) nodes.push_back({NodeType::ip, ip_names[i], i});
  for (std::size_t i = 0; i < ck_names.size(); ++i) nodes.push_back({NodeType::cookie, ck_names[i], i});
  for (long long j = 0; j < n_dev; ++j)
    nodes.push_back({NodeType::device, dv_names[static_cast<std::size_t>(j)], static_cast<std::size_t>(j)});
  std::sort(nodes.begin(), nodes.end(), [](const NodePlan& a, const NodePlan& b) { return a.name < b.name; });

  auto stat_attrs = [&](NodeType t, const NodeAgg& a, int degree) {
    std::vector<double> v(static_cast<std::size_t>(cfg.node_attr_dim), 0.0);
    v[static_cast<std::size_t>(t)] = 1.0;
    const double mean_age = a.clicks > 0 ? a.sum_age / static_cast<double>(a.clicks) : 0.0;
    v[3] = std::log1p(static_cast<double>(a.clicks)) + 0.3 * r_attr.normal();
    v[4] = std::log1p(static_cast<double>(degree)) + 0.3 * r_attr.normal();
    v[5] = std::log1p(mean_age) + 0.6 * r_attr.normal();
    v[6] = std::log1p(static_cast<double>(a.advs.size())) + 0.3 * r_attr.normal();
    for (std::size_t i = 7; i < v.size(); ++i) v[i] = r_attr.normal();
    return v;
  };
  auto ip_degree = [&](std::size_t gidx) {
    if (gidx < n_fip) return static_cast<int>(fo.touchers[gidx].size());
    return static_cast<int>(go.touchers[gidx - n_fip].size());
  };
  for (const NodePlan& np : nodes) {
    std::vector<double> attrs;
    if (np.type == NodeType::ip)
      attrs = stat_attrs(NodeType::ip, ip_agg[np.idx], ip_degree(np.idx));
    else if (np.type == NodeType::cookie)
      attrs = stat_attrs(NodeType::cookie, ck_agg[np.idx], ck_degree[np.idx]);
    else
      attrs = stat_attrs(NodeType::device, dev_agg[np.idx], dev_members[np.idx]);
    out.graph.add_node(np.type, np.name, attrs);
  }

  std::set<std::pair<std::size_t, std::size_t>> seen_pair;
  std::set<std::size_t> seen_dev_ck;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Draft& d = drafts[order[pos]];
    if (seen_pair.insert({d.ck, d.ip}).second) {
      const NodeAgg& a = pair_agg[{d.ck, d.ip}];
      std::vector<double> e(static_cast<std::size_t>(cfg.edge_attr_dim), 0.0);
      e[0] = std::log1p(static_cast<double>(a.clicks)) + 0.3 * r_edge.normal();
      e[1] = std::log1p(a.clicks > 0 ? a.sum_age / static_cast<double>(a.clicks) : 0.0) + 0.5 * r_edge.normal();
      for (std::size_t i = 2; i < e.size(); ++i) e[i] = r_edge.normal();
      out.graph.add_edge(*out.graph.find(NodeType::cookie, ck_names[d.ck]),
                         *out.graph.find(NodeType::ip, ip_names[d.ip]), "click", e);
    }
    if (device_of[d.ck] >= 0 && seen_dev_ck.insert(d.ck).second) {
      std::vector<double> e(static_cast<std::size_t>(cfg.edge_attr_dim), 0.0);
      for (std::size_t i = 2; i < e.size(); ++i) e[i] = r_edge.normal();
      out.graph.add_edge(*out.graph.find(NodeType::cookie, ck_names[d.ck]),
                         *out.graph.find(NodeType::device, dv_names[static_cast<std::size_t>(device_of[d.ck])]),
                         "uses", e);
    }
  }

  out.rings.reserve(ring_cookies.size());
  for (const auto& rc : ring_cookies) {
    std::vector<std::string> names;
    names.reserve(rc.size());
    for (std::size_t ck : rc) names.push_back(ck_names[ck]);
    out.rings.push_back(std::move(names));
  }
  return out;
}

// Recomputes the calibrated statistics from a labeled dataset. IPs and
// cookies are classified by the majority label of their records (ties count
// as fraud). Each class's page share is measured against its own top-3 pages.
inline StatReport validate_statistics(const std::vector<ClickRecord>& records, const HeteroGraph& graph) {
  struct Tally {
    long long fraud = 0, genuine = 0;
    bool fraud_majority() const { return fraud >= genuine; }
    long long total() const { return fraud + genuine; }
  };
  std::map<std::string, Tally> by_ip, by_cookie;
  std::map<std::string, long long> page_counts[2];
  long long n_clicks[2] = {0, 0};
  long long age_hits[2] = {0, 0};
  long long visits[2] = {0, 0};

  for (const ClickRecord& r : records) {
    if (r.label == Label::unlabeled) continue;
    const int c = (r.label == Label::fraud) ? 1 : 0;
    ++n_clicks[c];
    if (r.click_time - r.cookie_time <= 900) ++age_hits[c];
    Tally& t = by_ip[r.ip];
    (c ? t.fraud : t.genuine) += 1;
    if (r.cookie_id) {
      Tally& ct = by_cookie[*r.cookie_id];
      (c ? ct.fraud : ct.genuine) += 1;
    }
    for (const std::string& p : r.pages) {
      ++page_counts[c][p];
      ++visits[c];
    }
  }

  StatReport rep;
  rep.n_labeled = n_clicks[0] + n_clicks[1];
  rep.positive_rate =
      rep.n_labeled > 0 ? static_cast<double>(n_clicks[1]) / static_cast<double>(rep.n_labeled) : 0.0;

  for (int c = 0; c < 2; ++c) {
    ClassStats& cs = c ? rep.fraud : rep.genuine;
    if (n_clicks[c] == 0) continue;
    cs.present = true;
    cs.n_clicks = n_clicks[c];
    cs.age_cdf_900 = static_cast<double>(age_hits[c]) / static_cast<double>(n_clicks[c]);

    long long ips = 0, ip_tail = 0;
    for (const auto& [ip, t] : by_ip) {
      if (t.fraud_majority() != (c == 1)) continue;
      ++ips;
      if (t.total() >= 10) ++ip_tail;
    }
    cs.n_ips = ips;
    cs.ip_tail_p10 = ips > 0 ? static_cast<double>(ip_tail) / static_cast<double>(ips) : 0.0;

    // Top-3 pages ranked by (count desc, name asc) within the class.
    std::vector<std::pair<std::string, long long>> ranked(page_counts[c].begin(), page_counts[c].end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    long long top = 0;
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) top += ranked[i].second;
    cs.top3_share = visits[c] > 0 ? static_cast<double>(top) / static_cast<double>(visits[c]) : 0.0;

    long long cks = 0, md_tail = 0;
    for (const auto& [ck, t] : by_cookie) {
      if (t.fraud_majority() != (c == 1)) continue;
      ++cks;
      auto node = graph.find(NodeType::cookie, ck);
      if (node && graph.degree(*node) >= 3) ++md_tail;
    }
    cs.n_cookies = cks;
    cs.media_tail_p3 = cks > 0 ? static_cast<double>(md_tail) / static_cast<double>(cks) : 0.0;
  }
  return rep;
}

}  // namespace mccf
