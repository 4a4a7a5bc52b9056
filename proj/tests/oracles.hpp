#pragma once

// Independent reference implementations the tests compare against. Each one
// is deliberately naive: counting ranks, dense grids, coalition enumeration,
// exhaustive grounding, brute-force path enumeration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "upho/attribution.hpp"
#include "upho/graphstore.hpp"
#include "upho/ontology.hpp"
#include "upho/regression.hpp"

namespace upho::oracle {

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<long double> ranks(const std::vector<double>& v) {
  std::vector<long double> out;
  for (double a : v) {
    long double less = 0, equal = 0;
    for (double b : v) {
      if (b < a) ++less;
      if (b == a) ++equal;
    }
    out.push_back(1 + less + (equal - 1) / 2);
  }
  return out;
}

inline long double pearson(const std::vector<long double>& x, const std::vector<long double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return static_cast<double>(pearson(ranks(x), ranks(y)));
}

/// Solves A z = rhs by Gaussian elimination with partial pivoting.
inline std::vector<long double> solve(std::vector<std::vector<long double>> a, std::vector<long double> rhs) {
  const std::size_t n = rhs.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(rhs[c], rhs[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      rhs[r] -= f * rhs[c];
    }
  }
  std::vector<long double> z(n);
  for (std::size_t r = n; r-- > 0;) {
    long double s = rhs[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * z[k];
    z[r] = s / a[r][r];
  }
  return z;
}

/// VIF of column j: regress it on the others plus an intercept through the
/// uncentered normal equations, VIF = 1 / (1 - R^2).
inline double vif(const std::vector<std::vector<double>>& cols, std::size_t j) {
  const std::size_t n = cols[j].size();
  std::vector<std::vector<long double>> design;  // rows of [1, others...]
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> r{1.0L};
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (k != j) r.push_back(cols[k][i]);
    }
    design.push_back(r);
  }
  const std::size_t p = design.front().size();
  std::vector<std::vector<long double>> xtx(p, std::vector<long double>(p, 0));
  std::vector<long double> xty(p, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += design[i][a] * cols[j][i];
      for (std::size_t b = 0; b < p; ++b) xtx[a][b] += design[i][a] * design[i][b];
    }
  }
  const auto beta = solve(xtx, xty);
  long double mean = 0;
  for (double v : cols[j]) mean += v;
  mean /= n;
  long double sse = 0, sst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double pred = 0;
    for (std::size_t a = 0; a < p; ++a) pred += beta[a] * design[i][a];
    sse += (cols[j][i] - pred) * (cols[j][i] - pred);
    sst += (cols[j][i] - mean) * (cols[j][i] - mean);
  }
  return static_cast<double>(sst / sse);
}

struct Instance {
  std::vector<std::vector<double>> x;  // rows
  std::vector<double> y;
  double C, eps;
};

inline double primal(const Instance& in, const std::vector<double>& w, double b) {
  double reg = 0;
  for (double v : w) reg += v * v;
  double loss = 0;
  for (std::size_t i = 0; i < in.y.size(); ++i) {
    double f = b;
    for (std::size_t j = 0; j < w.size(); ++j) f += w[j] * in.x[i][j];
    loss += std::max(0.0, std::abs(in.y[i] - f) - in.eps);
  }
  return 0.5 * reg + in.C * loss;
}

struct Minimum {
  std::vector<double> w;
  double b;
  double value;
};

/// Dense grid over (w, b), re-centred and shrunk around the best point each
/// round.
inline Minimum grid_minimize(const Instance& in) {
  const std::size_t p = in.x.front().size();
  const double ymin = *std::min_element(in.y.begin(), in.y.end());
  const double ymax = *std::max_element(in.y.begin(), in.y.end());
  // At the optimum 1/2|w|^2 <= F(0, median-ish b) <= C * sum|y - ymid|.
  double f0 = 0;
  for (double v : in.y) f0 += std::abs(v - 0.5 * (ymin + ymax));
  const double wmax = std::sqrt(2 * in.C * f0) + 1e-9;
  double xmax = 0;
  for (const auto& r : in.x) {
    for (double v : r) xmax = std::max(xmax, std::abs(v));
  }
  std::vector<double> center(p + 1, 0.0), half(p + 1, wmax);
  center[p] = 0.5 * (ymin + ymax);
  half[p] = 0.5 * (ymax - ymin) + wmax * xmax * static_cast<double>(p) + 1.0;

  const int pts = p == 1 ? 201 : 41;
  Minimum best{std::vector<double>(p, 0.0), center[p], primal(in, std::vector<double>(p, 0.0), center[p])};
  // Halving keeps the previous incumbent well inside the next box, so narrow
  // valleys of the kinked objective cannot strand the search.
  for (int round = 0; round < 60; ++round) {
    std::vector<int> idx(p + 1, 0);
    std::vector<double> point(p + 1);
    std::vector<double> round_best = center;
    double round_value = std::numeric_limits<double>::infinity();
    while (true) {
      for (std::size_t d = 0; d <= p; ++d) point[d] = center[d] + half[d] * (2.0 * idx[d] / (pts - 1) - 1.0);
      const std::vector<double> w(point.begin(), point.begin() + static_cast<std::ptrdiff_t>(p));
      const double v = primal(in, w, point[p]);
      if (v < round_value) {
        round_value = v;
        round_best = point;
      }
      std::size_t d = 0;
      while (d <= p && ++idx[d] == pts) idx[d++] = 0;
      if (d > p) break;
    }
    if (round_value < best.value) {
      best = {std::vector<double>(round_best.begin(), round_best.begin() + static_cast<std::ptrdiff_t>(p)),
              round_best[p], round_value};
    }
    center = round_best;
    for (auto& h : half) h *= 0.5;
  }
  return best;
}

/// Exact Shapley values by coalition enumeration, with absent features held
/// at their background means (interventional value function).
inline std::vector<double> shapley(const LinearSvrModel& m, const std::vector<double>& x, const std::vector<double>& mu) {
  const std::size_t p = x.size();
  const auto value = [&](unsigned mask) {
    std::vector<double> z(p);
    for (std::size_t j = 0; j < p; ++j) z[j] = (mask >> j) & 1U ? x[j] : mu[j];
    return m.predict_raw(z);
  };
  std::vector<double> fact(p + 1, 1.0);
  for (std::size_t k = 1; k <= p; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> phi(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (unsigned s = 0; s < (1U << p); ++s) {
      if ((s >> j) & 1U) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcount(s));
      const double weight = fact[size] * fact[p - size - 1] / fact[p];
      phi[j] += weight * (value(s | (1U << j)) - value(s));
    }
  }
  return phi;
}

/// Reflexive-transitive isA closure by repeated relaxation.
inline std::set<std::pair<Term, Term>> isa_closure(const Ontology& ont) {
  std::set<std::pair<Term, Term>> out(ont.isa.begin(), ont.isa.end());
  for (const auto& c : ont.concepts) out.insert({c, c});
  for (const auto& [c, p] : ont.isa) {
    out.insert({c, c});
    out.insert({p, p});
  }
  for (bool grew = true; grew;) {
    grew = false;
    const auto snapshot = out;
    for (const auto& [a, b] : snapshot) {
      for (const auto& [c, d] : snapshot) {
        if (b == c && out.insert({a, d}).second) grew = true;
      }
    }
  }
  return out;
}

using Triple = std::tuple<std::string, std::string, std::string>;

/// Naive fixpoint by exhaustive grounding: every rule variable is tried
/// against every node id, every body atom is checked for a witnessing triple.
/// Returns the triples derived beyond the asserted ones.
inline std::set<Triple> infer(const KnowledgeGraph& start) {
  const Ontology& ont = start.ontology();
  const auto closure = isa_closure(ont);
  const auto under = [&](const Term& t, const Term& anc) { return t == anc || closure.count({t, anc}) > 0; };

  std::map<std::string, Node> nodes;
  for (const auto& n : start.nodes()) nodes.emplace(n.id, n);
  std::set<Triple> asserted, derived;
  for (const auto& e : start.edges()) asserted.insert({e.subject, e.relation, e.object});

  const auto holds = [&](const std::string& s, const std::string& rel, const std::string& o) {
    if (asserted.count({s, rel, o}) || derived.count({s, rel, o})) return true;
    for (const auto& l : ont.links) {
      if (l.relation == rel && l.object.key() == o && nodes.count(o) && under(nodes.at(s).term, l.subject)) return true;
    }
    return false;
  };
  // A constant operand stands for any node typed under it.
  const auto candidates = [&](const Operand& op, const std::map<std::string, std::string>& env) {
    std::vector<std::string> out;
    if (auto v = std::get_if<Variable>(&op)) {
      out.push_back(env.at(v->name));
    } else {
      for (const auto& [id, n] : nodes) {
        if (under(n.term, std::get<Term>(op))) out.push_back(id);
      }
    }
    return out;
  };
  const auto satisfied = [&](const RuleAxiom& r, const std::map<std::string, std::string>& env) {
    for (const auto& atom : r.body) {
      bool any = false;
      for (const auto& s : candidates(atom.subject, env)) {
        for (const auto& o : candidates(atom.object, env)) any = any || holds(s, atom.relation, o);
      }
      if (!any) return false;
    }
    for (const auto& g : r.guards) {
      const auto& v = nodes.at(env.at(g.var)).value;
      if (!v) return false;
      double rhs;
      if (auto w = std::get_if<Variable>(&g.rhs)) {
        const auto t = start.thresholds().find(env.at(w->name));
        if (t == start.thresholds().end()) return false;
        rhs = t->second;
      } else {
        rhs = std::get<double>(g.rhs);
      }
      const bool ok = g.op == CmpOp::ge ? *v >= rhs : g.op == CmpOp::gt ? *v > rhs : g.op == CmpOp::le ? *v <= rhs : *v < rhs;
      if (!ok) return false;
    }
    return true;
  };

  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : ont.rules) {
      std::set<std::string> vars;
      for (const auto& atom : r.body) {
        for (const auto* op : {&atom.subject, &atom.object}) {
          if (auto v = std::get_if<Variable>(op)) vars.insert(v->name);
        }
      }
      const std::vector<std::string> names(vars.begin(), vars.end());
      std::vector<std::string> ids;
      for (const auto& [id, _] : nodes) ids.push_back(id);
      std::vector<std::size_t> pick(names.size(), 0);
      std::vector<std::map<std::string, std::string>> fired;
      while (true) {
        std::map<std::string, std::string> env;
        for (std::size_t k = 0; k < names.size(); ++k) env[names[k]] = ids[pick[k]];
        if (satisfied(r, env)) fired.push_back(env);
        std::size_t k = 0;
        while (k < pick.size() && ++pick[k] == ids.size()) pick[k++] = 0;
        if (k == pick.size()) break;
      }
      for (const auto& env : fired) {
        const auto end = [&](const Operand& op) {
          if (auto v = std::get_if<Variable>(&op)) return env.at(v->name);
          const Term& t = std::get<Term>(op);
          nodes.try_emplace(t.key(), Node{t.key(), t.name, t, NodeKind::concept_, std::nullopt, std::nullopt});
          return t.key();
        };
        const auto s = end(r.head.subject), o = end(r.head.object);
        const Triple t{s, r.head.relation, o};
        if (!asserted.count(t) && derived.insert(t).second) changed = true;
      }
    }
  }
  return derived;
}

/// Every simple whitelisted path source -> target of at most `max_len`
/// edges, as edge-id sequences, by enumerating all edge sequences.
inline std::set<std::vector<std::string>> pathways(const KnowledgeGraph& g, const std::string& source,
                                                   const std::string& target, const std::set<std::string>& whitelist,
                                                   std::size_t max_len) {
  std::set<std::vector<std::string>> out;
  const auto& edges = g.edges();
  if (edges.empty()) return out;
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::size_t> pick(len, 0);
    while (true) {
      bool ok = true;
      std::vector<std::string> visited{source};
      for (std::size_t k = 0; k < len && ok; ++k) {
        const Edge& e = edges[pick[k]];
        ok = whitelist.count(e.relation) && e.subject == visited.back() &&
             std::find(visited.begin(), visited.end(), e.object) == visited.end();
        visited.push_back(e.object);
      }
      if (ok && visited.back() == target) {
        std::vector<std::string> ids;
        for (auto i : pick) ids.push_back(edges[i].id);
        out.insert(ids);
      }
      std::size_t k = 0;
      while (k < len && ++pick[k] == edges.size()) pick[k++] = 0;
      if (k == len) break;
    }
  }
  return out;
}

}  // namespace upho::oracle
