// Copyright 2026 The xstain Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xstain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xstain/checkpoint.hpp"
#include "xstain/rng.hpp"

namespace xstain {

namespace {

constexpr std::uint64_t kTagProbe = 31;
constexpr std::uint64_t kTagFolds = 32;

std::vector<double> unit(std::span<const float> v) {
  std::vector<double> out(v.begin(), v.end());
  double n = 0.0;
  for (double x : out) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : out) x /= n;
  return out;
}

double dotd(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  sd = 0.0;
  if (v.size() < 2) return;
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
}

// Column mean/std over the given rows; constant columns get std 1.
struct Scaler {
  std::vector<double> mu, sd;
};

Scaler fit_scaler(const Matrix<double>& x, const std::vector<std::size_t>& rows, bool enabled) {
  Scaler s{std::vector<double>(x.cols, 0.0), std::vector<double>(x.cols, 1.0)};
  if (!enabled) return s;
  for (std::size_t j = 0; j < x.cols; ++j) {
    double m = 0.0;
    for (auto r : rows) m += x(r, j);
    m /= static_cast<double>(rows.size());
    double v = 0.0;
    for (auto r : rows) v += (x(r, j) - m) * (x(r, j) - m);
    v /= static_cast<double>(rows.size());
    s.mu[j] = m;
    s.sd[j] = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  return s;
}

Matrix<double> apply_scaler(const Matrix<double>& x, const std::vector<std::size_t>& rows, const Scaler& s) {
  Matrix<double> out(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = (x(rows[i], j) - s.mu[j]) / s.sd[j];
  return out;
}

std::string hash_hex(const nlohmann::json& j) {
  const std::string s = j.dump();
  const auto h = fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t data_hash(const Matrix<double>& x) {
  return fnv1a({reinterpret_cast<const std::uint8_t*>(x.data.data()), x.data.size() * sizeof(double)});
}

std::vector<float> ihc_free_embedding(const PatchBag& he, const AdapterParams<float>& adapter,
                                      const MilParams<float>& mil) {
  return mil_aggregate(adapter_forward(he.embeddings, adapter), mil).data;
}

}  // namespace

SlideEmbedding embed_he_only(const PatchBag& he, const AdapterParams<float>& adapter, const MilParams<float>& mil,
                             const std::string& case_id) {
  require(he.stain == StainId::kHE, "embed: bag '" + he.slide_id + "' is not an H&E bag");
  require(he.dim() == adapter.dim() && he.dim() == mil.dim(),
          "embed: bag '" + he.slide_id + "' width does not match the checkpoints");
  return {case_id, StainId::kHE, ihc_free_embedding(he, adapter, mil)};
}

std::vector<SlideEmbedding> embed_cases(const CaseSet& cases, const AdapterParams<float>& adapter,
                                        const MilParams<float>& mil) {
  std::vector<SlideEmbedding> out;
  out.reserve(cases.size());
  for (const auto& c : cases.cases) out.push_back(embed_he_only(c.he(), adapter, mil, c.case_id));
  return out;
}

std::vector<SlideEmbedding> mean_pool_cases(const CaseSet& cases) {
  std::vector<SlideEmbedding> out;
  for (const auto& c : cases.cases) {
    const auto& z = c.he().embeddings;
    std::vector<double> acc(z.cols, 0.0);
    for (std::size_t i = 0; i < z.rows; ++i)
      for (std::size_t j = 0; j < z.cols; ++j) acc[j] += z(i, j);
    std::vector<float> v(z.cols);
    for (std::size_t j = 0; j < z.cols; ++j) v[j] = static_cast<float>(acc[j] / static_cast<double>(z.rows));
    out.push_back({c.case_id, StainId::kHE, std::move(v)});
  }
  return out;
}

CaseSet embeddings_as_cases(const CaseSet& source, const std::vector<SlideEmbedding>& emb) {
  require(emb.size() == source.size(), "embeddings: count does not match the case set");
  CaseSet out;
  out.labels = source.labels;
  out.survival = source.survival;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    require(emb[i].case_id == source.cases[i].case_id, "embeddings: case order mismatch at '" + emb[i].case_id + "'");
    PatchBag bag;
    bag.slide_id = emb[i].case_id + "_HE";
    bag.stain = StainId::kHE;
    bag.coords = {GridPos{0, 0}};
    bag.embeddings = Matrix<float>::row_vector(emb[i].vector);
    AlignedCase c;
    c.case_id = emb[i].case_id;
    c.bags.emplace(StainId::kHE, std::move(bag));
    out.cases.push_back(std::move(c));
  }
  return out;
}

EmbeddingTable table_from_cases(const CaseSet& cases) {
  require(!cases.cases.empty(), "embeddings: empty case set");
  EmbeddingTable t;
  const std::size_t d = cases.cases[0].he().dim();
  t.x = Matrix<double>(cases.size(), d);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases.cases[i];
    const auto& he = c.he();
    require(he.size() == 1, "embeddings: case '" + c.case_id + "' holds " + std::to_string(he.size()) +
                                " rows; expected a single slide embedding");
    require(he.dim() == d, "embeddings: case '" + c.case_id + "' has a different width");
    for (std::size_t j = 0; j < d; ++j) t.x(i, j) = he.embeddings(0, j);
    t.case_ids.push_back(c.case_id);
  }
  t.labels = cases.labels;
  t.survival = cases.survival;
  return t;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]), "auc: non-finite score");
    require(labels[i] == 0 || labels[i] == 1, "auc: labels must be 0 or 1");
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, kept integral.
  std::uint64_t twice_u = 0, neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? p : n) += 1;
      ++j;
    }
    twice_u += 2 * p * neg_below + p * n;
    neg_below += n;
    n_pos += p;
    n_neg += n;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::kInvalidArgument, "auc: both classes must be present");
  return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

double c_index(std::span<const double> risks, std::span<const double> times, std::span<const std::uint8_t> events) {
  require(risks.size() == times.size() && risks.size() == events.size(), "c_index: input lengths differ");
  std::uint64_t twice_conc = 0, comparable = 0;
  for (std::size_t i = 0; i < risks.size(); ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < risks.size(); ++j) {
      if (!(times[i] < times[j])) continue;
      ++comparable;
      if (risks[i] > risks[j]) twice_conc += 2;
      else if (risks[i] == risks[j]) twice_conc += 1;
    }
  }
  if (comparable == 0) fail(ErrorKind::kInvalidArgument, "c_index: no comparable pairs");
  return static_cast<double>(twice_conc) / static_cast<double>(2 * comparable);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j[r.param_key] = r.param;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["seeds"] = r.seeds;
  j["values"] = r.values;
  j["config_hash"] = r.config_hash;
  return j;
}

std::vector<std::uint64_t> default_seeds(int n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  std::iota(s.begin(), s.end(), 0);
  return s;
}

EvalReport kshot_probe(const Matrix<double>& x, std::span<const int> labels, int k,
                       std::span<const std::uint64_t> seeds, const ProbeOptions& opts) {
  require(labels.size() == x.rows, "kshot: labels do not cover every embedding");
  require(k >= 1, "kshot: k must be positive");
  require(!seeds.empty(), "kshot: at least one seed is required");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "kshot: labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() <= static_cast<std::size_t>(k))
      fail(ErrorKind::kInvalidArgument, "kshot: class " + std::to_string(c) + " has " +
                                            std::to_string(by_class[c].size()) + " cases; need more than k=" +
                                            std::to_string(k) + " to leave a test set");

  EvalReport rep;
  rep.task = "kshot_auc";
  rep.param_key = "k";
  rep.param = k;
  rep.seeds.assign(seeds.begin(), seeds.end());
  for (auto seed : seeds) {
    Rng rng(mix_seed(seed, kTagProbe));
    std::vector<std::uint8_t> in_train(x.rows, 0);
    std::vector<std::size_t> train;
    for (int c = 0; c < 2; ++c) {
      const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(by_class[c].size()),
                                                        static_cast<std::uint32_t>(k));
      for (auto p : picks) {
        train.push_back(by_class[c][p]);
        in_train[by_class[c][p]] = 1;
      }
    }
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < x.rows; ++i)
      if (!in_train[i]) test.push_back(i);

    const Scaler sc = fit_scaler(x, train, opts.standardize);
    const Matrix<double> xt = apply_scaler(x, train, sc);
    std::vector<double> w(x.cols, 0.0), gw(x.cols);
    double b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (int step = 0; step < opts.steps; ++step) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (std::size_t i = 0; i < train.size(); ++i) {
        const double r = sigmoid(dotd(xt.row(i), w) + b) - labels[train[i]];
        for (std::size_t j = 0; j < x.cols; ++j) gw[j] += r * xt(i, j);
        gb += r;
      }
      for (std::size_t j = 0; j < x.cols; ++j) w[j] -= opts.lr * (gw[j] * inv_n + opts.weight_decay * w[j]);
      b -= opts.lr * gb * inv_n;
    }

    const Matrix<double> xs = apply_scaler(x, test, sc);
    std::vector<double> scores(test.size());
    std::vector<int> y(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      scores[i] = dotd(xs.row(i), w) + b;
      y[i] = labels[test[i]];
    }
    rep.values.push_back(auc(scores, y));
  }
  mean_std(rep.values, rep.mean, rep.std);
  rep.config_hash = hash_hex({{"task", rep.task},
                              {"k", k},
                              {"seeds", rep.seeds},
                              {"steps", opts.steps},
                              {"lr", opts.lr},
                              {"weight_decay", opts.weight_decay},
                              {"standardize", opts.standardize},
                              {"data", data_hash(x)}});
  return rep;
}

EvalReport survival_cv(const Matrix<double>& x, std::span<const Survival> survival, int folds, std::uint64_t seed,
                       const CoxOptions& opts) {
  require(survival.size() == x.rows, "survival: annotations do not cover every embedding");
  require(folds >= 2, "survival: need at least 2 folds for a held-out split");
  std::vector<std::size_t> ev, cens;
  for (std::size_t i = 0; i < survival.size(); ++i) {
    require(survival[i].time > 0.0, "survival: times must be positive");
    (survival[i].event ? ev : cens).push_back(i);
  }
  if (ev.size() < static_cast<std::size_t>(folds))
    fail(ErrorKind::kInvalidArgument, "survival: " + std::to_string(ev.size()) + " events cannot cover " +
                                          std::to_string(folds) + " folds");

  Rng rng(mix_seed(seed, kTagFolds));
  rng.shuffle(ev);
  rng.shuffle(cens);
  std::vector<int> fold_of(x.rows);
  for (std::size_t i = 0; i < ev.size(); ++i) fold_of[ev[i]] = static_cast<int>(i % folds);
  for (std::size_t i = 0; i < cens.size(); ++i) fold_of[cens[i]] = static_cast<int>(i % folds);

  EvalReport rep;
  rep.task = "survival_cindex";
  rep.param_key = "folds";
  rep.param = folds;
  rep.seeds = {seed};
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < x.rows; ++i) (fold_of[i] == f ? test : train).push_back(i);
    const Scaler sc = fit_scaler(x, train, opts.standardize);
    const Matrix<double> xt = apply_scaler(x, train, sc);

    // Risk sets via descending time order; tied times share a risk set.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return survival[train[a]].time > survival[train[b]].time; });
    std::size_t n_events = 0;
    for (auto i : train) n_events += survival[i].event ? 1 : 0;
    require(n_events > 0, "survival: training folds hold no events");

    std::vector<double> beta(x.cols, 0.0), g(x.cols), r(train.size()), s1(x.cols);
    for (int step = 0; step < opts.steps; ++step) {
      double rmax = -INFINITY;
      for (std::size_t i = 0; i < train.size(); ++i) {
        r[i] = dotd(xt.row(i), beta);
        rmax = std::max(rmax, r[i]);
      }
      std::fill(g.begin(), g.end(), 0.0);
      std::fill(s1.begin(), s1.end(), 0.0);
      double s0 = 0.0;
      for (std::size_t a = 0; a < order.size();) {
        std::size_t b = a;
        const double t = survival[train[order[a]]].time;
        while (b < order.size() && survival[train[order[b]]].time == t) {
          const std::size_t i = order[b];
          const double e = std::exp(r[i] - rmax);
          s0 += e;
          for (std::size_t j = 0; j < x.cols; ++j) s1[j] += e * xt(i, j);
          ++b;
        }
        for (std::size_t c = a; c < b; ++c) {
          const std::size_t i = order[c];
          if (!survival[train[i]].event) continue;
          for (std::size_t j = 0; j < x.cols; ++j) g[j] -= xt(i, j) - s1[j] / s0;
        }
        a = b;
      }
      for (std::size_t j = 0; j < x.cols; ++j) beta[j] -= opts.lr * g[j] / static_cast<double>(n_events);
    }

    const Matrix<double> xs = apply_scaler(x, test, sc);
    std::vector<double> risks(test.size()), times(test.size());
    std::vector<std::uint8_t> events(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      risks[i] = dotd(xs.row(i), beta);
      times[i] = survival[test[i]].time;
      events[i] = survival[test[i]].event ? 1 : 0;
    }
    try {
      rep.values.push_back(c_index(risks, times, events));
    } catch (const Error&) {
      fail(ErrorKind::kInvalidArgument, "survival: fold " + std::to_string(f) + " has no comparable pairs");
    }
  }
  mean_std(rep.values, rep.mean, rep.std);
  rep.config_hash = hash_hex({{"task", rep.task},
                              {"folds", folds},
                              {"seed", seed},
                              {"steps", opts.steps},
                              {"lr", opts.lr},
                              {"standardize", opts.standardize},
                              {"data", data_hash(x)}});
  return rep;
}

PatchRetrieval patch_retrieval(const CaseSet& cases, const AdapterParams<float>* adapter) {
  PatchRetrieval r;
  std::size_t pooled_hits = 0, stain_hits = 0;
  for (const auto& c : cases.cases) {
    const Matrix<float> he = adapter ? adapter_forward(c.he().embeddings, *adapter) : c.he().embeddings;
    std::vector<std::vector<std::vector<double>>> keys;  // per IHC stain, per row
    for (const auto& [stain, bag] : c.bags) {
      if (!is_ihc(stain)) continue;
      auto& k = keys.emplace_back(bag.size());
      for (std::size_t i = 0; i < bag.size(); ++i) k[i] = unit(bag.embeddings.row(i));
    }
    if (keys.empty()) continue;
    for (std::size_t i = 0; i < he.rows; ++i) {
      const auto q = unit(he.row(i));
      double pooled_s = -INFINITY;
      std::size_t pooled_row = 0;
      for (const auto& k : keys) {
        double best_s = -INFINITY;
        std::size_t best = 0;
        for (std::size_t j = 0; j < k.size(); ++j) {
          const double s = dotd(q, k[j]);
          if (s > best_s) {
            best_s = s;
            best = j;
          }
        }
        stain_hits += best == i ? 1 : 0;
        ++r.stain_queries;
        if (best_s > pooled_s) {
          pooled_s = best_s;
          pooled_row = best;
        }
      }
      pooled_hits += pooled_row == i ? 1 : 0;
      ++r.queries;
    }
  }
  if (r.queries == 0) fail(ErrorKind::kInvalidArgument, "retrieval: no IHC bags");
  r.top1 = static_cast<double>(pooled_hits) / static_cast<double>(r.queries);
  r.top1_per_stain = static_cast<double>(stain_hits) / static_cast<double>(r.stain_queries);
  return r;
}

SlideRetrieval slide_retrieval(const std::vector<std::vector<float>>& he, const std::vector<std::vector<float>>& ihc,
                               const std::vector<std::size_t>& ihc_owner) {
  require(ihc.size() == ihc_owner.size(), "retrieval: owner list does not match IHC embeddings");
  if (ihc.empty()) fail(ErrorKind::kInvalidArgument, "retrieval: no IHC bags");
  std::vector<std::vector<double>> keys;
  for (const auto& v : ihc) keys.push_back(unit(v));
  std::size_t hits = 0;
  double gap_sum = 0.0;
  std::size_t gap_n = 0;
  for (std::size_t i = 0; i < he.size(); ++i) {
    const auto q = unit(he[i]);
    double best_s = -INFINITY, same = 0.0, other = 0.0;
    std::size_t best = 0, n_same = 0, n_other = 0;
    for (std::size_t j = 0; j < keys.size(); ++j) {
      const double s = dotd(q, keys[j]);
      if (s > best_s) {
        best_s = s;
        best = j;
      }
      if (ihc_owner[j] == i) {
        same += s;
        ++n_same;
      } else {
        other += s;
        ++n_other;
      }
    }
    hits += ihc_owner[best] == i ? 1 : 0;
    if (n_same > 0 && n_other > 0) {
      gap_sum += same / static_cast<double>(n_same) - other / static_cast<double>(n_other);
      ++gap_n;
    }
  }
  SlideRetrieval r;
  r.top1 = he.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(he.size());
  r.cosine_gap = gap_n ? gap_sum / static_cast<double>(gap_n) : 0.0;
  return r;
}

RetrievalReport retrieval_diagnostics(const CaseSet& cases, const AdapterParams<float>* adapter,
                                      const MilParams<float>* mil, const CafParams<float>* caf) {
  RetrievalReport rep;
  rep.patch = patch_retrieval(cases, adapter);
  if (mil == nullptr) return rep;

  std::vector<std::vector<float>> he_only, fused, ihc;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases.cases[i];
    const Matrix<float> he = adapter ? adapter_forward(c.he().embeddings, *adapter) : c.he().embeddings;
    he_only.push_back(mil_aggregate(he, *mil).data);
    std::vector<Matrix<float>> stack = {he};
    for (const auto& [stain, bag] : c.bags) {
      if (!is_ihc(stain)) continue;
      stack.push_back(bag.embeddings);
      ihc.push_back(mil_aggregate(bag.embeddings, *mil).data);
      owner.push_back(i);
    }
    if (caf != nullptr) {
      if (stack.size() < 2) fail(ErrorKind::kAlignment, "retrieval: case '" + c.case_id + "' has no IHC bag to fuse");
      fused.push_back(mil_aggregate(caf_fuse(stack, *caf), *mil).data);
    }
  }
  rep.slide_he_only = slide_retrieval(he_only, ihc, owner);
  if (caf != nullptr) rep.slide_fused = slide_retrieval(fused, ihc, owner);
  return rep;
}

nlohmann::json to_json(const RetrievalReport& r) {
  nlohmann::json j;
  j["task"] = "retrieval";
  j["patch_top1"] = r.patch.top1;
  j["patch_queries"] = r.patch.queries;
  j["patch_top1_per_stain"] = r.patch.top1_per_stain;
  auto slide = [](const SlideRetrieval& s) { return nlohmann::json{{"top1", s.top1}, {"cosine_gap", s.cosine_gap}}; };
  if (r.slide_he_only) j["slide_he_only"] = slide(*r.slide_he_only);
  if (r.slide_fused) j["slide_fused"] = slide(*r.slide_fused);
  return j;
}

}  // namespace xstain
