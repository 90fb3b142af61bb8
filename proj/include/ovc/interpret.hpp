#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ovc/attention_log.hpp"
#include "ovc/metrics.hpp"

// Post-hoc analytics over an attention log. Padded region slots are copies
// of real regions and never count as occurrences.

namespace ovc::interpret {

// ---------------------------------------------------------------- subjects

struct Subject {
  std::string label;
  double delta = 0.0;       // mu_s - mu_o
  double mean_self = 0.0;   // mu_s
  double mean_other = 0.0;  // mu_o
  std::size_t occurrences = 0;
};

struct SubjectResult {
  std::vector<Subject> subjects;  // by decreasing delta
  std::size_t images = 0;         // qualifying images
  std::string diagnostic;         // set when nothing qualified
};

/// Train-split images of `category` (every category when empty) whose
/// predicted mean exceeds 5. A label is a subject when its mean attention
/// beats the mean over all other objects by at least `margin`.
inline SubjectResult discover_subjects(const AttentionLog& log, const std::string& category, double margin = 0.04) {
  std::map<std::string, std::pair<double, std::size_t>> per_label;
  double total = 0.0;
  std::size_t total_n = 0;
  SubjectResult res;
  for (const auto& im : log.images) {
    if (im.split != Split::train || im.predicted_mean <= metrics::kBinaryCutoff) continue;
    if (!category.empty() && im.semantic_category != category) continue;
    ++res.images;
    for (const auto& r : im.regions) {
      if (r.padded) continue;
      auto& [sum, n] = per_label[r.category];
      sum += r.attention;
      ++n;
      total += r.attention;
      ++total_n;
    }
  }
  if (res.images == 0) {
    res.diagnostic = "no train-split images" + (category.empty() ? std::string() : " of category '" + category + "'") +
                     " with predicted mean above 5";
    return res;
  }
  for (const auto& [label, sn] : per_label) {
    const auto [sum, n] = sn;
    if (n == total_n) continue;  // no other objects to compare against
    const double mu_s = sum / static_cast<double>(n);
    const double mu_o = (total - sum) / static_cast<double>(total_n - n);
    if (mu_s - mu_o >= margin) res.subjects.push_back({label, mu_s - mu_o, mu_s, mu_o, n});
  }
  std::stable_sort(res.subjects.begin(), res.subjects.end(),
                   [](const Subject& a, const Subject& b) { return a.delta > b.delta; });
  return res;
}

// ------------------------------------------------------------ correlations

enum class LabelKind { category, attribute };
enum class ScoreSource { predicted, truth };
enum class CorrelationMethod { pearson, spearman };

inline LabelKind parse_label_kind(std::string_view s) {
  if (s == "category") return LabelKind::category;
  if (s == "attribute") return LabelKind::attribute;
  throw std::invalid_argument("unknown label kind '" + std::string(s) + "' (expected category or attribute)");
}

inline ScoreSource parse_score_source(std::string_view s) {
  if (s == "predicted") return ScoreSource::predicted;
  if (s == "truth") return ScoreSource::truth;
  throw std::invalid_argument("unknown score source '" + std::string(s) + "' (expected predicted or truth)");
}

inline CorrelationMethod parse_method(std::string_view s) {
  if (s == "pearson") return CorrelationMethod::pearson;
  if (s == "spearman") return CorrelationMethod::spearman;
  throw std::invalid_argument("unknown correlation method '" + std::string(s) + "' (expected pearson or spearman)");
}

struct CorrelationOptions {
  std::size_t top_k = 50;
  ScoreSource score = ScoreSource::predicted;
  CorrelationMethod method = CorrelationMethod::pearson;
  std::size_t min_occurrences = 3;
};

struct CorrelationRow {
  std::string label;  // "a" or "a|b" for pairs
  std::optional<double> train;
  std::optional<double> test;
  std::size_t train_n = 0;
  std::size_t test_n = 0;
};

struct CorrelationTable {
  std::vector<CorrelationRow> rows;

  const CorrelationRow* find(std::string_view label) const {
    for (const auto& r : rows)
      if (r.label == label) return &r;
    return nullptr;
  }
};

namespace detail {

struct Samples {
  std::vector<double> x, y;
};

inline const std::vector<std::string>& labels_of(const RegionAttention& r, LabelKind kind,
                                                 std::vector<std::string>& scratch) {
  if (kind == LabelKind::attribute) return r.attributes;
  scratch.assign(1, r.category);
  return scratch;
}

inline double score_of(const ImageAttention& im, ScoreSource s) {
  return s == ScoreSource::predicted ? im.predicted_mean : im.truth_mean;
}

inline std::optional<double> correlate(const Samples& s, const CorrelationOptions& o) {
  if (s.x.size() < o.min_occurrences) return std::nullopt;
  try {
    const double r = o.method == CorrelationMethod::pearson ? metrics::plcc(s.x, s.y) : metrics::srcc(s.x, s.y);
    return std::clamp(r, -1.0, 1.0);
  } catch (const std::invalid_argument&) {
    return std::nullopt;  // zero variance
  }
}

/// The `top_k` labels by train-split occurrence count, ties by name.
inline std::vector<std::string> top_labels(const AttentionLog& log, LabelKind kind, std::size_t top_k) {
  std::map<std::string, std::size_t> freq;
  std::vector<std::string> scratch;
  for (const auto& im : log.images) {
    if (im.split != Split::train) continue;
    for (const auto& r : im.regions) {
      if (r.padded) continue;
      for (const auto& l : labels_of(r, kind, scratch)) ++freq[l];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> v(freq.begin(), freq.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(top_k, v.size()); ++i) out.push_back(v[i].first);
  return out;
}

inline void require_both_splits(const AttentionLog& log) {
  bool train = false, test = false;
  for (const auto& im : log.images) (im.split == Split::train ? train : test) = true;
  if (!train || !test) throw std::invalid_argument("correlation analysis needs images from both splits");
}

inline CorrelationTable finish(const std::vector<std::string>& keys, const std::map<std::string, Samples>& train,
                               const std::map<std::string, Samples>& test, const CorrelationOptions& o) {
  CorrelationTable t;
  static const Samples none;
  for (const auto& k : keys) {
    const auto tr = train.find(k);
    const auto te = test.find(k);
    const Samples& a = tr == train.end() ? none : tr->second;
    const Samples& b = te == test.end() ? none : te->second;
    t.rows.push_back({k, correlate(a, o), correlate(b, o), a.x.size(), b.x.size()});
  }
  return t;
}

}  // namespace detail

/// Per label: correlation between the attention of each region carrying the
/// label and its image's score, separately for train and test.
inline CorrelationTable attention_score_correlation(const AttentionLog& log, LabelKind kind,
                                                    const CorrelationOptions& o = {}) {
  detail::require_both_splits(log);
  const auto labels = detail::top_labels(log, kind, o.top_k);
  const std::set<std::string> wanted(labels.begin(), labels.end());
  std::map<std::string, detail::Samples> train, test;
  std::vector<std::string> scratch;
  for (const auto& im : log.images) {
    auto& dst = im.split == Split::train ? train : test;
    const double score = detail::score_of(im, o.score);
    for (const auto& r : im.regions) {
      if (r.padded) continue;
      for (const auto& l : detail::labels_of(r, kind, scratch)) {
        if (!wanted.count(l)) continue;
        dst[l].x.push_back(r.attention);
        dst[l].y.push_back(score);
      }
    }
  }
  return detail::finish(labels, train, test, o);
}

inline std::string pair_key(const std::string& a, const std::string& b) { return a < b ? a + "|" + b : b + "|" + a; }

/// Per unordered label pair {a, b} among the top labels: correlation between
/// alpha_ij over ordered region pairs (i != j) whose labels are a and b, and
/// the image score. Rows appear for every pair seen in either split.
inline CorrelationTable pair_attention_correlation(const AttentionLog& log, LabelKind kind,
                                                   const CorrelationOptions& o = {}) {
  detail::require_both_splits(log);
  const auto labels = detail::top_labels(log, kind, o.top_k);
  const std::set<std::string> wanted(labels.begin(), labels.end());
  std::map<std::string, detail::Samples> train, test;
  std::set<std::string> seen;
  std::vector<std::string> si, sj;
  bool any_alpha = false;
  for (const auto& im : log.images) {
    if (im.alpha.empty()) continue;
    any_alpha = true;
    auto& dst = im.split == Split::train ? train : test;
    const double score = detail::score_of(im, o.score);
    const std::size_t n = im.regions.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (im.regions[i].padded) continue;
      const auto& li = detail::labels_of(im.regions[i], kind, si);
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || im.regions[j].padded) continue;
        const auto& lj = detail::labels_of(im.regions[j], kind, sj);
        for (const auto& a : li) {
          if (!wanted.count(a)) continue;
          for (const auto& b : lj) {
            if (!wanted.count(b)) continue;
            const std::string key = pair_key(a, b);
            seen.insert(key);
            dst[key].x.push_back(im.alpha_at(i, j));
            dst[key].y.push_back(score);
          }
        }
      }
    }
  }
  if (!any_alpha) throw std::invalid_argument("pair_attention_correlation: log carries no graph attention");
  return detail::finish(std::vector<std::string>(seen.begin(), seen.end()), train, test, o);
}

/// Pearson correlation between the train and test columns over rows where
/// both are defined.
inline double cross_split_correlation(const CorrelationTable& t) {
  std::vector<double> a, b;
  for (const auto& r : t.rows)
    if (r.train && r.test) {
      a.push_back(*r.train);
      b.push_back(*r.test);
    }
  if (a.size() < 3) {
    throw std::invalid_argument("cross_split_correlation: needs at least 3 rows defined on both splits, got " +
                                std::to_string(a.size()));
  }
  return metrics::plcc(a, b);
}

// ----------------------------------------------------------------- reports

inline void write_tsv(const CorrelationTable& t, std::ostream& out) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  out << "label\ttrain_r\ttest_r\ttrain_n\ttest_n\n";
  for (const auto& r : t.rows)
    out << r.label << '\t' << cell(r.train) << '\t' << cell(r.test) << '\t' << r.train_n << '\t' << r.test_n << '\n';
}

inline void write_subjects(const SubjectResult& s, std::ostream& out) {
  out << "label\tdelta\tmean_self\tmean_other\toccurrences\n";
  char buf[128];
  for (const auto& x : s.subjects) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\t", x.delta, x.mean_self, x.mean_other);
    out << x.label << buf << x.occurrences << '\n';
  }
}

/// Attention-vs-score scatter for one label with its least-squares line.
inline std::string scatter_svg(const std::vector<double>& x, const std::vector<double>& y, const std::string& title) {
  const double W = 480, H = 360, pad = 40;
  const auto [x0, x1] = std::minmax_element(x.begin(), x.end());
  const auto [y0, y1] = std::minmax_element(y.begin(), y.end());
  const double xl = x.empty() ? 0 : *x0, xh = x.empty() ? 1 : std::max(*x1, xl + 1e-9);
  const double yl = y.empty() ? 0 : *y0, yh = y.empty() ? 1 : std::max(*y1, yl + 1e-9);
  auto px = [&](double v) { return pad + (v - xl) / (xh - xl) * (W - 2 * pad); };
  auto py = [&](double v) { return H - pad - (v - yl) / (yh - yl) * (H - 2 * pad); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"11\">attention</text>\n"
    << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"11\" transform=\"rotate(-90 12 " << H / 2
    << ")\" text-anchor=\"middle\">score</text>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    s << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(y[i]) << "\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n";
  if (x.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
    if (sxx > 0) {
      const double b = sxy / sxx, a = my - b * mx;
      s << "<line x1=\"" << px(xl) << "\" y1=\"" << py(a + b * xl) << "\" x2=\"" << px(xh) << "\" y2=\""
        << py(a + b * xh) << "\" stroke=\"crimson\" stroke-width=\"2\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

/// Box plot of attention per subject label next to all other objects.
inline std::string subject_boxplot_svg(const AttentionLog& log, const SubjectResult& subjects,
                                       const std::string& category) {
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  std::vector<double> others;
  std::set<std::string> names;
  for (const auto& s : subjects.subjects) {
    groups.push_back({s.label, {}});
    names.insert(s.label);
  }
  for (const auto& im : log.images) {
    if (im.split != Split::train || im.predicted_mean <= metrics::kBinaryCutoff) continue;
    if (!category.empty() && im.semantic_category != category) continue;
    for (const auto& r : im.regions) {
      if (r.padded) continue;
      if (!names.count(r.category)) {
        others.push_back(r.attention);
        continue;
      }
      for (auto& [n, v] : groups)
        if (n == r.category) v.push_back(r.attention);
    }
  }
  groups.push_back({"others", std::move(others)});
  const double W = 80.0 * static_cast<double>(groups.size()) + 80, H = 320, pad = 40;
  auto py = [&](double v) { return H - pad - v * (H - 2 * pad); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << py(0) << "\" x2=\"" << pad << "\" y2=\"" << py(1)
    << "\" stroke=\"black\"/>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto v = groups[g].second;
    const double cx = pad + 40 + 80.0 * static_cast<double>(g);
    s << "<text x=\"" << cx << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << groups[g].first << "</text>\n";
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto q = [&](double f) { return v[static_cast<std::size_t>(f * static_cast<double>(v.size() - 1))]; };
    s << "<line x1=\"" << cx << "\" y1=\"" << py(v.front()) << "\" x2=\"" << cx << "\" y2=\"" << py(v.back())
      << "\" stroke=\"black\"/>\n"
      << "<rect x=\"" << cx - 20 << "\" y=\"" << py(q(0.75)) << "\" width=\"40\" height=\""
      << py(q(0.25)) - py(q(0.75)) << "\" fill=\"lightsteelblue\" stroke=\"black\"/>\n"
      << "<line x1=\"" << cx - 20 << "\" y1=\"" << py(q(0.5)) << "\" x2=\"" << cx + 20 << "\" y2=\"" << py(q(0.5))
      << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// (attention, score) samples of one label, for plotting.
inline std::pair<std::vector<double>, std::vector<double>> label_samples(const AttentionLog& log, LabelKind kind,
                                                                        const std::string& label, Split split,
                                                                        ScoreSource score = ScoreSource::predicted) {
  std::pair<std::vector<double>, std::vector<double>> out;
  std::vector<std::string> scratch;
  for (const auto& im : log.images) {
    if (im.split != split) continue;
    for (const auto& r : im.regions) {
      if (r.padded) continue;
      const auto& ls = detail::labels_of(r, kind, scratch);
      if (std::find(ls.begin(), ls.end(), label) == ls.end()) continue;
      out.first.push_back(r.attention);
      out.second.push_back(detail::score_of(im, score));
    }
  }
  return out;
}

// --------------------------------------------------- planted synthetic logs

/// Construction for checking the analytics end to end: attention on a
/// planted label follows rho * z(score) + sqrt(1 - rho^2) * noise; every
/// other label carries attention independent of the score.
struct LogPlant {
  std::string label;
  LabelKind kind = LabelKind::attribute;
  double correlation = 0.0;
};

struct SyntheticLogOptions {
  std::size_t images = 2000;
  double test_fraction = 0.5;
  std::size_t regions = 10;
  std::vector<std::string> categories{"eye", "ear", "face", "mouth", "tree", "sky", "grass", "car", "wall", "road"};
  std::vector<std::string> attributes{"blurry", "green", "bright", "dark", "wooden", "white", "red", "small"};
  std::vector<LogPlant> plants;
  /// Extra attention added to regions of this category (subject plant).
  std::optional<std::pair<std::string, double>> subject;
  double base_attention = 0.4;
  double attention_spread = 0.08;
  bool with_alpha = true;
  /// Planted pair effect on alpha between two categories.
  std::optional<std::pair<std::pair<std::string, std::string>, double>> pair_plant;
};

inline AttentionLog synthetic_attention_log(std::uint64_t seed, const SyntheticLogOptions& o) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_cat(0, o.categories.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_attr(0, o.attributes.size() - 1);
  const std::size_t every = o.test_fraction > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / o.test_fraction))) : 0;
  auto clamp_a = [](double a) { return std::clamp(a, 1e-3, 1.0 - 1e-3); };
  AttentionLog log;
  for (std::size_t n = 0; n < o.images; ++n) {
    const double z = n01(rng);
    ImageAttention im;
    im.id = "log-" + std::to_string(n);
    im.split = every && n % every == every - 1 ? Split::test : Split::train;
    im.semantic_category = "portrait";
    im.predicted_mean = 5.4 + 1.1 * z;
    im.truth_mean = im.predicted_mean + 0.3 * n01(rng);
    std::vector<double> logits;
    for (std::size_t i = 0; i < o.regions; ++i) {
      RegionAttention r;
      r.category = o.categories[pick_cat(rng)];
      r.attributes = {o.attributes[pick_attr(rng)]};
      double signal = n01(rng);
      for (const auto& p : o.plants) {
        const bool hit = p.kind == LabelKind::category ? r.category == p.label : r.attributes.front() == p.label;
        if (hit) signal = p.correlation * z + std::sqrt(1.0 - p.correlation * p.correlation) * signal;
      }
      double a = o.base_attention + o.attention_spread * signal;
      if (o.subject && r.category == o.subject->first) a += o.subject->second;
      r.attention = clamp_a(a);
      im.regions.push_back(std::move(r));
    }
    if (o.with_alpha) {
      const std::size_t L = o.regions;
      im.alpha.assign(L * L, 0.0);
      for (std::size_t i = 0; i < L; ++i) {
        std::vector<double> e(L);
        for (std::size_t j = 0; j < L; ++j) {
          e[j] = 0.5 * n01(rng);
          if (o.pair_plant && i != j) {
            const auto& [pair, effect] = *o.pair_plant;
            const auto& ci = im.regions[i].category;
            const auto& cj = im.regions[j].category;
            if ((ci == pair.first && cj == pair.second) || (ci == pair.second && cj == pair.first)) e[j] += effect * z;
          }
        }
        const double mx = *std::max_element(e.begin(), e.end());
        double s = 0.0;
        for (double& v : e) s += (v = std::exp(v - mx));
        for (std::size_t j = 0; j < L; ++j) im.alpha[i * L + j] = e[j] / s;
      }
    }
    log.images.push_back(std::move(im));
  }
  return log;
}

}  // namespace ovc::interpret
