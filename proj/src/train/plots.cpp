#include "gserec/train/plots.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gserec/util/archive.hpp"

namespace gserec::train {

namespace {

const char* const kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double width = 640, height = 360, left = 60, right = 150, top = 40, bottom = 50;
  double lo = 0, hi = 1;
  double plot_w() const { return width - left - right; }
  double plot_h() const { return height - top - bottom; }
  double y(double v) const { return top + plot_h() * (1.0 - (v - lo) / (hi - lo)); }
};

Frame make_frame(const std::vector<Series>& series) {
  Frame f;
  double lo = 0, hi = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1;
  f.lo = lo;
  f.hi = hi + 0.05 * (hi - lo);
  return f;
}

std::string open_svg(const Frame& f, const std::string& title) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = f.lo + (f.hi - f.lo) * t / 4.0;
    out << "<line x1=\"" << f.left << "\" x2=\"" << f.left + f.plot_w() << "\" y1=\"" << f.y(v) << "\" y2=\"" << f.y(v)
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << f.left - 6 << "\" y=\"" << f.y(v) + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  out << "<line x1=\"" << f.left << "\" x2=\"" << f.left + f.plot_w() << "\" y1=\"" << f.y(std::max(f.lo, 0.0))
      << "\" y2=\"" << f.y(std::max(f.lo, 0.0)) << "\" stroke=\"black\"/>\n";
  return out.str();
}

std::string legend(const Frame& f, const std::vector<Series>& series) {
  std::ostringstream out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = f.top + 16.0 * static_cast<double>(i);
    out << "<rect x=\"" << f.width - f.right + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
        << color(i) << "\"/>\n"
        << "<text x=\"" << f.width - f.right + 28 << "\" y=\"" << y + 9 << "\">" << escape(series[i].name)
        << "</text>\n";
  }
  return out.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series) {
  const Frame f = make_frame(series);
  std::ostringstream out;
  out << open_svg(f, title);
  const double slot = f.plot_w() / static_cast<double>(std::max<std::size_t>(1, categories.size()));
  const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  const double base = f.y(std::max(f.lo, 0.0));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double x0 = f.left + slot * static_cast<double>(c) + slot * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
      const double y = f.y(series[s].values[c]);
      out << "<rect x=\"" << x0 + bar * static_cast<double>(s) << "\" y=\"" << std::min(y, base) << "\" width=\""
          << bar << "\" height=\"" << std::abs(base - y) << "\" fill=\"" << color(s) << "\"/>\n";
    }
    out << "<text x=\"" << x0 + slot * 0.4 << "\" y=\"" << f.top + f.plot_h() + 16
        << "\" text-anchor=\"middle\">" << escape(categories[c]) << "</text>\n";
  }
  out << legend(f, series) << "</svg>\n";
  return out.str();
}

std::string line_chart_svg(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series) {
  const Frame f = make_frame(series);
  std::ostringstream out;
  out << open_svg(f, title);
  const std::size_t n = x_labels.size();
  auto x = [&](std::size_t i) {
    return n <= 1 ? f.left + f.plot_w() / 2 : f.left + f.plot_w() * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  for (std::size_t i = 0; i < n; ++i) {
    out << "<text x=\"" << x(i) << "\" y=\"" << f.top + f.plot_h() + 16 << "\" text-anchor=\"middle\">"
        << escape(x_labels[i]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string points;
    for (std::size_t i = 0; i < std::min(n, series[s].values.size()); ++i) {
      points += num(x(i)) + "," + num(f.y(series[s].values[i])) + " ";
      out << "<circle cx=\"" << x(i) << "\" cy=\"" << f.y(series[s].values[i]) << "\" r=\"3\" fill=\"" << color(s)
          << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color(s) << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
  }
  out << legend(f, series) << "</svg>\n";
  return out.str();
}

void write_fig1(const std::filesystem::path& dir, const data::Dataset& dataset,
                const data::SparsityGrouping& grouping, const MetricsReport* report) {
  const auto groups = static_cast<std::size_t>(grouping.num_groups());
  std::vector<double> users(groups, 0.0), searches(groups, 0.0);
  for (const auto& u : dataset.users) {
    const auto g = static_cast<std::size_t>(grouping.assignment[static_cast<std::size_t>(u.id)]);
    users[g] += 1;
    searches[g] += u.num_search();
  }
  std::ostringstream csv;
  csv << "group,label,users,user_share,search_interactions" << (report ? ",test_rows,NDCG@5" : "") << "\n";
  std::vector<std::string> labels;
  Series share{"user share", {}}, ndcg{"NDCG@5", {}};
  for (std::size_t g = 0; g < groups; ++g) {
    labels.push_back(grouping.label(static_cast<int>(g)));
    share.values.push_back(users[g] / std::max(1, dataset.num_users()));
    csv << g << "," << csv_field(labels.back()) << "," << users[g] << "," << num(share.values.back()) << ","
        << searches[g];
    if (report) {
      const auto& gm = report->groups.at(g);
      ndcg.values.push_back(gm.rows > 0 ? gm.metrics.ndcg5 : NAN);
      csv << "," << gm.rows << "," << (gm.rows > 0 ? num(gm.metrics.ndcg5) : "");
    }
    csv << "\n";
  }
  std::filesystem::create_directories(dir);
  util::write_file_atomic(dir / "fig1_groups.csv", csv.str());
  std::vector<Series> series{share};
  if (report) series.push_back(ndcg);
  util::write_file_atomic(dir / "fig1_groups.svg", bar_chart_svg("Users by search-history group", labels, series));
}

void write_fig2(const std::filesystem::path& dir, const MetricsReport& base, const std::vector<NamedReport>& others) {
  std::ostringstream csv;
  csv << "variant,group,label";
  for (const auto& m : kMetricNames) csv << "," << m;
  csv << "\n";
  std::vector<std::string> labels;
  for (const auto& g : base.groups) labels.push_back(g.label);
  std::vector<Series> series;
  for (const auto& other : others) {
    const auto imps = group_report(base, other.report);
    Series s{other.name, {}};
    for (std::size_t g = 0; g < imps.size(); ++g) {
      csv << csv_field(other.name) << "," << g << "," << csv_field(imps[g].label);
      for (const auto& r : imps[g].relative) csv << "," << (r ? num(*r) : (imps[g].empty ? "empty" : ""));
      csv << "\n";
      s.values.push_back(imps[g].relative[3] ? *imps[g].relative[3] : NAN);
    }
    series.push_back(std::move(s));
  }
  std::filesystem::create_directories(dir);
  util::write_file_atomic(dir / "fig2_improvements.csv", csv.str());
  util::write_file_atomic(dir / "fig2_improvements.svg",
                          bar_chart_svg("Relative NDCG@5 change per group", labels, series));
}

void write_fig7(const std::filesystem::path& dir, SweepParam param, const std::vector<SweepPoint>& points) {
  const std::string name = to_string(param);
  std::ostringstream csv;
  csv << name << ",NDCG@5,HR@5\n";
  std::vector<std::string> labels;
  Series ndcg{"NDCG@5", {}}, hr{"HR@5", {}};
  for (const auto& p : points) {
    labels.push_back(num(p.value));
    ndcg.values.push_back(p.report.overall.ndcg5);
    hr.values.push_back(p.report.overall.hr5);
    csv << num(p.value) << "," << num(p.report.overall.ndcg5) << "," << num(p.report.overall.hr5) << "\n";
  }
  std::filesystem::create_directories(dir);
  util::write_file_atomic(dir / ("fig7_" + name + ".csv"), csv.str());
  util::write_file_atomic(dir / ("fig7_" + name + ".svg"), line_chart_svg("Sweep of " + name, labels, {ndcg, hr}));
}

}  // namespace gserec::train
