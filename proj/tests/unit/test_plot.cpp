#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <sstream>

#include "rpd/plot.hpp"

using namespace rpd;
namespace pt = boost::property_tree;

namespace {

pt::ptree parse_xml(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

// Elements named `tag` anywhere below `node`.
void collect(const pt::ptree& node, const std::string& tag, std::vector<const pt::ptree*>& out) {
  for (const auto& [name, child] : node) {
    if (name == tag) out.push_back(&child);
    collect(child, tag, out);
  }
}

std::vector<const pt::ptree*> find_all(const pt::ptree& root, const std::string& tag) {
  std::vector<const pt::ptree*> out;
  collect(root, tag, out);
  return out;
}

std::vector<std::pair<double, double>> points(const std::string& s) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    const auto comma = tok.find(',');
    out.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
  }
  return out;
}

std::string two_config_aggregate() {
  return "config,update,global_step,seeds,missing_seeds,eval_success_mean,eval_success_std\n"
         "ppo,1,100,2,,0.1,0.05\n"
         "ppo,2,200,2,,0.3,0.1\n"
         "ppo,3,300,2,,,\n"
         "rpd & co,1,100,2,,0.4,0.2\n"
         "rpd & co,2,200,2,,0.8,0\n";
}

}  // namespace

TEST(Plot, ConstantSeriesIsFlatWithZeroHeightBand) {
  const Series s{"flat", {0, 100, 200}, {0.5, 0.5, 0.5}, {0, 0, 0}};
  const auto tree = parse_xml(render_svg({s}, {}));
  const auto paths = find_all(tree, "path");
  ASSERT_EQ(paths.size(), 1u);
  const auto d = paths[0]->get<std::string>("<xmlattr>.d");
  std::string pts = d;
  for (char& c : pts)
    if (c == 'M' || c == 'L') c = ' ';
  const auto p = points(pts);
  ASSERT_EQ(p.size(), 3u);
  for (const auto& [x, y] : p) EXPECT_EQ(y, p[0].second);

  const auto polys = find_all(tree, "polygon");
  ASSERT_EQ(polys.size(), 1u);
  const auto band = points(polys[0]->get<std::string>("<xmlattr>.points"));
  ASSERT_EQ(band.size(), 6u);
  for (const auto& [x, y] : band) EXPECT_EQ(y, p[0].second);
}

TEST(Plot, TwoConfigsGiveTwoLegendsAndTwoBands) {
  const std::vector<Baseline> bl{{"teacher", 0.6}};
  const auto svg = plot_aggregate(two_config_aggregate(), bl);
  const auto tree = parse_xml(svg);
  EXPECT_EQ(find_all(tree, "path").size(), 2u);
  EXPECT_EQ(find_all(tree, "polygon").size(), 2u);

  std::vector<std::string> legend;
  for (const auto& [name, g] : tree.get_child("svg"))
    if (name == "g" && g.get<std::string>("<xmlattr>.class", "") == "legend")
      for (const auto& [tag, el] : g)
        if (tag == "text") legend.push_back(el.data());
  ASSERT_EQ(legend.size(), 3u);
  EXPECT_EQ(legend[0], "ppo");
  EXPECT_EQ(legend[1], "rpd & co");
  EXPECT_EQ(legend[2].rfind("teacher", 0), 0u);

  const auto lines = find_all(tree, "line");
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0]->get<std::string>("<xmlattr>.stroke-dasharray"), "6,4");
  EXPECT_EQ(lines[0]->get<double>("<xmlattr>.y1"), lines[0]->get<double>("<xmlattr>.y2"));
}

TEST(Plot, BandsBracketTheMeanLine) {
  const Series s{"s", {0, 1}, {0.4, 0.6}, {0.1, 0.2}};
  const auto tree = parse_xml(render_svg({s}, {}));
  const auto band = points(find_all(tree, "polygon")[0]->get<std::string>("<xmlattr>.points"));
  ASSERT_EQ(band.size(), 4u);
  // screen y grows downwards: upper edge first, then the lower edge reversed
  EXPECT_LT(band[0].second, band[3].second);
  EXPECT_LT(band[1].second, band[2].second);
  EXPECT_EQ(band[0].first, band[3].first);
}

TEST(Plot, SkipsRowsWithoutTheMetric) {
  const auto series = series_from_aggregate(parse_csv(two_config_aggregate()), "eval_success");
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].x, (std::vector<double>{100, 200}));
  EXPECT_EQ(series[1].std, (std::vector<double>{0.2, 0.0}));
}

TEST(Plot, IsAPureFunctionOfInput) {
  EXPECT_EQ(plot_aggregate(two_config_aggregate(), {}), plot_aggregate(two_config_aggregate(), {}));
}

TEST(Plot, EscapesTextAndRejectsEmptyData) {
  EXPECT_EQ(xml_escape("a<b>&\"'"), "a&lt;b&gt;&amp;&quot;&apos;");
  EXPECT_THROW(render_svg({}, {}), UsageError);
  EXPECT_THROW(plot_aggregate("config,update,global_step\n", {}), ConfigError);
  PlotOptions o;
  o.title = "<Push & pull>";
  EXPECT_NO_THROW(parse_xml(plot_aggregate(two_config_aggregate(), {{"a<b", 0.2}}, o)));
}
