#include "contour_adapt/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "contour_adapt/hash.hpp"
#include "contour_adapt/pgm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ca {

std::string to_hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace ca

namespace ca::eval {
namespace {

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

json result_json(const EvalResult& r) {
  return json{{"loss", r.loss},       {"dice", r.dice},   {"n", r.n},
              {"domain", r.domain},   {"model_id", r.model_id}, {"level", r.level}};
}

json meta_json(const ReportMeta& meta) {
  json j{{"version", meta.version}, {"config_hash", meta.config_hash}, {"seeds", meta.seeds}};
  if (!meta.config_json.empty()) {
    j["config"] = json::parse(meta.config_json, nullptr, false);
  }
  return j;
}

// Minimal static SVG writer.
class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {
    os_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* color = "#444",
            double width = 1.0) {
    os_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
        << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* fill) {
    os_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, double r, const char* fill) {
    os_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill
        << "\"/>\n";
  }
  void text(double x, double y, const std::string& t, int size = 11,
            const char* anchor = "middle") {
    os_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\""
        << size << "\" text-anchor=\"" << anchor << "\">" << escape(t) << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto& [x, y] : pts) os_ << x << "," << y << " ";
    os_ << "\"/>\n";
  }
  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  static std::string escape(const std::string& s) {
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
  int w_, h_;
  std::ostringstream os_;
};

void write_table_csv(const fs::path& path, const std::string& label, const MetricsTable& t) {
  std::ofstream os = open_out(path);
  os << "direction,test_domain,metric,base,encoder,dec1,dec2,dec3\n";
  auto row = [&](const std::string& domain, const char* metric,
                 const std::map<std::string, EvalResult>& cells, bool use_loss) {
    os << t.direction << "," << domain << "," << metric;
    for (const std::string& lv : t.levels) {
      const EvalResult& r = cells.at(lv);
      os << "," << fmt(use_loss ? r.loss : r.dice);
    }
    os << "\n";
  };
  (void)label;
  row(t.source_domain, "loss", t.on_source, true);
  row(t.source_domain, "dice", t.on_source, false);
  row(t.target_domain, "loss", t.on_target, true);
  row(t.target_domain, "dice", t.on_target, false);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_gap_svg(const fs::path& path, const std::string& direction,
                   const std::vector<LabeledTable>& tables) {
  // Median table drives the chart; fall back to the first label.
  const MetricsTable* median_table = nullptr;
  for (const auto& lt : tables) {
    if (lt.table.direction != direction) continue;
    if (lt.label == "median" || median_table == nullptr) median_table = &lt.table;
  }
  if (median_table == nullptr) return;

  const int W = 480, H = 300, ml = 60, mr = 20, mt = 30, mb = 50;
  Svg svg(W, H);
  const auto& levels = median_table->levels;
  double max_abs = 0.05;
  std::vector<double> gaps;
  for (const std::string& lv : levels) {
    gaps.push_back(median_table->gap(lv).dice_gap);
    max_abs = std::max(max_abs, std::abs(gaps.back()));
  }
  auto xpos = [&](std::size_t i) {
    return ml + (W - ml - mr) * (static_cast<double>(i) + 0.5) / static_cast<double>(levels.size());
  };
  auto ypos = [&](double v) { return mt + (H - mt - mb) * (1.0 - (v + max_abs) / (2 * max_abs)); };
  svg.line(ml, ypos(0), W - mr, ypos(0), "#999");
  svg.line(ml, mt, ml, H - mb, "#999");
  svg.text(W / 2.0, 18, "dice gap by freeze level (" + direction + ")", 13);
  svg.text(16, H / 2.0, "gap", 11, "start");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    pts.emplace_back(xpos(i), ypos(gaps[i]));
    svg.text(xpos(i), H - mb + 16, levels[i]);
    svg.text(xpos(i), ypos(gaps[i]) - 8, fmt(gaps[i]).substr(0, 7), 9);
  }
  svg.polyline(pts, "#1f6fb2");
  for (auto& [x, y] : pts) svg.circle(x, y, 3, "#1f6fb2");
  std::ofstream os = open_out(path);
  os << svg.finish();
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of empty set");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_history_csv(const nn::TrainHistory& hist, const std::string& stem) {
  {
    std::ofstream os = open_out(stem + "_train_loss.csv");
    os << "iteration,loss\n";
    for (std::size_t i = 0; i < hist.train_loss.size(); ++i) {
      os << (i + 1) << "," << fmt(hist.train_loss[i]) << "\n";
    }
  }
  {
    std::ofstream os = open_out(stem + "_val.csv");
    os << "epoch,val_loss,val_dice\n";
    for (std::size_t e = 0; e < hist.val_loss.size(); ++e) {
      os << (e + 1) << "," << fmt(hist.val_loss[e]) << "," << fmt(hist.val_dice[e]) << "\n";
    }
  }
}

void emit_report(const std::vector<LabeledTable>& tables, const ReportMeta& meta,
                 const std::string& out_dir, const Formats& formats) {
  if (!formats.any()) throw ConfigError("emit_report: no formats requested");
  if (tables.empty()) throw ContractError("emit_report: no tables");
  fs::create_directories(out_dir);

  std::set<std::string> directions;
  for (const auto& lt : tables) {
    lt.table.validate_complete();
    directions.insert(lt.table.direction);
  }

  if (formats.csv) {
    for (const auto& lt : tables) {
      fs::path p = fs::path(out_dir) /
                   ("table_" + slug(lt.table.direction) + "_" + slug(lt.label) + ".csv");
      write_table_csv(p, lt.label, lt.table);
    }
  }
  if (formats.json) {
    json j;
    j["meta"] = meta_json(meta);
    json arr = json::array();
    for (const auto& lt : tables) {
      const MetricsTable& t = lt.table;
      json jt{{"label", lt.label},
              {"direction", t.direction},
              {"source_domain", t.source_domain},
              {"target_domain", t.target_domain}};
      for (const std::string& lv : t.levels) {
        Gap g = t.gap(lv);
        jt["levels"][lv] = json{{"source", result_json(t.on_source.at(lv))},
                                {"target", result_json(t.on_target.at(lv))},
                                {"dice_gap", g.dice_gap},
                                {"loss_gap", g.loss_gap}};
      }
      jt["balance_point"] = balance_point(t);
      arr.push_back(std::move(jt));
    }
    j["tables"] = std::move(arr);
    std::ofstream os = open_out(fs::path(out_dir) / "report.json");
    os << j.dump(2) << "\n";
  }
  if (formats.svg) {
    for (const std::string& dir : directions) {
      write_gap_svg(fs::path(out_dir) / ("gap_by_level_" + slug(dir) + ".svg"), dir, tables);
    }
  }
}

void emit_sweep_report(const std::vector<SweepRow>& rows, const ReportMeta& meta,
                       const std::string& out_dir, const Formats& formats) {
  if (!formats.any()) throw ConfigError("emit_sweep_report: no formats requested");
  if (rows.empty()) throw ContractError("emit_sweep_report: no rows");
  fs::create_directories(out_dir);

  // Median |gap| per (size, level).
  std::map<std::pair<int, std::string>, std::vector<double>> gap_groups;
  std::set<int> sizes;
  std::set<std::string> levels;
  for (const SweepRow& r : rows) {
    gap_groups[{r.size, r.level}].push_back(std::abs(r.dice_gap));
    sizes.insert(r.size);
    levels.insert(r.level);
  }

  if (formats.csv) {
    std::ofstream os = open_out(fs::path(out_dir) / "sweep.csv");
    os << "size,level,seed,dice_source,dice_target,loss_source,loss_target,dice_gap,loss_gap\n";
    for (const SweepRow& r : rows) {
      os << r.size << "," << r.level << "," << r.seed << "," << fmt(r.dice_source) << ","
         << fmt(r.dice_target) << "," << fmt(r.loss_source) << "," << fmt(r.loss_target) << ","
         << fmt(r.dice_gap) << "," << fmt(r.loss_gap) << "\n";
    }
    std::ofstream ms = open_out(fs::path(out_dir) / "sweep_median.csv");
    ms << "size,level,abs_dice_gap_median\n";
    for (auto& [key, v] : gap_groups) {
      ms << key.first << "," << key.second << "," << fmt(median(v)) << "\n";
    }
  }
  if (formats.json) {
    json j;
    j["meta"] = meta_json(meta);
    json arr = json::array();
    for (const SweepRow& r : rows) {
      arr.push_back(json{{"size", r.size},
                         {"level", r.level},
                         {"seed", r.seed},
                         {"dice_source", r.dice_source},
                         {"dice_target", r.dice_target},
                         {"loss_source", r.loss_source},
                         {"loss_target", r.loss_target},
                         {"dice_gap", r.dice_gap},
                         {"loss_gap", r.loss_gap}});
    }
    j["rows"] = std::move(arr);
    json med = json::array();
    for (auto& [key, v] : gap_groups) {
      med.push_back(json{{"size", key.first}, {"level", key.second},
                         {"abs_dice_gap_median", median(v)}});
    }
    j["medians"] = std::move(med);
    std::ofstream os = open_out(fs::path(out_dir) / "sweep.json");
    os << j.dump(2) << "\n";
  }
  if (formats.svg) {
    const int W = 520, H = 320, ml = 60, mr = 20, mt = 30, mb = 50;
    Svg svg(W, H);
    double max_gap = 0.05;
    for (auto& [key, v] : gap_groups) max_gap = std::max(max_gap, median(v));
    const char* colors[] = {"#1f6fb2", "#d95f02", "#7570b3", "#1b9e77"};
    std::vector<int> size_list(sizes.begin(), sizes.end());
    std::vector<std::string> level_list(levels.begin(), levels.end());
    double group_w = static_cast<double>(W - ml - mr) / static_cast<double>(size_list.size());
    double bar_w = group_w / (static_cast<double>(level_list.size()) + 1.0);
    auto ypos = [&](double v) { return mt + (H - mt - mb) * (1.0 - v / max_gap); };
    svg.line(ml, H - mb, W - mr, H - mb, "#999");
    svg.line(ml, mt, ml, H - mb, "#999");
    svg.text(W / 2.0, 18, "median |dice gap| by target dataset size", 13);
    for (std::size_t si = 0; si < size_list.size(); ++si) {
      double gx = ml + group_w * static_cast<double>(si);
      svg.text(gx + group_w / 2, H - mb + 16, std::to_string(size_list[si]));
      for (std::size_t li = 0; li < level_list.size(); ++li) {
        auto it = gap_groups.find({size_list[si], level_list[li]});
        if (it == gap_groups.end()) continue;
        double v = median(it->second);
        double x = gx + bar_w * (0.5 + static_cast<double>(li));
        svg.rect(x, ypos(v), bar_w * 0.9, (H - mb) - ypos(v), colors[li % 4]);
      }
    }
    for (std::size_t li = 0; li < level_list.size(); ++li) {
      svg.rect(ml + 10 + 90.0 * static_cast<double>(li), mt - 12, 8, 8, colors[li % 4]);
      svg.text(ml + 24 + 90.0 * static_cast<double>(li), mt - 4, level_list[li], 10, "start");
    }
    std::ofstream os = open_out(fs::path(out_dir) / "sweep_gap_by_size.svg");
    os << svg.finish();
  }
}

void emit_overlays(nn::Model& model, const BatchSource& samples, int count,
                   const std::string& out_dir, double threshold) {
  if (samples.size() == 0) throw ContractError("emit_overlays: no samples");
  fs::create_directories(out_dir);
  const int h = samples.height(), w = samples.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::size_t n = std::min<std::size_t>(samples.size(), count < 1 ? samples.size() : count);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor image(Shape{1, 1, h, w});
    Tensor mask(image.shape());
    samples.sample(i, image.mutable_data(), mask.mutable_data());
    Tensor pred = model.forward(image, nn::Mode::Infer, nullptr, nullptr);

    data::PgmImage strip;
    strip.width = 3 * w + 2;
    strip.height = h;
    strip.pixels.assign(static_cast<std::size_t>(strip.width) * h, 255);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::size_t src = static_cast<std::size_t>(y) * w + x;
        float pv = pred.data()[src];
        strip.at(y, x) = static_cast<std::uint8_t>(std::lround(image.data()[src] * 255.0f));
        strip.at(y, w + 1 + x) = mask.data()[src] > 0.5f ? 255 : 0;
        strip.at(y, 2 * w + 2 + x) = static_cast<double>(pv) > threshold ? 255 : 0;
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "overlay_%05zu.pgm", i);
    data::write_pgm((fs::path(out_dir) / name).string(), strip);
  }
  (void)plane;
}

}  // namespace ca::eval
