// SPDX-License-Identifier: Apache-2.0
#include "ttl/telemetry.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ttl/errors.hpp"
#include "ttl/io_util.hpp"

namespace ttl {

double energy_kwh(double elapsed_s, double avg_power_w) {
    if (elapsed_s < 0.0 || avg_power_w < 0.0)
        throw DomainError("energy_kwh: negative input");
    return avg_power_w * elapsed_s / 3.6e6;
}

double emissions_kg(double energy, double intensity) {
    if (energy < 0.0 || intensity < 0.0) throw DomainError("emissions_kg: negative input");
    return energy * intensity;
}

// ---------------------------------------------------------------------------
// tracker
// ---------------------------------------------------------------------------

static double wall_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

TelemetryTracker::TelemetryTracker(PowerModel power, double carbon_intensity, Clock clock)
    : power_(power), intensity_(carbon_intensity),
      clock_(clock ? std::move(clock) : Clock(&wall_seconds)) {}

void TelemetryTracker::set_base(uint64_t tokens, double elapsed_s, double energy,
                                double emissions) {
    tokens_ = tokens;
    elapsed_s_ = elapsed_s;
    energy_kwh_ = energy;
    emissions_kg_ = emissions;
}

void TelemetryTracker::start() {
    last_ = clock_();
    started_ = true;
}

void TelemetryTracker::step_completed(uint64_t tokens_added) {
    if (!started_) start();
    const double now = clock_();
    const double dt = now - last_;
    last_ = now;
    tokens_ += tokens_added;
    elapsed_s_ += dt;
    energy_kwh_ += energy_kwh(dt, power_.effective_watts());
    emissions_kg_ = emissions_kg(energy_kwh_, intensity_);
}

TelemetryRow TelemetryTracker::row(int64_t step, double loss, double perplexity) const {
    TelemetryRow r;
    r.step = step;
    r.tokens = tokens_;
    r.loss = loss;
    r.perplexity = perplexity;
    r.elapsed_s = elapsed_s_;
    r.energy_kwh = energy_kwh_;
    r.emissions_kg = emissions_kg_;
    return r;
}

// ---------------------------------------------------------------------------
// log serialization
// ---------------------------------------------------------------------------

namespace {

std::string num_field(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    if (std::stod(buf) == v) return buf; // shortest spelling that round-trips
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_field(const std::string& s) {
    if (s.empty()) return std::nan("");
    return std::stod(s);
}

// Human-readable cumulative token counts: 9.8B, 8.1M, 512.
std::string fmt_tokens(double t) {
    char buf[40];
    if (t >= 1e9)
        std::snprintf(buf, sizeof(buf), "%.1fB", t / 1e9);
    else if (t >= 1e6)
        std::snprintf(buf, sizeof(buf), "%.1fM", t / 1e6);
    else
        std::snprintf(buf, sizeof(buf), "%.0f", t);
    return buf;
}

std::string fmt2(double v) {
    if (std::isnan(v)) return "-";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

std::string TelemetryLog::csv() const {
    std::ostringstream os;
    os << "step,tokens,loss,perplexity,elapsed_s,energy_kwh,emissions_kgco2eq\n";
    for (const auto& r : rows) {
        os << r.step << "," << r.tokens << "," << num_field(r.loss) << ","
           << num_field(r.perplexity) << "," << num_field(r.elapsed_s) << ","
           << num_field(r.energy_kwh) << "," << num_field(r.emissions_kg) << "\n";
    }
    return os.str();
}

TelemetryLog TelemetryLog::from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) ||
        line != "step,tokens,loss,perplexity,elapsed_s,energy_kwh,emissions_kgco2eq")
        throw FormatError("telemetry csv: unexpected header");
    TelemetryLog log;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        while (f.size() < 7) f.emplace_back();
        TelemetryRow r;
        r.step = std::stoll(f[0]);
        r.tokens = std::stoull(f[1]);
        r.loss = parse_field(f[2]);
        r.perplexity = parse_field(f[3]);
        r.elapsed_s = parse_field(f[4]);
        r.energy_kwh = parse_field(f[5]);
        r.emissions_kg = parse_field(f[6]);
        log.rows.push_back(r);
    }
    return log;
}

void TelemetryLog::save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << csv();
    if (!f) throw IoError("write failed: " + path);
}

TelemetryLog TelemetryLog::load_csv(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return from_csv(std::string(bytes.begin(), bytes.end()));
}

std::string checkpoint_report(const TelemetryLog& log) {
    if (log.rows.empty()) throw DomainError("checkpoint_report: empty log");
    std::ostringstream os;
    os << "Processed Tokens | Perplexity | Energy Consumption (kWh) | "
          "Emissions (KgCO2eq) | Marginal Gain (ppl/kWh)\n";
    const TelemetryRow* prev = nullptr;
    for (const auto& r : log.rows) {
        std::string marginal = "-";
        if (prev && !std::isnan(r.perplexity) && !std::isnan(prev->perplexity)) {
            const double de = r.energy_kwh - prev->energy_kwh;
            if (de > 0.0) {
                char buf[40];
                std::snprintf(buf, sizeof(buf), "%.4f", (prev->perplexity - r.perplexity) / de);
                marginal = buf;
            }
        }
        os << fmt_tokens(static_cast<double>(r.tokens)) << " | " << fmt2(r.perplexity) << " | "
           << fmt2(r.energy_kwh) << " | " << fmt2(r.emissions_kg) << " | " << marginal << "\n";
        prev = &r;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// SVG chart
// ---------------------------------------------------------------------------

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& x_label, const std::string& y_label) {
    if (xs.size() != ys.size() || xs.empty())
        throw DomainError("svg chart: series must be non-empty and aligned");
    const double w = 640, h = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (size_t i = 0; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
       << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
       << "' stroke='black'/>\n";
    os << "<text x='" << w / 2 << "' y='" << h - 12 << "' text-anchor='middle' font-size='12'>"
       << x_label << "</text>\n";
    os << "<text x='16' y='" << h / 2 << "' font-size='12' transform='rotate(-90 16 " << h / 2
       << ")' text-anchor='middle'>" << y_label << "</text>\n";
    os << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
    for (size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << "," << py(ys[i]) << " ";
    os << "'/>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", ymin);
    os << "<text x='" << ml - 6 << "' y='" << h - mb << "' text-anchor='end' font-size='10'>"
       << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.6g", ymax);
    os << "<text x='" << ml - 6 << "' y='" << mt + 4 << "' text-anchor='end' font-size='10'>"
       << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.6g", xmax);
    os << "<text x='" << w - mr << "' y='" << h - mb + 16
       << "' text-anchor='end' font-size='10'>" << buf << "</text>\n";
    os << "</svg>\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f << os.str();
    if (!f) throw IoError("write failed: " + path);
}

} // namespace ttl
