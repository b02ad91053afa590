// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ttl {

// watts * seconds / 3.6e6
double energy_kwh(double elapsed_s, double avg_power_w);
// energy * intensity
double emissions_kg(double energy_kwh, double intensity_kg_per_kwh);

struct PowerModel {
    double avg_watts = 403.6;  // configured average device draw
    double utilization = 1.0;  // fraction of avg_watts actually drawn
    double effective_watts() const { return avg_watts * utilization; }
};

// Default carbon intensity and its region label. Configurable per region.
inline constexpr double kDefaultCarbonIntensity = 0.3655; // kgCO2eq / kWh
inline const char* const kDefaultCarbonRegion = "North Rhine-Westphalia";

struct TelemetryRow {
    int64_t step = 0;
    uint64_t tokens = 0;       // cumulative tokens processed
    double loss = 0.0;         // train loss; NaN when absent
    double perplexity = 0.0;   // eval perplexity; NaN when absent
    double elapsed_s = 0.0;    // cumulative wall seconds; NaN when unknown
    double energy_kwh = 0.0;   // cumulative
    double emissions_kg = 0.0; // cumulative
};

struct TelemetryLog {
    PowerModel power;
    double carbon_intensity = kDefaultCarbonIntensity;
    std::string region = kDefaultCarbonRegion;
    std::vector<TelemetryRow> rows;

    std::string csv() const;
    static TelemetryLog from_csv(const std::string& text);
    void save_csv(const std::string& path) const;
    static TelemetryLog load_csv(const std::string& path);
};

// Table-style report with a marginal-gain column (perplexity drop per kWh
// spent in each interval).
std::string checkpoint_report(const TelemetryLog& log);

// Cumulative counters driven by an injectable clock so tests can replay
// deterministic time. The training loop calls step_completed once per
// optimizer step; energy is power-model watts integrated over elapsed time
// and emissions are always energy * intensity (exact ratio).
class TelemetryTracker {
  public:
    using Clock = std::function<double()>; // monotonic seconds

    TelemetryTracker(PowerModel power, double carbon_intensity, Clock clock = {});

    // Resume from checkpointed cumulative counters.
    void set_base(uint64_t tokens, double elapsed_s, double energy_kwh, double emissions_kg);
    void start(); // primes the clock; call once before the first step

    void step_completed(uint64_t tokens_added);

    uint64_t tokens() const { return tokens_; }
    double elapsed_s() const { return elapsed_s_; }
    double energy() const { return energy_kwh_; }
    double emissions() const { return emissions_kg_; }

    TelemetryRow row(int64_t step, double loss, double perplexity) const;
    const PowerModel& power() const { return power_; }
    double carbon_intensity() const { return intensity_; }

  private:
    PowerModel power_;
    double intensity_;
    Clock clock_;
    double last_ = 0.0;
    bool started_ = false;
    uint64_t tokens_ = 0;
    double elapsed_s_ = 0.0;
    double energy_kwh_ = 0.0;
    double emissions_kg_ = 0.0;
};

// Minimal polyline chart, one series. Writes a standalone SVG file.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& x_label, const std::string& y_label);

} // namespace ttl
