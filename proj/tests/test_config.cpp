#include <gtest/gtest.h>

#include <array>
#include <fstream>
#include <sstream>

#include "ctms/errors.hpp"
#include "ctms/config.hpp"
#include "test_support.hpp"

namespace ctms {
namespace {

std::string shipped_text() {
    std::ifstream in(test::source_dir() / "configs" / "table3.cfg");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Replaces the first occurrence of `from`; fails the test when absent.
std::string edited(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    if (pos != std::string::npos) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

ExperimentConfig parse(const std::string& text) {
    return parse_config(text, test::source_dir() / "configs");
}

TEST(Config, ShippedParameterSetIsVerbatim) {
    // i, L, v, w, q_max, rho_max
    constexpr std::array<std::array<double, 5>, 15> cells{{
        {0.65, 103, 31, 1870, 79}, {0.56, 103, 25, 1735, 86}, {0.61, 103, 33, 1876, 75},
        {0.23, 103, 26, 1757, 84}, {0.34, 103, 33, 1780, 71}, {0.54, 103, 35, 1847, 71},
        {0.29, 103, 38, 1985, 72}, {0.31, 103, 40, 2092, 73}, {0.59, 103, 40, 2002, 69},
        {0.6, 96, 29, 1714, 77},   {0.41, 96, 29, 1705, 76},  {0.2, 103, 33, 1845, 74},
        {0.7, 103, 35, 1924, 74},  {0.53, 104, 30, 1774, 77}, {0.51, 103, 27, 1789, 83},
    }};
    const auto cfg = test::table3();
    const auto& hw = cfg.highway;
    ASSERT_EQ(hw.num_cells(), 15u);
    for (std::size_t i = 0; i < 15; ++i) {
        const auto& c = hw.cells()[i];
        EXPECT_EQ(c.length_km, cells[i][0]) << i;
        EXPECT_EQ(c.free_flow_speed, cells[i][1]) << i;
        EXPECT_EQ(c.congestion_wave_speed, cells[i][2]) << i;
        EXPECT_EQ(c.capacity, cells[i][3]) << i;
        EXPECT_EQ(c.jam_density, cells[i][4]) << i;
    }
    const auto& st = hw.station();
    EXPECT_EQ(st.station_capacity, 400.0);
    EXPECT_EQ(st.queue_capacity, 20.0);
    EXPECT_EQ(st.ramp_capacity, 1500.0);
    EXPECT_EQ(st.service_delay_steps, 480u);
    EXPECT_EQ(st.split_ratio, 0.1);
    EXPECT_EQ(st.mainstream_priority, 0.9);
    EXPECT_EQ(hw.sample_time_s(), 10.0);

    const auto& c = cfg.controller;
    EXPECT_EQ(c.horizon, 90u);
    EXPECT_EQ(c.update_period, 30u);
    EXPECT_EQ(c.weights.lambda, 0.5);
    EXPECT_EQ(c.weights.quad_scale, 1.0);
    EXPECT_EQ(c.ilc_step, 1.0);
    EXPECT_EQ(c.weights.w_rho, 1.0);
    EXPECT_EQ(c.weights.w_e, 0.1);
    EXPECT_EQ(c.weights.w_l, 0.05);
    EXPECT_EQ(c.weights.w_r, 0.1);
    EXPECT_EQ(c.weights.upstream_length, 0.5);

    EXPECT_EQ(cfg.peak_steps, 1080u);
    EXPECT_EQ(cfg.scenario_mode, ScenarioMode::one_at_a_time);
    EXPECT_GE(cfg.demand.size(), cfg.peak_steps + 1);
}

TEST(Config, UnknownKeysAreRejected) {
    const auto text = shipped_text();
    EXPECT_NO_THROW((void)parse(text));
    EXPECT_THROW((void)parse(edited(text, "\"lambda\"", "\"lamda\"")), ConfigError);
    EXPECT_THROW((void)parse(edited(text, "\"peak_steps\"", "\"extra\": 1, \"peak_steps\"")),
                 ConfigError);
    EXPECT_THROW((void)parse(edited(text, "\"exit_cell\"", "\"exit_cel\"")), ConfigError);
}

TEST(Config, SchemaViolationsAreRejected) {
    const auto text = shipped_text();
    EXPECT_THROW((void)parse(edited(text, "\"schema_version\": 1", "\"schema_version\": 2")),
                 ConfigError);
    EXPECT_THROW((void)parse(edited(text, "\"horizon\": 90", "\"horizon\": 9.5")), ConfigError);
    EXPECT_THROW((void)parse(edited(text, "\"peak_steps\": 1080", "\"peak_steps\": 0")),
                 ConfigError);
    EXPECT_THROW((void)parse(edited(text, "\"one_at_a_time\"", "\"both\"")), ConfigError);
    EXPECT_THROW((void)parse("{ not json"), ConfigError);
    EXPECT_THROW((void)load_config(test::source_dir() / "configs" / "absent.cfg"), IoError);
}

TEST(Config, HashIsStableAndSensitive) {
    const auto text = shipped_text();
    const auto a = config_hash(parse(text));
    EXPECT_EQ(a, config_hash(parse(text)));
    EXPECT_EQ(a, config_hash(test::table3()));
    EXPECT_EQ(hash_hex(a).size(), 16u);
    EXPECT_EQ(hash_hex(0x0123456789abcdefULL), "0123456789abcdef");

    // Whitespace does not matter, parameters do.
    EXPECT_EQ(a, config_hash(parse(edited(text, "\"lambda\": 0.5", "\"lambda\"  :  0.50"))));
    EXPECT_NE(a, config_hash(parse(edited(text, "\"lambda\": 0.5", "\"lambda\": 0.6"))));
    EXPECT_NE(a, config_hash(parse(edited(text, "\"split_ratio\": 0.1", "\"split_ratio\": 0.11"))));
}

TEST(Scenarios, DefaultSetVariesOneFactorAtATime) {
    const auto rows = table2_scenarios(ScenarioMode::one_at_a_time);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& r : rows) {
        const int changed = (r.r_beta != 1.0) + (r.r_delta != 1.0) + (r.r_demand != 1.0);
        EXPECT_EQ(changed, 1) << r.id;
    }
    EXPECT_EQ(table2_scenarios(ScenarioMode::simultaneous).size(), 2u);
}

TEST(Scenarios, OneAtATimeModeRejectsCombinedScalings) {
    const auto cfg = test::table3();
    const auto est = scenario_estimates(cfg, 0.8, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(est.beta_es, 0.08);
    EXPECT_EQ(est.delta_es_steps, 480u);
    EXPECT_EQ(scenario_estimates(cfg, 1.0, 1.2, 1.0).delta_es_steps, 576u);
    EXPECT_THROW((void)scenario_estimates(cfg, 0.8, 1.2, 1.0), ConfigError);

    auto both = parse(edited(shipped_text(), "\"one_at_a_time\"", "\"simultaneous\""));
    EXPECT_NO_THROW((void)scenario_estimates(both, 0.8, 1.2, 1.2));
}

TEST(Scenarios, CsvFileIsParsedAndValidated) {
    test::TempDir dir("scenarios");
    const auto good = dir.path() / "s.csv";
    std::ofstream(good) << "scenario,r_beta,r_delta,r_demand\nb,0.8,1,1\n\nd,1,1,1.2\n";
    const auto rows = read_scenarios_csv(good);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].id, "b");
    EXPECT_EQ(rows[0].r_beta, 0.8);
    EXPECT_EQ(rows[1].r_demand, 1.2);

    const auto bad_header = dir.path() / "h.csv";
    std::ofstream(bad_header) << "id,beta\nb,0.8\n";
    EXPECT_THROW((void)read_scenarios_csv(bad_header), IoError);
    const auto bad_row = dir.path() / "r.csv";
    std::ofstream(bad_row) << "scenario,r_beta,r_delta,r_demand\nb,0.8,1\n";
    EXPECT_THROW((void)read_scenarios_csv(bad_row), IoError);
    EXPECT_THROW((void)read_scenarios_csv(dir.path() / "absent.csv"), IoError);
}

}  // namespace
}  // namespace ctms
