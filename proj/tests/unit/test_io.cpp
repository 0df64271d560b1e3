#include "chaoslab/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace chaoslab;

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(format_number(0.7), "0.7");
    EXPECT_EQ(format_number(64.0), "64");
    EXPECT_EQ(format_number(-1e-300), "-1e-300");
    EXPECT_EQ(format_number(std::nan("")), "nan");
    EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(std::stod(format_number(x)), x);
}

TEST(JsonNumber, NonFiniteIsNull) {
    EXPECT_TRUE(json_number(std::nan("")).is_null());
    EXPECT_EQ(json_number(2.5).get<double>(), 2.5);
}

TEST(SpectrumJson, RoundTrip) {
    const auto s = spectrum(FgnSpec::of(0.7, 32));
    const auto j = to_json(s);
    EXPECT_EQ(j["schema"], kSchema);
    const auto back = spectrum_from_json(Json::parse(j.dump()));
    EXPECT_EQ(back.lambdas, s.lambdas);
    ASSERT_TRUE(back.source.has_value());
    EXPECT_EQ(*back.source, *s.source);
    EXPECT_EQ(back.vn, s.vn);
}

TEST(DensityJson, RoundTrip) {
    const auto g = density(spectrum(FgnSpec::of(0.5, 8)), GridOptions{16.0, 4096, true});
    const auto back = density_from_json(Json::parse(to_json(g).dump()));
    EXPECT_EQ(back.p, g.p);
    EXPECT_EQ(back.dp, g.dp);
    EXPECT_EQ(back.x0, g.x0);
    EXPECT_EQ(back.dx, g.dx);
    EXPECT_EQ(back.left_support_edge, g.left_support_edge);
    EXPECT_EQ(back.edge_exponent, g.edge_exponent);
    EXPECT_EQ(back.mass_defect, g.mass_defect);

    auto bad = to_json(g);
    bad["dp"] = std::vector<double>{1.0};
    EXPECT_THROW(density_from_json(bad), DimensionMismatch);
}

TEST(DensityCsv, HeaderAndRows) {
    const auto g = density(spectrum(FgnSpec::of(0.5, 8)), GridOptions{16.0, 4096, true});
    std::ostringstream os;
    write_density_csv(os, g);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "x,p,dp");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, g.size());
}

TEST(TensorJson, RoundTrip) {
    SymmetricTensor f(3, 4);
    f.set({0, 1, 3}, 0.25);
    f.set({2, 2, 2}, -1.5);
    const auto back = tensor_from_json(Json::parse(to_json(f).dump()));
    EXPECT_EQ(back.order(), 3);
    EXPECT_EQ(back.dim(), 4);
    EXPECT_EQ(back.to_dense().data(), f.to_dense().data());
}

TEST(DistanceJson, FisherDivergenceAndChain) {
    DistanceReport r;
    r.tv = 0.1;
    r.entropy = 0.05;
    r.l_r[2.0] = 0.3;
    const auto j = to_json(r);
    EXPECT_EQ(j["fisher_excess"], "divergent");
    EXPECT_TRUE(j["chain"]["pinsker"].get<bool>());
    EXPECT_TRUE(j["l_r"].contains("2"));
    EXPECT_TRUE(j["stein_bound"].is_null());
    r.fisher = FisherExcess::finite(0.01);
    EXPECT_FALSE(to_json(r)["chain"]["log_sobolev"].get<bool>());
}

TEST(McRow, Fields) {
    const auto j = mc_row(FgnSpec::of(0.6, 128), 4.0, McEstimate{1.5, 0.01, 1000, false}, 99);
    EXPECT_EQ(j["h"].get<double>(), 0.6);
    EXPECT_EQ(j["n"].get<std::size_t>(), 128u);
    EXPECT_EQ(j["seed"].get<std::uint64_t>(), 99u);
    EXPECT_EQ(j["tail_flag"].get<bool>(), false);
}

TEST(DistanceCsv, ColumnCount) {
    DistanceReport r;
    r.provenance = FgnSpec::of(0.5, 64);
    const auto header = distance_csv_header();
    const auto row = distance_csv_row(r);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
    EXPECT_EQ(row.substr(0, 7), "0.5,64,");
}
