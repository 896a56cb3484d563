#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "convnilm/data.hpp"
#include "convnilm/rng.hpp"
#include "convnilm/synthetic.hpp"

using namespace convnilm;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    fs::path p = fs::temp_directory_path() / "convnilm_data_test";
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("parse_channel_file") {
    fs::path p = scratch() / "chan.dat";
    SECTION("two well-formed lines") {
        std::ofstream(p) << "1303132964 41.2\n1303132965 42.0\n";
        ChannelSeries s = parse_channel_file(p.string(), "fridge");
        REQUIRE(s.samples.size() == 2);
        REQUIRE(s.samples[0].t == 1303132964);
        REQUIRE(s.samples[1].w == 42.0);
        REQUIRE(s.name == "fridge");
    }
    SECTION("duplicate timestamp names the offending line") {
        std::ofstream(p) << "100 1.0\n100 2.0\n";
        try {
            parse_channel_file(p.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            REQUIRE(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SECTION("unparseable line names the offending line") {
        std::ofstream(p) << "100 1.0\nnot numbers\n";
        try {
            parse_channel_file(p.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            REQUIRE(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SECTION("1000-line write/parse round trip is bit-identical") {
        ChannelSeries s;
        s.name = "x";
        Rng rng(4);
        int64_t ts = 1300000000;
        for (int i = 0; i < 1000; ++i) {
            ts += 1 + static_cast<int64_t>(rng.below(3));
            s.samples.push_back({ts, rng.uniform(0, 3000)});
        }
        write_channel_file(p.string(), s);
        ChannelSeries back = parse_channel_file(p.string(), "x");
        REQUIRE(back.samples.size() == s.samples.size());
        for (size_t i = 0; i < s.samples.size(); ++i) {
            REQUIRE(back.samples[i].t == s.samples[i].t);
            REQUIRE(back.samples[i].w == s.samples[i].w);
        }
    }
    SECTION("empty file is rejected") {
        std::ofstream(p) << "";
        REQUIRE_THROWS_AS(parse_channel_file(p.string()), DataError);
    }
}

TEST_CASE("resample_linear") {
    SECTION("midpoint interpolation") {
        ChannelSeries s;
        s.samples = {{0, 0.0}, {2, 2.0}};
        UniformSeries u = resample_linear(s, 1.0);
        REQUIRE(u.values == std::vector<double>{0, 1, 2});
    }
    SECTION("already-uniform series is unchanged") {
        ChannelSeries s;
        for (int64_t i = 0; i < 10; ++i) s.samples.push_back({i * 3, static_cast<double>(i * i)});
        UniformSeries u = resample_linear(s, 3.0);
        REQUIRE(u.values.size() == 10);
        for (int64_t i = 0; i < 10; ++i) REQUIRE(u.values[static_cast<size_t>(i)] == static_cast<double>(i * i));
    }
    SECTION("gaps beyond 60 s zero-fill, boundary samples survive") {
        ChannelSeries s;
        s.samples = {{0, 5.0}, {10, 7.0}, {310, 9.0}, {320, 11.0}};
        UniformSeries u = resample_linear(s, 10.0);
        REQUIRE(u.values.size() == 33);
        REQUIRE(u.values[0] == 5.0);
        REQUIRE(u.values[1] == 7.0);   // boundary sample kept
        REQUIRE(u.values[2] == 0.0);   // inside the 300 s gap
        REQUIRE(u.values[30] == 0.0);
        REQUIRE(u.values[31] == 9.0);  // boundary sample kept
        REQUIRE(u.values[32] == 11.0);
        REQUIRE(u.zero_filled == 29);
    }
    SECTION("interpolated values stay inside the neighbor hull") {
        Rng rng(9);
        ChannelSeries s;
        int64_t ts = 0;
        for (int i = 0; i < 200; ++i) {
            ts += 1 + static_cast<int64_t>(rng.below(5));
            s.samples.push_back({ts, rng.uniform(0, 100)});
        }
        UniformSeries u = resample_linear(s, 1.0);
        size_t hi = 0;
        for (size_t i = 0; i < u.values.size(); ++i) {
            double g = static_cast<double>(u.t0) + static_cast<double>(i);
            while (hi + 1 < s.samples.size() && static_cast<double>(s.samples[hi].t) < g) ++hi;
            if (static_cast<double>(s.samples[hi].t) == g) continue;
            double lo = std::min(s.samples[hi - 1].w, s.samples[hi].w);
            double hi_v = std::max(s.samples[hi - 1].w, s.samples[hi].w);
            REQUIRE(u.values[i] >= std::min(lo, 0.0));
            REQUIRE(u.values[i] <= hi_v);
        }
    }
    SECTION("grid is exactly uniform") {
        ChannelSeries s;
        s.samples = {{7, 1.0}, {19, 2.0}, {33, 3.0}};
        UniformSeries u = resample_linear(s, 2.0);
        REQUIRE(u.t0 == 7);
        REQUIRE(u.values.size() == 14); // floor(26/2)+1
    }
    SECTION("single sample yields a single point") {
        ChannelSeries s;
        s.samples = {{5, 42.0}};
        UniformSeries u = resample_linear(s, 1.0);
        REQUIRE(u.values == std::vector<double>{42.0});
    }
}

TEST_CASE("build_aggregate") {
    Rng rng(3);
    SECTION("zero noise, no extra: exact sum") {
        std::vector<std::vector<double>> t = {{1, 2, 3}, {10, 20, 30}};
        REQUIRE(build_aggregate(t, nullptr, 0.0, rng) == std::vector<double>{11, 22, 33});
    }
    SECTION("single target with zero extra") {
        std::vector<std::vector<double>> t = {{4, 5, 6}};
        std::vector<double> extra = {0, 0, 0};
        REQUIRE(build_aggregate(t, &extra, 0.0, rng) == std::vector<double>{4, 5, 6});
    }
    SECTION("half-normal deviation for noise_std 10") {
        const size_t T = 100000;
        std::vector<std::vector<double>> t = {std::vector<double>(T, 500.0)};
        auto agg = build_aggregate(t, nullptr, 10.0, rng);
        double mean_abs = 0;
        for (size_t i = 0; i < T; ++i) mean_abs += std::abs(agg[i] - 500.0) / static_cast<double>(T);
        REQUIRE(mean_abs > 6.0);
        REQUIRE(mean_abs < 10.0);
    }
    SECTION("clamped at zero watts") {
        std::vector<std::vector<double>> t = {{0.0, 0.0}};
        Rng r2(1);
        auto agg = build_aggregate(t, nullptr, 50.0, r2);
        for (double v : agg) REQUIRE(v >= 0.0);
    }
    SECTION("length mismatch") {
        std::vector<std::vector<double>> t = {{1, 2}, {1, 2, 3}};
        REQUIRE_THROWS_AS(build_aggregate(t, nullptr, 0.0, rng), ShapeError);
    }
}

TEST_CASE("minmax scaling") {
    SECTION("formula") {
        auto [scaled, sc] = minmax_fit_transform({0, 5, 10});
        REQUIRE(scaled == std::vector<double>{0, 0.5, 1});
        REQUIRE(sc.min_w == 0);
        REQUIRE(sc.max_w == 10);
    }
    SECTION("round trip within 1e-12") {
        Rng rng(8);
        std::vector<double> xs(500);
        for (auto& x : xs) x = rng.uniform(0, 4000);
        auto [scaled, sc] = minmax_fit_transform(xs);
        for (size_t i = 0; i < xs.size(); ++i)
            REQUIRE(std::abs(sc.invert(scaled[i]) - xs[i]) < 1e-12);
    }
    SECTION("constant mixture is an explicit error") {
        REQUIRE_THROWS_AS(MinMaxScale::fit(std::vector<double>(10, 7.0)), DataError);
    }
}

TEST_CASE("window_split") {
    MinMaxScale sc{0, 1};
    std::vector<double> mix(250);
    for (size_t i = 0; i < mix.size(); ++i) mix[i] = static_cast<double>(i);
    std::vector<std::vector<double>> targets = {mix};

    SECTION("length 200 by 100 gives 2 windows") {
        auto w = window_split(std::vector<double>(mix.begin(), mix.begin() + 200),
                              {std::vector<double>(mix.begin(), mix.begin() + 200)}, sc, 100);
        REQUIRE(w.size() == 2);
    }
    SECTION("trailing partial window is dropped and counted") {
        int64_t dropped = 0;
        auto w = window_split(mix, targets, sc, 100, 0, 0, 1.0, &dropped);
        REQUIRE(w.size() == 2);
        REQUIRE(dropped == 50);
        REQUIRE(w[1].mixture.front() == 100.0);
        REQUIRE(w[1].start_ts == 100);
    }
    SECTION("window longer than the series") {
        REQUIRE_THROWS_AS(window_split(mix, targets, sc, 251), DataError);
    }
}

TEST_CASE("kfold_split") {
    SECTION("k equal to window count validates one window each") {
        auto folds = kfold_split(10, 10);
        REQUIRE(folds.size() == 10);
        for (size_t f = 0; f < folds.size(); ++f) {
            REQUIRE(folds[f].validation == std::vector<int>{static_cast<int>(f)});
            REQUIRE(folds[f].train.size() == 9);
        }
    }
    SECTION("validation folds partition the windows") {
        auto folds = kfold_split(23, 5);
        std::vector<int> seen(23, 0);
        for (auto& f : folds)
            for (int i : f.validation) ++seen[static_cast<size_t>(i)];
        for (int c : seen) REQUIRE(c == 1);
        for (auto& f : folds) REQUIRE(f.train.size() + f.validation.size() == 23);
    }
    SECTION("contiguous time-ordered blocks: k=2 on 4 windows") {
        auto folds = kfold_split(4, 2);
        REQUIRE(folds[0].validation == std::vector<int>{0, 1});
        REQUIRE(folds[1].validation == std::vector<int>{2, 3});
    }
    SECTION("k larger than the window count") {
        REQUIRE_THROWS_AS(kfold_split(3, 4), DataError);
        REQUIRE_THROWS_AS(kfold_split(3, 1), ConfigError);
    }
}

TEST_CASE("synthetic generator") {
    SECTION("a permanent 50 W appliance alone gives a constant mixture") {
        ApplianceSpec sp;
        sp.type = ApplianceType::Permanent;
        sp.levels = {50.0};
        auto d = gen_synthetic({sp}, 256, 1.0, 0.0, 3);
        for (double v : d.mixture) REQUIRE(v == 50.0);
    }
    SECTION("same seed is bit-identical, different seed is not") {
        auto a = gen_synthetic(default_specs(), 512, 1.0, 2.0, 42);
        auto b = gen_synthetic(default_specs(), 512, 1.0, 2.0, 42);
        auto c = gen_synthetic(default_specs(), 512, 1.0, 2.0, 43);
        REQUIRE(a.mixture == b.mixture);
        REQUIRE(a.targets == b.targets);
        REQUIRE(a.mixture != c.mixture);
    }
    SECTION("on/off duty 0.5 at 100 W has a long-run mean near 50 W") {
        ApplianceSpec sp;
        sp.type = ApplianceType::OnOff;
        sp.levels = {100.0};
        sp.duty = 0.5;
        sp.mean_cycle_s = 200;
        Rng rng(17);
        auto series = gen_appliance(sp, 100000, 1.0, rng);
        double mean = 0;
        for (double v : series) mean += v / static_cast<double>(series.size());
        REQUIRE(mean > 45.0);
        REQUIRE(mean < 55.0);
    }
    SECTION("finite-state appliance only emits its listed levels") {
        ApplianceSpec sp;
        sp.type = ApplianceType::FiniteState;
        sp.levels = {0, 50, 200};
        Rng rng(19);
        auto series = gen_appliance(sp, 5000, 1.0, rng);
        std::vector<double> distinct;
        for (double v : series)
            if (std::find(distinct.begin(), distinct.end(), v) == distinct.end()) distinct.push_back(v);
        REQUIRE(distinct.size() == 3);
        for (double v : distinct)
            REQUIRE(std::find(sp.levels.begin(), sp.levels.end(), v) != sp.levels.end());
    }
    SECTION("varying appliance stays non-negative") {
        ApplianceSpec sp;
        sp.type = ApplianceType::Varying;
        sp.levels = {20.0};
        sp.sigma = 15.0;
        Rng rng(23);
        for (double v : gen_appliance(sp, 20000, 1.0, rng)) REQUIRE(v >= 0.0);
    }
    SECTION("targets plus noise reconstruct the mixture") {
        for (double noise : {0.0, 2.0, 8.0}) {
            auto d = gen_synthetic(default_specs(), 4096, 1.0, noise, 5);
            double max_dev = 0;
            for (size_t i = 0; i < d.mixture.size(); ++i) {
                double sum = 0;
                for (auto& t : d.targets) sum += t[i];
                max_dev = std::max(max_dev, std::abs(d.mixture[i] - sum));
            }
            REQUIRE(max_dev <= 5 * noise + 1e-12);
        }
    }
    SECTION("invalid specs are rejected") {
        ApplianceSpec sp;
        sp.type = ApplianceType::FiniteState;
        sp.levels = {10};
        REQUIRE_THROWS_AS(sp.validate(), ConfigError);
        sp.type = ApplianceType::OnOff;
        sp.duty = 1.5;
        REQUIRE_THROWS_AS(sp.validate(), ConfigError);
    }
}

TEST_CASE("spec file parsing") {
    fs::path p = scratch() / "appliances.cfg";
    std::ofstream(p) << "# two devices\n"
                     << "[appliance]\n"
                     << "name = kettle\n"
                     << "type = onoff\n"
                     << "levels = 2000\n"
                     << "duty = 0.05\n"
                     << "[appliance]\n"
                     << "name = fridge\n"
                     << "type = fsm\n"
                     << "levels = 0, 80, 150\n"
                     << "dwell = 0.97\n";
    auto specs = parse_spec_file(p.string());
    REQUIRE(specs.size() == 2);
    REQUIRE(specs[0].name == "kettle");
    REQUIRE(specs[0].type == ApplianceType::OnOff);
    REQUIRE(specs[1].levels == std::vector<double>{0, 80, 150});
    REQUIRE(specs[1].dwell == 0.97);
}

TEST_CASE("dataset cache round trip") {
    auto data = gen_synthetic(default_specs(), 1024, 1.0, 1.0, 11);
    auto [scaled, sc] = minmax_fit_transform(data.mixture);
    std::vector<std::vector<double>> tgt;
    for (auto& t : data.targets) tgt.push_back(sc.apply(t));
    Dataset ds;
    ds.source = "synthetic";
    ds.period_s = 1.0;
    ds.scale = sc;
    for (auto& s : default_specs()) ds.appliances.push_back(s.name);
    ds.windows = window_split(scaled, tgt, sc, 256);

    fs::path dir = scratch() / "ds";
    save_dataset(dir.string(), ds);
    Dataset back = load_dataset(dir.string());
    REQUIRE(back.source == "synthetic");
    REQUIRE(back.C() == 3);
    REQUIRE(back.appliances == ds.appliances);
    REQUIRE(back.scale.min_w == ds.scale.min_w);
    REQUIRE(back.scale.max_w == ds.scale.max_w);
    REQUIRE(back.windows.size() == ds.windows.size());
    for (size_t i = 0; i < ds.windows.size(); ++i) {
        REQUIRE(back.windows[i].mixture == ds.windows[i].mixture);
        REQUIRE(back.windows[i].targets == ds.windows[i].targets);
        REQUIRE(back.windows[i].start_ts == ds.windows[i].start_ts);
    }
    SECTION("bad magic is rejected") {
        std::fstream f(dir / "windows.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.write("GARBAG", 6);
        f.close();
        REQUIRE_THROWS_AS(load_dataset(dir.string()), DataError);
    }
}
