#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "dnc/io.hpp"
#include "test_util.hpp"

namespace dnc {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
protected:
    fs::path dir = fs::temp_directory_path() / ("dnc_io_test_" + std::to_string(::getpid()));
    void SetUp() override { fs::create_directories(dir); }
    void TearDown() override { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

TEST_F(TempDir, SampleCsvRoundTripIsExact) {
    Rng rng(1);
    ShardDraws d{standard_normal(50, 3, rng) * 1e-7, standard_normal(50, 3, rng) * 1e9};
    write_samples_csv(file("s.csv"), d);
    const SampleFile f = read_samples_csv(file("s.csv"));
    ASSERT_TRUE(f.scores.has_value());
    EXPECT_TRUE(f.samples == d.samples);
    EXPECT_TRUE(*f.scores == d.scores);
    write_samples_csv(file("n.csv"), d.samples);
    const SampleFile g = read_samples_csv(file("n.csv"));
    EXPECT_FALSE(g.scores.has_value());
    std::ifstream in(file("s.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "dim_0,dim_1,dim_2,score_0,score_1,score_2");
}

TEST_F(TempDir, SampleCsvErrors) {
    std::ofstream(file("bad.csv")) << "a,b\n1,2\n";
    EXPECT_THROW(read_samples_csv(file("bad.csv")), DataError);
    std::ofstream(file("extra.csv")) << "dim_0,z\n1,2\n";
    EXPECT_THROW(read_samples_csv(file("extra.csv")), DataError);
    std::ofstream(file("empty.csv")) << "dim_0\n";
    EXPECT_THROW(read_samples_csv(file("empty.csv")), DataError);
    const Mat wrong = Mat::Zero(3, 2);
    EXPECT_THROW(write_samples_csv(file("x.csv"), Mat::Zero(2, 2), &wrong), ShapeError);
}

TEST_F(TempDir, ModelRoundTripIsBitExact) {
    Rng rng(2);
    const NetConfig net{3, 16, 2};
    const EnergyModel model(net, VpSchedule(0.2, 15.0), Vec(0.4 * standard_normal(net.parameter_count(), rng)));
    const AffineMap map = fit_affine(standard_normal(40, 3, rng));
    save_model(file("m.dncem"), model, map);
    const TrainedShard back = load_model(file("m.dncem"));
    EXPECT_EQ(back.model.config(), net);
    EXPECT_EQ(back.model.schedule().beta_min(), 0.2);
    EXPECT_EQ(back.model.schedule().beta_max(), 15.0);
    EXPECT_TRUE(back.map.mu == map.mu && back.map.sqrt_cov == map.sqrt_cov && back.map.inv_sqrt_cov == map.inv_sqrt_cov);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Vec x = standard_normal(3, rng);
        const double t = u(rng);
        EXPECT_EQ(back.model.energy(x, t), model.energy(x, t));
    }
}

TEST_F(TempDir, ModelWrongMagic) {
    std::ofstream(file("bad.dncem"), std::ios::binary) << "DNCEM9-------------------";
    try {
        load_model(file("bad.dncem"));
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("DNCEM1"), std::string::npos);
    }
}

TEST_F(TempDir, ModelTruncatedNamesSizes) {
    Rng rng(3);
    const EnergyModel model(NetConfig{2, 4, 1}, VpSchedule(), 3);
    save_model(file("m.dncem"), model, AffineMap::identity(2));
    const auto size = fs::file_size(file("m.dncem"));
    fs::resize_file(file("m.dncem"), size - 8);
    try {
        load_model(file("m.dncem"));
        FAIL();
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("expected " + std::to_string(size) + " bytes"), std::string::npos) << msg;
        EXPECT_NE(msg.find("found " + std::to_string(size - 8)), std::string::npos) << msg;
    }
    fs::resize_file(file("m.dncem"), 10);
    EXPECT_THROW(load_model(file("m.dncem")), FormatError);
    EXPECT_THROW(load_model(file("missing.dncem")), DataError);
}

TEST_F(TempDir, DatasetCsvRoundTrip) {
    Dataset d;
    d.features = (Mat(2, 2) << 1.5, -2.0, 0.1, 3.0).finished();
    d.response = (Vec(2) << 0.0, 1.0).finished();
    d.feature_names = {"a", "b"};
    write_dataset_csv(file("d.csv"), d);
    CsvSchema schema;
    schema.response = "y";
    const Dataset back = load_csv(file("d.csv"), schema);
    EXPECT_TRUE(back.features == d.features && back.response == d.response);
    EXPECT_EQ(back.feature_names, d.feature_names);
}

}  // namespace
}  // namespace dnc
