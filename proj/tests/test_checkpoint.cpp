#include "leand/checkpoint.hpp"
#include "leand/random.hpp"

#include "support.hpp"

#include <cstring>

using namespace leand;

namespace {

const FitResult& fitted() {
  static const FitResult r = [] {
    Rng rng(1);
    DataTable t;
    t.features = Matrix::NullaryExpr(60, 4, [&] { return rng.normal(); });
    for (Index i = 0; i < 60; ++i) t.labels.push_back(i < 3 ? Label::anomaly : Label::normal);
    DetectorConfig c;
    c.architecture.encoder_sizes = {3, 2};
    c.rff_dim = 32;
    c.num_eigs = 5;
    c.pretrain.epochs = 2;
    c.aff.epochs = 2;
    c.joint.epochs = 2;
    return fit(t, c);
  }();
  return r;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto& m = fitted().model;
  const std::string bytes = serialize(m);
  const LeandModel back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.tau, m.tau);
  EXPECT_EQ(back.density.eigvecs, m.density.eigvecs);
  EXPECT_EQ(back.feature_map.weights, m.feature_map.weights);
  EXPECT_EQ(back.autoencoder.flatten(), m.autoencoder.flatten());
  Rng rng(2);
  const Matrix q = Matrix::NullaryExpr(20, 4, [&] { return rng.normal(); });
  EXPECT_EQ(score_rows(back, q), score_rows(m, q));
}

TEST(Checkpoint, FileRoundTrip) {
  leand::testing::TempFile f("model.bin", "");
  save_model(fitted().model, f.path());
  EXPECT_EQ(serialize(load_model(f.path())), serialize(fitted().model));
  EXPECT_THROW(load_model("/nonexistent/model.bin"), IoError);
}

TEST(Checkpoint, CorruptInputsRejected) {
  const std::string bytes = serialize(fitted().model);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), IoError);
  bad = bytes;
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(bad.data() + 8, &v, sizeof v);
  EXPECT_THROW(deserialize(bad), IoError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize(std::string_view(bytes).substr(0, cut)), IoError) << cut;
  }
}
