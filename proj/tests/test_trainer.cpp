#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "mars/trainer.hpp"
#include "support.hpp"

using namespace mars;

namespace {

Hyperparameters tiny_hyper() {
  Hyperparameters h;
  h.slots = 4;
  h.hidden = {8};
  h.epochs = 6;
  h.validate_every = 2;
  h.seed = 13;
  return h;
}

AgentModel perturbed(const Hyperparameters& h, std::uint64_t seed) {
  auto copy = h;
  copy.seed = seed;
  return AgentModel(copy);
}

}  // namespace

TEST(Versions, RotationKeepsThree) {
  const auto h = tiny_hyper();
  ModelVersions v;
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(record_validation(v, perturbed(h, i), -10.0 + i, 3));
  ASSERT_EQ(v.history.size(), 3u);
  EXPECT_EQ(v.current().model, perturbed(h, 4));
  EXPECT_EQ(v.history[1].model, perturbed(h, 3));
  EXPECT_EQ(v.history[2].model, perturbed(h, 2));
  EXPECT_EQ(v.negative_streak, 0);
}

TEST(Versions, ThreeWorseValidationsRollBackBitExactly) {
  const auto h = tiny_hyper();
  ModelVersions v;
  record_validation(v, perturbed(h, 100), -2.0, 3);
  const AgentModel good = perturbed(h, 101);
  record_validation(v, good, -1.0, 3);
  EXPECT_FALSE(record_validation(v, perturbed(h, 102), -1.5, 3));
  EXPECT_FALSE(record_validation(v, perturbed(h, 103), -1.6, 3));
  EXPECT_EQ(v.negative_streak, 2);
  EXPECT_TRUE(record_validation(v, perturbed(h, 104), -1.7, 3));
  EXPECT_EQ(v.rollbacks, 1u);
  EXPECT_EQ(v.negative_streak, 0);
  // The rolled-back current model is G_{m-1} from before the third
  // validation.
  EXPECT_EQ(v.current().model, perturbed(h, 103));
  EXPECT_NE(v.current().model, good);
}

TEST(Versions, ImprovementResetsStreak) {
  const auto h = tiny_hyper();
  ModelVersions v;
  record_validation(v, perturbed(h, 1), -1.0, 3);
  record_validation(v, perturbed(h, 2), -2.0, 3);
  record_validation(v, perturbed(h, 3), -3.0, 3);
  EXPECT_EQ(v.negative_streak, 2);
  record_validation(v, perturbed(h, 4), -0.5, 3);
  EXPECT_EQ(v.negative_streak, 0);
}

TEST(ModelFile, RoundTripIsBitExact) {
  auto h = tiny_hyper();
  const auto trace = fixtures::random_trace(5, 40, 16);
  auto result = train(fixed_trace_env(trace), h, AgentModel(h), {});
  const auto path = std::filesystem::temp_directory_path() / "mars_model_roundtrip.json";
  save_model(path.string(), result.model, h, -1.25);
  const auto loaded = load_model(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.model, result.model);
  EXPECT_EQ(loaded.validation_reward, -1.25);
  EXPECT_EQ(loaded.hyper.at("slots").get<int>(), 4);
  const auto restored = hyper_from_json(Hyperparameters{}, loaded.hyper);
  EXPECT_EQ(restored.slots, 4);
  EXPECT_EQ(restored.hidden, std::vector<int>{8});
}

TEST(ModelFile, RejectsUnknownFormat) {
  auto j = model_to_json(AgentModel(tiny_hyper()), tiny_hyper());
  j["format"] = "something-else";
  EXPECT_THROW(model_from_json(j), ParseError);
  EXPECT_THROW(load_model("/nonexistent/dir/model.json"), IoError);
}

TEST(Train, CurveValidationCadenceAndEpochCounter) {
  auto h = tiny_hyper();
  const auto trace = fixtures::random_trace(8, 50, 16);
  const auto result = train(fixed_trace_env(trace), h, AgentModel(h), {});
  ASSERT_EQ(result.curve.size(), 6u);
  EXPECT_FALSE(result.diverged);
  EXPECT_EQ(result.model.epoch, 6u);
  for (const auto& p : result.curve) {
    EXPECT_EQ(p.validation_reward.has_value(), p.epoch % 2 == 0) << p.epoch;
    EXPECT_LT(p.mean_reward, 0);
  }
  EXPECT_EQ(result.versions.history.size(), 3u);
  std::ostringstream csv;
  write_curve_csv(result.curve, csv);
  EXPECT_EQ(csv.str().rfind("# schema: mars-curve/1\nepoch,", 0), 0u);
}

TEST(Train, ResumeContinuesEpochCounter) {
  auto h = tiny_hyper();
  h.epochs = 3;
  const auto trace = fixtures::random_trace(9, 30, 16);
  auto first = train(fixed_trace_env(trace), h, AgentModel(h), {});
  auto second = train(fixed_trace_env(trace), h, first.model, first.versions);
  EXPECT_EQ(second.model.epoch, 6u);
  EXPECT_EQ(second.curve.front().epoch, 4u);
}

TEST(Train, DeterministicAcrossRunsAndWorkerCounts) {
  auto h = tiny_hyper();
  h.workers = 3;
  const auto trace = fixtures::random_trace(10, 40, 16);
  const auto a = train(fixed_trace_env(trace), h, AgentModel(h), {});
  const auto b = train(fixed_trace_env(trace), h, AgentModel(h), {});
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].mean_reward, b.curve[i].mean_reward);
}

TEST(Train, PpoModeTrains) {
  auto h = tiny_hyper();
  h.ppo = true;
  h.epochs = 3;
  const auto r = train(fixed_trace_env(fixtures::random_trace(12, 40, 16)), h, AgentModel(h), {});
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.model.epoch, 3u);
}

TEST(Train, SlotMismatchIsConfigError) {
  auto h = tiny_hyper();
  AgentModel m(h);
  h.slots = 6;
  EXPECT_THROW(train(fixed_trace_env(fixtures::random_trace(1, 10, 8)), h, m, {}), ConfigError);
}

TEST(Train, WorkerFailureIsRetriedOnce) {
  auto h = tiny_hyper();
  h.epochs = 1;
  const auto trace = fixtures::random_trace(2, 20, 8);
  TrainOptions opts;
  opts.validation = trace;
  int calls = 0;
  EnvFactory flaky = [&](std::uint64_t, int) {
    if (++calls == 1) throw IoError("transient");
    return trace;
  };
  EXPECT_NO_THROW(train(flaky, h, AgentModel(h), {}, opts));
  EXPECT_EQ(calls, 2);
  EnvFactory broken = [](std::uint64_t, int) -> WorkloadTrace { throw IoError("permanent"); };
  EXPECT_THROW(train(broken, h, AgentModel(h), {}, opts), IoError);
}
