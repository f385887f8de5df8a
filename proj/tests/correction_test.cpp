// Copyright 2026 The npclab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "npclab/correction.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "npclab/errors.hpp"
#include "npclab/loss.hpp"
#include "test_util.hpp"

using namespace npclab;

TEST_CASE("init_teacher copies the student exactly") {
  ModelParams student{EncoderParams::random_init(8, 4, 5), std::nullopt};
  const TeacherState teacher = init_teacher(student, 0.99);
  CHECK(teacher.step == 0);
  CHECK(teacher.alpha == 0.99);
  CHECK(teacher.params.query_tower.embedding ==
        student.query_tower.embedding);
  CHECK(teacher.params.query_tower.projection ==
        student.query_tower.projection);
  CHECK(teacher.params.query_tower.bias == student.query_tower.bias);

  const TeacherState again = init_teacher(student, 0.99);
  CHECK(again.params.query_tower.embedding ==
        teacher.params.query_tower.embedding);

  // Right after initialization the consistency loss vanishes on any batch.
  const auto c = testutil::random_grad_case(6);
  const TeacherState t2 = init_teacher(c.params, 0.9);
  const std::vector<ProbVector> student_dists =
      candidate_distributions(c.batch, c.params, c.config);
  const std::vector<ProbVector> teacher_dists =
      candidate_distributions(c.batch, t2.params, c.config);
  for (std::size_t i = 0; i < student_dists.size(); ++i) {
    CHECK(kl_divergence(student_dists[i], teacher_dists[i]) == 0.0);
  }
}

TEST_CASE("ema_update endpoints and arithmetic") {
  ModelParams student{EncoderParams::zeros(2, 2), std::nullopt};
  for (double& v : student.query_tower.embedding) v = 0.0;

  ModelParams start{EncoderParams::zeros(2, 2), std::nullopt};
  for (double& v : start.query_tower.embedding) v = 1.0;

  TeacherState frozen = init_teacher(start, 1.0);
  ema_update(frozen, student);
  for (double v : frozen.params.query_tower.embedding) CHECK(v == 1.0);
  CHECK(frozen.step == 1);

  TeacherState copy = init_teacher(start, 0.0);
  ema_update(copy, student);
  for (double v : copy.params.query_tower.embedding) CHECK(v == 0.0);

  TeacherState blend = init_teacher(start, 0.9);
  ema_update(blend, student);
  for (double v : blend.params.query_tower.embedding) {
    CHECK(v == doctest::Approx(0.9).epsilon(1e-15));
  }

  ModelParams wrong{EncoderParams::zeros(3, 2), std::nullopt};
  CHECK_THROWS_AS(ema_update(blend, wrong), ContractViolation);
}

TEST_CASE("teacher approaches a constant student geometrically") {
  ModelParams student{EncoderParams::random_init(6, 3, 11), std::nullopt};
  ModelParams start{EncoderParams::random_init(6, 3, 12), std::nullopt};
  const double alpha = 0.9;
  TeacherState teacher = init_teacher(start, alpha);
  const int steps = 25;
  for (int s = 0; s < steps; ++s) ema_update(teacher, student);
  CHECK(teacher.step == steps);
  const double factor = std::pow(alpha, steps);
  for (std::size_t i = 0; i < student.query_tower.embedding.size(); ++i) {
    const double want = factor * (start.query_tower.embedding[i] -
                                  student.query_tower.embedding[i]);
    const double got = teacher.params.query_tower.embedding[i] -
                       student.query_tower.embedding[i];
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("teacher_distribution composes encode and softmax") {
  const Vocabulary vocab = Vocabulary::build(
      std::vector<std::string>{"alpha beta", "gamma delta", "beta gamma"});
  ModelParams params{EncoderParams::random_init(vocab.size(), 4, 77),
                     std::nullopt};
  const TeacherState teacher = init_teacher(params, 0.99);
  const double tau = 20.0;

  const std::vector<int> query = tokenize("alpha beta", vocab);
  const std::vector<std::vector<int>> docs{tokenize("gamma delta", vocab),
                                           tokenize("beta gamma", vocab),
                                           tokenize("alpha", vocab)};
  const ProbVector got =
      teacher_distribution(teacher, query, docs, Similarity::kCosine, tau);

  const EmbeddingVector q = encode(query, params.query_tower, true);
  ScoreVector scores;
  for (const auto& doc : docs) {
    scores.push_back(similarity(
        q.values, encode(doc, params.query_tower, true).values,
        Similarity::kCosine));
  }
  const ProbVector want = softmax(scores, tau);
  REQUIRE(got.size() == want.size());
  for (std::size_t j = 0; j < got.size(); ++j) {
    CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }

  // Identical candidate texts give a uniform distribution.
  const std::vector<std::vector<int>> same{docs[0], docs[0], docs[0]};
  const ProbVector uniform =
      teacher_distribution(teacher, query, same, Similarity::kCosine, tau);
  for (double v : uniform) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("pair_loss identities") {
  const std::vector<double> student{0.5, 0.5};
  const std::vector<double> teacher{0.9, 0.1};

  // Noisy flag: only the consistency term survives.
  CHECK(pair_loss(student, teacher, 0, 0) ==
        doctest::Approx(kl_divergence(student, teacher)).epsilon(1e-12));

  // Teacher equals student: only the contrastive term survives.
  CHECK(pair_loss(student, student, 0, 1) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  // Perfect student on its positive: zero total.
  const std::vector<double> perfect{1.0, 0.0};
  CHECK(pair_loss(perfect, perfect, 0, 1) == doctest::Approx(0.0).epsilon(1e-9));

  // Both terms together.
  CHECK(pair_loss(student, teacher, 0, 1) ==
        doctest::Approx(-std::log(0.5) + 0.5 * std::log(25.0 / 9.0))
            .epsilon(1e-12));

  CHECK_THROWS_AS(pair_loss(student, std::vector<double>{1.0}, 0, 1),
                  ContractViolation);
  CHECK_THROWS_AS(pair_loss(student, teacher, 5, 1), ContractViolation);
}

TEST_CASE("pair_loss is non-negative") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + trial % 5;
    std::vector<double> s(n), t(n);
    double ss = 0.0, ts = 0.0;
    for (int j = 0; j < n; ++j) {
      s[j] = unit(rng);
      t[j] = unit(rng);
      ss += s[j];
      ts += t[j];
    }
    for (int j = 0; j < n; ++j) {
      s[j] /= ss;
      t[j] /= ts;
    }
    CHECK(pair_loss(s, t, trial % n, trial % 2) >= 0.0);
  }
}

TEST_CASE("reversed divergence direction is supported") {
  const std::vector<double> student{0.5, 0.5};
  const std::vector<double> teacher{0.9, 0.1};
  CHECK(pair_loss(student, teacher, 0, 0, /*kl_teacher_first=*/true) ==
        doctest::Approx(kl_divergence(teacher, student)).epsilon(1e-12));
}
