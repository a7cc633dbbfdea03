#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wm/blackbox.hpp"
#include "wm/dataset.hpp"
#include "wm/mark.hpp"
#include "wm/oracle.hpp"

#include <unistd.h>

#include <filesystem>
#include <string>

using namespace wm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("wmbb." + std::to_string(getpid()) + "." + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

Network constant_predictor(int num_classes, int winner, ImageShape shape) {
  ArchitectureSpec arch;
  arch.input = shape;
  arch.num_classes = num_classes;
  LayerDesc head;
  head.kind = LayerKind::kDense;
  head.name = "head";
  head.units = num_classes;
  head.relu = false;
  arch.layers = {head};
  Network net(arch);
  VectorXf p = VectorXf::Zero(net.param_count());
  p[net.param_count() - num_classes + winner] = 1.0f;
  net.set_params(p);
  return net;
}

// One shared small embedding for the end-to-end cases; built once.
struct SmallGame {
  Dataset owner, pool, test;
  TriggerSet trig;
  MarkedBundle bundle;
};

const SmallGame& small_game() {
  static SmallGame* g = [] {
    auto* s = new SmallGame;
    Dataset full = load_dataset("synth:digits:train:2400:77");
    SplitPlan plan;
    plan.seed = 3;
    auto halves = split_owner_attacker(full, plan);
    s->owner = halves.first;
    s->pool = halves.second;
    s->test = load_dataset("synth:digits:test:400:77");
    TriggerConfig tcfg;
    tcfg.scheme = TriggerScheme::kContentEmbedded;
    tcfg.embed_count = 120;
    tcfg.holdout_count = 60;
    tcfg.target_class = 4;
    tcfg.seed = 9;
    s->trig = make_content_trigger(s->owner, tcfg);
    MarkConfig mcfg;
    mcfg.seed = 13;
    mcfg.clean_train.max_epochs = 12;
    mcfg.clean_train.stop = EarlyStopRule{};
    mcfg.marked_train.max_epochs = 12;
    mcfg.marked_train.stop = EarlyStopRule{};
    s->bundle = mmodel(desk_arch(10), s->owner, s->trig, mcfg, &s->test);
    return s;
  }();
  return *g;
}

}  // namespace

TEST_CASE("oracle enforces its budget without consuming failed queries") {
  const ImageShape shape{1, 4, 4};
  Network victim = constant_predictor(10, 2, shape);
  OracleHandle oracle(victim, 100);
  CHECK(oracle.budget() == 100);
  CHECK(oracle.remaining() == 100);

  MatrixXf batch = MatrixXf::Constant(shape.size(), 64, 0.5f);
  VectorXi first = oracle.query(batch);
  CHECK(first.size() == 64);
  CHECK((first.array() == 2).all());
  CHECK(oracle.queries_used() == 64);
  CHECK(oracle.remaining() == 36);

  CHECK_THROWS_AS(oracle.query(batch), BudgetError);
  CHECK(oracle.queries_used() == 64);  // the failed batch cost nothing

  MatrixXf rest = MatrixXf::Constant(shape.size(), 36, 0.5f);
  VectorXi second = oracle.query(rest);
  CHECK(second.size() == 36);
  CHECK(oracle.queries_used() == 100);
  CHECK(oracle.remaining() == 0);
  MatrixXf one = MatrixXf::Constant(shape.size(), 1, 0.5f);
  CHECK_THROWS_AS(oracle.query(one), BudgetError);
}

TEST_CASE("oracle with unlimited budget mirrors classify") {
  ArchitectureSpec arch = desk_arch(10);
  Network victim(arch);
  victim.init(99);
  OracleHandle oracle(victim);
  Rng rng(5, "probe");
  MatrixXf probes(arch.input.size(), 40);
  for (int i = 0; i < probes.size(); ++i) {
    probes.data()[i] = static_cast<float>(rng.uniform());
  }
  CHECK(oracle.query(probes) == victim.classify(probes));
  CHECK(oracle.queries_used() == 40);
  CHECK(oracle.remaining() == -1);
  CHECK(oracle.victim_digest() == victim.param_digest());
}

TEST_CASE("steal refuses labeled pools and empty pools") {
  const SmallGame& g = small_game();
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  CHECK_THROWS_AS(steal(g.bundle.marked, g.owner, cfg), DataError);  // owner half is labeled

  Dataset empty(MatrixXf(g.owner.shape().size(), 0), VectorXi(0), g.owner.shape(), 10, "empty",
                DatasetRole::kAttackerPool);
  CHECK_THROWS_AS(steal(g.bundle.marked, empty, cfg), SizeError);

  cfg.query_budget = 0;
  CHECK_THROWS_AS(steal(g.bundle.marked, g.pool, cfg), BudgetError);
}

TEST_CASE("steal under a tight budget labels a prefix and still trains") {
  const SmallGame& g = small_game();
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  cfg.seed = 2;
  cfg.query_budget = 150;
  cfg.train.max_epochs = 2;
  StealResult r = steal(g.bundle.marked, g.pool, cfg);
  CHECK(r.queries_used == 150);
  CHECK(r.epochs == 2);
  CHECK_FALSE(r.from_cache);
  CHECK(r.surrogate.provenance.role == ModelRole::kAttack);
}

TEST_CASE("steal against a constant victim reproduces the constant") {
  const SmallGame& g = small_game();
  Network victim = constant_predictor(10, 6, g.pool.shape());
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  cfg.seed = 4;
  cfg.train.max_epochs = 3;
  StealResult r = steal(victim, g.pool, cfg);
  const VectorXi pred = r.surrogate.classify(g.test.pixels());
  CHECK((pred.array() == 6).all());
}

TEST_CASE("label cache answers repeat games without queries") {
  const SmallGame& g = small_game();
  const fs::path dir = temp_dir();
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  cfg.seed = 8;
  cfg.train.max_epochs = 2;
  cfg.cache_dir = dir.string();

  StealResult miss = steal(g.bundle.marked, g.pool, cfg);
  CHECK_FALSE(miss.from_cache);
  CHECK(miss.queries_used == g.pool.count());

  StealResult hit = steal(g.bundle.marked, g.pool, cfg);
  CHECK(hit.from_cache);
  CHECK(hit.queries_used == 0);
  CHECK(hit.surrogate.param_digest() == miss.surrogate.param_digest());

  // A different victim must miss: answers are keyed by victim parameters.
  StealResult other = steal(g.bundle.clean, g.pool, cfg);
  CHECK_FALSE(other.from_cache);
}

TEST_CASE("steal is bit-reproducible per seed") {
  const SmallGame& g = small_game();
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  cfg.seed = 30;
  cfg.train.max_epochs = 3;
  StealResult a = steal(g.bundle.marked, g.pool, cfg);
  StealResult b = steal(g.bundle.marked, g.pool, cfg);
  CHECK(a.surrogate.param_digest() == b.surrogate.param_digest());
  cfg.seed = 31;
  StealResult c = steal(g.bundle.marked, g.pool, cfg);
  CHECK(c.surrogate.param_digest() != a.surrogate.param_digest());
}

TEST_CASE("blackbox game reports consistent removal metrics") {
  const SmallGame& g = small_game();
  StealConfig cfg;
  cfg.surrogate_arch = desk_arch(10);
  cfg.seed = 12;
  cfg.train.max_epochs = 10;
  VerifyConfig vcfg;
  BlackboxOutcome out = blackbox_game(g.bundle.marked, g.trig, g.pool, g.test, cfg, vcfg);

  CHECK(out.queries_used == g.pool.count());
  CHECK(out.victim_accuracy == doctest::Approx(g.bundle.marked_accuracy));
  CHECK(out.removal.accuracy_drop ==
        doctest::Approx(out.victim_accuracy - out.removal.accuracy));
  CHECK(out.removal.retention >= 0.0);
  CHECK(out.removal.retention <= 1.0);
  CHECK(out.win == out.removal.removed);
  CHECK(out.wall_seconds > 0.0);
  // The surrogate never trains on triggers; a verification claim against it
  // must fail even at this small scale.
  VerifyReport claim = verify(out.surrogate, g.trig, vcfg);
  CHECK_FALSE(claim.accepted);
  // Mutual exclusion in action: a model cannot verify and count as removed.
  CHECK_FALSE((claim.accepted && out.removal.unverifiable));
}
