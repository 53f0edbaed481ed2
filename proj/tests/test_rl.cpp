#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lagoon/rl_env.hpp"
#include "lagoon/rl_policy.hpp"
#include "lagoon/rl_ppo.hpp"

using namespace lagoon;

namespace {

SimConfig desk_config() {
    SimConfig cfg;
    cfg.area = AreaProfile::constant(11.5e6);
    return cfg;
}

EnvConfig desk_env() {
    EnvConfig e;
    e.sim = desk_config();
    return e;
}

TideSeries constant_series(double level, std::size_t n, double dt_s = 60.0) {
    TideSeries s;
    s.dt_s = dt_s;
    s.levels_m.assign(n, level);
    s.quality.assign(n, Quality::Good);
    return s;
}

/// Wraps a series stream and counts how many samples the consumer pulled.
class CountingStream final : public TideStream {
public:
    explicit CountingStream(TideSeries series) : inner_(std::move(series)) {}
    double next() override {
        ++pulls;
        return inner_.next();
    }
    std::size_t remaining() const override { return inner_.remaining(); }
    double dt_s() const override { return inner_.dt_s(); }
    std::size_t pulls = 0;

private:
    SeriesStream inner_;
};

PolicyNet zero_net(NetDims dims = {}) {
    PolicyNet net(dims, 0);
    net.theta().setZero();
    return net;
}

} // namespace

TEST_CASE("action decode is hierarchical with inclusive thresholds") {
    CHECK(decode_action({0.5, 0.0, 0.3}) == StructureCommand{TurbineMode::Generate, 0.3});
    CHECK(decode_action({0.9, 0.9, 0.0}) == StructureCommand{TurbineMode::Generate, 0.0});
    CHECK(decode_action({0.49, 0.5, 1.0}) == StructureCommand{TurbineMode::Idle, 1.0});
    CHECK(decode_action({0.49, 0.49, 0.7}) == StructureCommand{TurbineMode::Off, 0.7});
    CHECK(decode_action({0.0, 0.0, 0.0}) == StructureCommand{TurbineMode::Off, 0.0});
}

TEST_CASE("raw actions clip to [-1,1] then map to the unit cube") {
    const auto a = map_raw_action(Eigen::Vector3d(-2.0, 0.0, 0.5));
    CHECK(a[0] == 0.0);
    CHECK(a[1] == 0.5);
    CHECK(a[2] == 0.75);
    const auto b = map_raw_action(Eigen::Vector3d(3.0, -1.0, 1.0));
    CHECK(b[0] == 1.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 1.0);
}

TEST_CASE("sequential streams refuse random access patterns") {
    SeriesStream s(constant_series(1.0, 3));
    CHECK(s.remaining() == 3);
    CHECK(s.next() == 1.0);
    s.next();
    s.next();
    CHECK(s.remaining() == 0);
    CHECK_THROWS_WITH(s.next(), Catch::Matchers::ContainsSubstring("past the end"));
    CHECK_THROWS_AS(SeriesStream(nullptr), std::invalid_argument);
}

TEST_CASE("reset duplicates the current block into the previous slot") {
    auto tide = constant_series(3.0, 64);
    tide.levels_m[0] = 2.4;
    LagoonEnv env(desk_env());
    const auto obs = env.reset(std::make_unique<SeriesStream>(tide));
    CHECK_THAT(obs.v[0], Catch::Matchers::WithinAbs(2.4 / 6.0, 1e-12));
    CHECK(obs.v[1] == 0.0); // lagoon starts at msl
    CHECK(obs.v[2] == 0.0); // not generating
    CHECK(obs.v[3] == 0.0); // not idling
    CHECK(obs.v[4] == 0.0); // sluices shut
    for (int i = 0; i < 5; ++i) REQUIRE(obs.v[i + 5] == obs.v[i]);
}

TEST_CASE("observations expose the commanded state after a step") {
    LagoonEnv env(desk_env());
    const auto first = env.reset(std::make_unique<SeriesStream>(constant_series(4.0, 64)));
    const auto out = env.step({0.9, 0.1, 0.7}); // generate with sluices at 0.7
    CHECK(out.obs.v[2] == 1.0);                 // 16 of 16 turbines generating
    CHECK(out.obs.v[3] == 0.0);
    CHECK(out.obs.v[4] == 0.7);
    CHECK(out.obs.v[1] > 0.0); // flood generation filled the lagoon
    for (int i = 0; i < 5; ++i) REQUIRE(out.obs.v[i + 5] == first.v[i]);

    const auto idle = env.step({0.1, 0.9, 0.0});
    CHECK(idle.obs.v[2] == 0.0);
    CHECK(idle.obs.v[3] == 1.0);
    CHECK(idle.obs.v[7] == 1.0); // previous block kept the generate flag
}

TEST_CASE("reward equals the window's generated energy on the declared scale") {
    EnvConfig cfg = desk_env();
    LagoonEnv env(cfg);
    env.reset(std::make_unique<SeriesStream>(constant_series(4.0, 64)));
    const auto out = env.step({1.0, 0.0, 0.0}); // hold Generate for 15 minutes

    Simulation ref(cfg.sim);
    for (int p = 0; p < 15; ++p) ref.step(4.0, {TurbineMode::Generate, 0.0});
    REQUIRE(ref.energy_wh() > 0.0);
    CHECK(out.reward == ref.energy_wh() / 1e6 / 50.0);
    CHECK(out.reward > 0.5);
    CHECK(out.reward < 1.2);
    CHECK(env.energy_wh() == ref.energy_wh());
}

TEST_CASE("exactly one ocean sample is consumed per physics step") {
    auto stream = std::make_unique<CountingStream>(constant_series(2.0, 100));
    auto* counter = stream.get();
    LagoonEnv env(desk_env());
    env.reset(std::move(stream));
    CHECK(counter->pulls == 1); // the reset draws the first sample
    std::size_t steps = 0;
    while (!env.done()) {
        env.step({0.0, 0.0, 1.0});
        ++steps;
        CHECK(counter->pulls == 1 + 15 * steps);
    }
    // 100 samples: 1 at reset + 6 windows of 15 = 91 pulls, 9 left over.
    CHECK(steps == 6);
    CHECK(counter->pulls == 91);
    CHECK_THROWS_WITH(env.step({0.0, 0.0, 0.0}),
                      Catch::Matchers::ContainsSubstring("finished"));
}

TEST_CASE("episodes are capped at the configured mdp step budget") {
    EnvConfig cfg = desk_env();
    cfg.max_mdp_steps = 3;
    LagoonEnv env(cfg);
    env.reset(std::make_unique<SeriesStream>(constant_series(1.0, 1000)));
    env.step({0, 0, 0});
    env.step({0, 0, 0});
    const auto out = env.step({0, 0, 0});
    CHECK(out.done);
    CHECK(env.mdp_steps() == 3);
}

TEST_CASE("the environment refuses unusable streams") {
    LagoonEnv env(desk_env());
    CHECK_THROWS_WITH(env.reset(std::make_unique<SeriesStream>(constant_series(1.0, 64, 900.0))),
                      Catch::Matchers::ContainsSubstring("resample"));
    CHECK_THROWS_WITH(env.reset(std::make_unique<SeriesStream>(constant_series(1.0, 10))),
                      Catch::Matchers::ContainsSubstring("too short"));
    LagoonEnv fresh(desk_env());
    CHECK_THROWS_WITH(fresh.step({0, 0, 0}),
                      Catch::Matchers::ContainsSubstring("before reset"));
}

TEST_CASE("generalized advantage estimation matches hand recursions") {
    std::vector<double> adv, ret;

    // gamma = lambda = 1 with zero values reduces to reward suffix sums.
    gae({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0}, 0.0, 1.0, 1.0, adv, ret);
    CHECK_THAT(adv[0], Catch::Matchers::WithinAbs(6.0, 1e-12));
    CHECK_THAT(adv[1], Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK_THAT(adv[2], Catch::Matchers::WithinAbs(3.0, 1e-12));

    gae({1.0, 2.0}, {0.5, 1.5}, 2.0, 0.9, 0.8, adv, ret);
    CHECK_THAT(adv[0], Catch::Matchers::WithinAbs(3.5060000000000002, 1e-12));
    CHECK_THAT(adv[1], Catch::Matchers::WithinAbs(2.3, 1e-12));
    CHECK_THAT(ret[0], Catch::Matchers::WithinAbs(4.006, 1e-12));
    CHECK_THAT(ret[1], Catch::Matchers::WithinAbs(3.8, 1e-12));

    // A done flag cuts both the bootstrap and the advantage chain.
    const std::vector<std::uint8_t> dones{1, 0};
    gae({1.0, 2.0}, {0.5, 1.5}, 2.0, 0.9, 0.8, adv, ret, &dones);
    CHECK_THAT(adv[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(adv[1], Catch::Matchers::WithinAbs(2.3, 1e-12));

    CHECK_THROWS_AS(gae({1.0}, {1.0, 2.0}, 0.0, 1.0, 1.0, adv, ret),
                    std::invalid_argument);
}

TEST_CASE("network initialization zeroes the heads and seeds the trunk") {
    PolicyNet net(NetDims{}, 7);
    CHECK(net.param_count() == 18439);
    Eigen::MatrixXd obs = Eigen::MatrixXd::Random(4, 10);
    PolicyNet::Cache c;
    net.forward(obs, c);
    CHECK(c.MU.cwiseAbs().maxCoeff() == 0.0); // zero action head
    CHECK(c.V.cwiseAbs().maxCoeff() == 0.0);  // zero value head
    CHECK(net.log_std().cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.H1.cwiseAbs().maxCoeff() > 0.0); // trunk is not degenerate
    CHECK(c.H1.cwiseAbs().maxCoeff() < 1.0); // tanh keeps activations bounded

    PolicyNet same(NetDims{}, 7), other(NetDims{}, 8);
    CHECK(net.theta() == same.theta());
    CHECK(net.theta() != other.theta());

    CHECK_THROWS_AS(PolicyNet(NetDims{}, Eigen::VectorXd::Zero(10)), std::invalid_argument);
}

TEST_CASE("gaussian densities and entropy match closed forms") {
    const Eigen::VectorXd zero3 = Eigen::VectorXd::Zero(3);
    CHECK_THAT(gaussian_log_prob(zero3, zero3, zero3),
               Catch::Matchers::WithinAbs(-2.756815599614018, 1e-15));
    CHECK_THAT(gaussian_entropy(zero3),
               Catch::Matchers::WithinAbs(4.2568155996140185, 1e-15));
    // Wider policies carry more entropy, narrower ones less.
    CHECK(gaussian_entropy(Eigen::VectorXd::Constant(3, 0.5)) > gaussian_entropy(zero3));
    CHECK(gaussian_entropy(Eigen::VectorXd::Constant(3, -0.5)) < gaussian_entropy(zero3));
}

TEST_CASE("policy sampling is deterministic in mean mode and seeded otherwise") {
    const auto net = zero_net();
    const Eigen::VectorXd obs = Eigen::VectorXd::Constant(10, 0.3);
    const auto det = policy_sample(net, obs, true, nullptr);
    CHECK(det.raw == Eigen::Vector3d::Zero());
    CHECK(det.action01 == std::array<double, 3>{0.5, 0.5, 0.5});
    CHECK(det.value == 0.0);
    CHECK_THAT(det.log_prob, Catch::Matchers::WithinAbs(-2.756815599614018, 1e-15));

    Rng a(9), b(9);
    const auto s1 = policy_sample(net, obs, false, &a);
    const auto s2 = policy_sample(net, obs, false, &b);
    CHECK(s1.raw == s2.raw);
    CHECK(s1.log_prob == s2.log_prob);
    CHECK_THROWS_AS(policy_sample(net, obs, false, nullptr), std::invalid_argument);
}

TEST_CASE("ppo loss reduces to the advantage mean at the old policy") {
    const auto net = zero_net(NetDims{4, 8, 3});
    const Eigen::Index B = 2;
    PpoBatch b;
    b.obs = Eigen::MatrixXd::Zero(B, 4);
    b.raw_actions = Eigen::MatrixXd::Zero(B, 3);
    b.logp_old = Eigen::VectorXd::Constant(B, -1.5 * log_2pi()); // exact old density
    b.values_old = Eigen::VectorXd::Zero(B);
    b.advantages.resize(B);
    b.advantages << 1.2, -0.8;
    b.returns = Eigen::VectorXd::Zero(B);

    PpoConfig cfg;
    const auto d = ppo_loss(net, b, cfg);
    CHECK_THAT(d.policy_loss, Catch::Matchers::WithinAbs(-0.2, 1e-12)); // -mean(adv)
    CHECK(d.value_loss == 0.0);
    CHECK(d.clip_fraction == 0.0);
    CHECK_THAT(d.approx_kl, Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(d.entropy, Catch::Matchers::WithinAbs(4.2568155996140185, 1e-12));
    CHECK_THAT(d.loss, Catch::Matchers::WithinAbs(-0.2 - cfg.entropy_beta * d.entropy, 1e-12));
}

TEST_CASE("ppo loss clips ratios and value targets like the reference form") {
    const auto net = zero_net(NetDims{4, 8, 3});
    PpoBatch b;
    b.obs = Eigen::MatrixXd::Zero(1, 4);
    b.raw_actions.resize(1, 3);
    b.raw_actions << 0.3, -0.2, 0.1;
    const double logp_new = -2.826815599614018; // density of that action at mu=0
    b.logp_old = Eigen::VectorXd::Constant(1, logp_new - std::log(1.25)); // ratio 1.25
    b.values_old = Eigen::VectorXd::Constant(1, 0.1);
    b.advantages = Eigen::VectorXd::Constant(1, 2.0);
    b.returns = Eigen::VectorXd::Constant(1, 0.3);

    PpoConfig cfg; // eps = 0.2: ratio 1.25 is clipped to 1.2
    const auto d = ppo_loss(net, b, cfg);
    CHECK_THAT(d.policy_loss, Catch::Matchers::WithinAbs(-2.4, 1e-12));
    CHECK(d.clip_fraction == 1.0);
    CHECK_THAT(d.approx_kl, Catch::Matchers::WithinAbs(-std::log(1.25), 1e-12));
    // V = 0, old value 0.1, return 0.3: raw and clipped errors coincide.
    CHECK_THAT(d.value_loss, Catch::Matchers::WithinAbs(0.09, 1e-12));
    CHECK_THAT(d.loss, Catch::Matchers::WithinAbs(-2.3762840779980703, 1e-12));

    // A negative advantage flips which branch the min selects.
    b.advantages = Eigen::VectorXd::Constant(1, -2.0);
    const auto d2 = ppo_loss(net, b, cfg);
    CHECK_THAT(d2.policy_loss, Catch::Matchers::WithinAbs(2.5, 1e-12));

    b.advantages = Eigen::VectorXd::Constant(
        1, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_WITH(ppo_loss(net, b, cfg),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("the analytic gradient matches central finite differences") {
    const NetDims dims{4, 8, 3};
    PolicyNet net(dims, 77);
    {
        // Randomize every block so gradients flow through heads and trunk.
        Rng r(123);
        for (Eigen::Index i = 0; i < net.param_count(); ++i)
            net.theta()[i] = 0.3 * r.normal();
        Eigen::Vector3d ls(0.2, -0.3, 0.1);
        net.set_log_std(ls);
    }

    const Eigen::Index B = 6;
    Rng r(321);
    Eigen::MatrixXd obs(B, 4);
    for (Eigen::Index i = 0; i < B * 4; ++i) obs.data()[i] = r.normal();

    PolicyNet::Cache c0;
    net.forward(obs, c0);
    const Eigen::VectorXd ls = net.log_std();

    // Ratios and value geometries picked to exercise every clip branch while
    // staying clear of the non-differentiable kinks.
    const double ratios[] = {0.5, 0.9, 1.0, 1.1, 1.6, 1.3};
    const double advs[] = {2.0, -1.5, 1.0, -2.0, 0.7, -0.6};
    const double vold_off[] = {-0.1, -0.5, -0.5, 0.5, -0.15, 0.5};
    const double ret_off[] = {-0.4, -0.1, -0.6, 0.1, 0.2, 0.8};

    PpoBatch b;
    b.obs = obs;
    b.raw_actions.resize(B, 3);
    b.logp_old.resize(B);
    b.values_old.resize(B);
    b.advantages.resize(B);
    b.returns.resize(B);
    for (Eigen::Index i = 0; i < B; ++i) {
        Eigen::Vector3d delta(0.4 * r.normal(), 0.4 * r.normal(), 0.4 * r.normal());
        b.raw_actions.row(i) = (c0.MU.row(i).transpose() + delta).transpose();
        const double lp = gaussian_log_prob(b.raw_actions.row(i).transpose(),
                                            c0.MU.row(i).transpose(), ls);
        b.logp_old[i] = lp - std::log(ratios[i]);
        b.advantages[i] = advs[i];
        b.values_old[i] = c0.V[i] + vold_off[i];
        b.returns[i] = c0.V[i] + ret_off[i];
    }

    PpoConfig cfg;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
    ppo_loss(net, b, cfg, &grad);

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < net.param_count(); ++i) {
        PolicyNet plus = net, minus = net;
        plus.theta()[i] += h;
        minus.theta()[i] -= h;
        const double fd =
            (ppo_loss(plus, b, cfg).loss - ppo_loss(minus, b, cfg).loss) / (2.0 * h);
        REQUIRE_THAT(grad[i],
                     Catch::Matchers::WithinAbs(fd, 1e-6 + 1e-4 * std::abs(fd)));
    }
}

TEST_CASE("adam takes the bias-corrected signed step") {
    Adam opt(1);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(1, 3.0);
    opt.step(theta, grad, 0.01);
    CHECK_THAT(theta[0], Catch::Matchers::WithinAbs(-0.01, 1e-9)); // ~ -lr * sign(g)
}

TEST_CASE("checkpoints round-trip without losing a single bit") {
    PolicyNet net(NetDims{}, 3);
    Checkpoint cp;
    cp.dims = net.dims();
    cp.theta = net.theta();
    cp.config_echo = {{"gamma", "0.99"}, {"seed", "3"}};
    cp.seed = 3;
    cp.steps_trained = 12345;

    const std::string path = "ckpt_roundtrip.tmp.json";
    cp.save(path);
    const auto back = Checkpoint::load(path);
    std::remove(path.c_str());

    CHECK(back.dims == cp.dims);
    REQUIRE(back.theta.size() == cp.theta.size());
    for (Eigen::Index i = 0; i < cp.theta.size(); ++i)
        REQUIRE(back.theta[i] == cp.theta[i]);
    CHECK(back.config_echo == cp.config_echo);
    CHECK(back.seed == 3);
    CHECK(back.steps_trained == 12345);
    CHECK(back.tool_version == kToolVersion);

    const auto restored = back.to_net();
    const Eigen::VectorXd obs = Eigen::VectorXd::Constant(10, 0.2);
    const auto a = policy_sample(net, obs, true, nullptr);
    const auto b = policy_sample(restored, obs, true, nullptr);
    CHECK(a.raw == b.raw);
    CHECK(a.value == b.value);
}

TEST_CASE("incompatible checkpoints are a distinct error class") {
    auto j = Checkpoint{}.to_json();
    j["format_version"] = 999;
    CHECK_THROWS_AS(Checkpoint::from_json(j), CheckpointError);

    const std::string path = "ckpt_garbage.tmp.json";
    {
        std::ofstream out(path);
        out << "this is not json\n";
    }
    CHECK_THROWS_AS(Checkpoint::load(path), CheckpointError);
    std::remove(path.c_str());
}

TEST_CASE("policy evaluation runs the stream out and reports honestly") {
    const auto net = zero_net();
    EnvConfig cfg = desk_env();
    auto result = evaluate_policy(net, cfg, std::make_unique<SeriesStream>(synthetic_month(1)));
    // One month at 60 s: 44640 samples; 1 for reset leaves 2975 full windows.
    CHECK(result.mdp_steps == 2975);
    CHECK(result.records.size() == 2975 * 15);
    CHECK(result.energy_wh >= 0.0);
    CHECK_FALSE(result.envelope_warning); // synthetic tides stay in envelope

    // An absurd normalizer pushes observations out of the envelope.
    EnvConfig tight = desk_env();
    tight.level_scale_m = 0.1;
    auto warned = evaluate_policy(zero_net(), tight,
                                  std::make_unique<SeriesStream>(synthetic_month(1)), false);
    CHECK(warned.envelope_warning);
    CHECK(warned.records.empty());
}

TEST_CASE("ppo training is reproducible and leaves artifacts behind") {
    PpoConfig p;
    p.env_count = 2;
    p.horizon = 8;
    p.minibatch = 16;
    p.epochs = 2;
    p.max_steps = 64;
    p.checkpoint_every = 32;
    p.seed = 5;
    p.hidden = 16;
    EnvConfig e = desk_env();
    e.episode_days = 0.05; // 72-sample episodes keep the smoke test fast

    const std::string out_dir = "ppo_smoke.tmp.d";
    std::filesystem::remove_all(out_dir);

    PpoTrainer a(p, e, {{"note", "smoke"}});
    a.train(out_dir);
    CHECK(a.steps_done() == 64);
    CHECK(a.curve().size() == 4); // 16 steps per update

    PpoTrainer b(p, e);
    b.train();
    REQUIRE(a.net().theta().size() == b.net().theta().size());
    for (Eigen::Index i = 0; i < a.net().theta().size(); ++i)
        REQUIRE(a.net().theta()[i] == b.net().theta()[i]);

    const auto cp = Checkpoint::load(out_dir + "/checkpoint_latest.json");
    CHECK(cp.steps_trained == 64);
    CHECK(cp.dims.hidden == 16);
    CHECK(cp.config_echo.at("note") == "smoke");

    std::ifstream curve(out_dir + "/curve.csv");
    REQUIRE(curve.good());
    std::string header;
    std::getline(curve, header);
    CHECK(header == "step,mean_episode_reward,clip_fraction,approx_kl,entropy");
    std::size_t rows = 0;
    for (std::string line; std::getline(curve, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
    std::filesystem::remove_all(out_dir);
}

TEST_CASE("training rewards improve on a generation-rich tide") {
    // Not a learning benchmark, just a sanity check that the optimizer moves
    // the policy instead of shuffling it: a few updates on short episodes
    // must leave the weights different from initialization.
    PpoConfig p;
    p.env_count = 4;
    p.horizon = 16;
    p.minibatch = 64;
    p.epochs = 2;
    p.max_steps = 256;
    p.seed = 1;
    p.hidden = 16;
    EnvConfig e = desk_env();
    e.episode_days = 0.2;

    PpoTrainer t(p, e);
    const Eigen::VectorXd theta0 = PolicyNet(NetDims{10, 16, 3}, 1).theta();
    t.train();
    CHECK((t.net().theta() - theta0).cwiseAbs().maxCoeff() > 0.0);
    CHECK(t.curve().back().entropy != 0.0);
}

TEST_CASE("config parsing covers the rl knobs") {
    auto kv = KeyValueConfig::from_string(
        "gamma = 0.98\n"
        "horizon = 32\n"
        "env_count = 4\n"
        "physics_per_mdp = 5\n"
        "episode_days = 2\n");
    const EnvConfig e = EnvConfig::from_config(kv);
    CHECK(e.physics_per_mdp == 5);
    CHECK(e.episode_days == 2.0);
    const PpoConfig p = PpoConfig::from_config(kv);
    CHECK(p.gamma == 0.98);
    CHECK(p.horizon == 32);
    CHECK(p.env_count == 4);
    kv.finish();

    auto bad = KeyValueConfig::from_string("gamma = 1.5\n");
    CHECK_THROWS_AS(PpoConfig::from_config(bad), std::invalid_argument);
    auto bad2 = KeyValueConfig::from_string("physics_per_mdp = 0\n");
    CHECK_THROWS_AS(EnvConfig::from_config(bad2), std::invalid_argument);
}
