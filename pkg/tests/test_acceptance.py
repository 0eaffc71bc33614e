"""Acceptance criteria 1-10.

Each test records a one-line PASS/FAIL verdict (see ``record_criterion``)
that is echoed in the pytest terminal summary. Criteria 5-7 train real
policies on the 8-joint chain and dominate the runtime (tens of minutes on
one core); their runs are cached per session so criterion 6 reuses the
unscaled multi-critic APEX runs of criterion 5.
"""

import math
import time

import numpy as np
import pytest

from apex_rl.cli import gait_phase, sweep_cells
from apex_rl.config import RunConfig, config_from_dict
from apex_rl.dynamics import ChainState, default_chain
from apex_rl.evaluation import eval_rollout, nearest_gait, start_state
from apex_rl.gradcheck import LQToy, unbiasedness_grid, variance_report
from apex_rl.policy import CriticPair, GaussianPolicy, actor_obs_dim, get_variant
from apex_rl.ppo import combine_advantages, compute_gae, read_metrics, train
from apex_rl.ppo.update import actor_loss_and_grads, value_loss_and_grads
from apex_rl.priors import PriorConfig, TrainingClock, decay_coeff
from apex_rl.reference import make_gait
from apex_rl.rewards import RewardConfig, style_terms, task_terms, tracking_kernel
from conftest import record_criterion, tiny_config
from test_policy import fd_check, small_net

SEEDS = (0, 1, 2)
GAITS4 = ("pace", "pronk", "trot", "canter")


@pytest.fixture(scope="module")
def run_cache(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_runs")
    cache = {}

    def get(key, cfg, seed):
        k = (key, seed)
        if k not in cache:
            path = root / f"{key}_seed{seed}.csv"
            res = train(cfg, seed, path)
            cache[k] = (read_metrics(path), res)
        return cache[k]

    return get


def chain_config(variant, gaits=("trot",), **over) -> RunConfig:
    d = RunConfig(variant=variant, gaits=gaits).to_dict()
    for section, values in over.items():
        d[section].update(values)
    return config_from_dict(d)


# --- 1 ----------------------------------------------------------------------------


def test_criterion_01_unbiasedness_grid():
    t = time.perf_counter()
    cells = unbiasedness_grid(100_000, np.random.default_rng(0), sigma=1.0)
    dt = time.perf_counter() - t
    ok_cells = sum(c.within for c in cells)
    worst = max(abs(c.z) for c in cells)
    ok = len(cells) == 27 and ok_cells >= 26 and dt < 30.0
    record_criterion(1, ok, f"{ok_cells}/27 cells within 4 se (max |z| {worst:.2f}), {dt:.1f}s")
    assert ok


# --- 2 ----------------------------------------------------------------------------


def test_criterion_02_variance_reduction():
    t = time.perf_counter()
    rows = variance_report(LQToy(goal=1.0, beta=1.0, theta=0.0, sigma=1.0), 1_000_000, [0.0, 1.0],
                           np.random.default_rng(1))
    dt = time.perf_counter() - t
    v0, v1 = rows[0].variance, rows[1].variance
    ok = v1 < v0 and dt < 60.0
    record_criterion(2, ok, f"var(c=1)={v1:.3f} < var(c=0)={v0:.3f}, {dt:.1f}s")
    assert ok


# --- 3 ----------------------------------------------------------------------------


def test_criterion_03_decay_consistency(tmp_path):
    cfg = PriorConfig(lam=0.99, k=100.0)
    analytic = decay_coeff(41_800, cfg)
    # logged value from an actual 1000-iteration run with a 42-step horizon; tiny nets keep it cheap
    run = tiny_config("APEX", iterations=1000, n_envs=2, horizon=42, minibatches=1, epochs=1).to_dict()
    run["env"]["eval_every"] = 1000
    run["network"]["hidden"] = [8, 8]
    run = config_from_dict(run)
    train(run, 0, tmp_path / "m.csv")
    last = read_metrics(tmp_path / "m.csv")[-1]
    logged = last["decay_coeff"]
    ok = (last["iteration"] == 1000 and logged < 0.015 and abs(analytic - 0.99**418) < 1e-6
          and abs(analytic - 0.0150) < 1e-4 and logged == decay_coeff(TrainingClock(1000 * 42), cfg))
    record_criterion(3, ok, f"logged c at iteration 1000 = {logged:.6f}; 0.99^418 = {analytic:.6f}")
    assert ok


# --- 4 ----------------------------------------------------------------------------


def test_criterion_04_kernel_exactness():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 9))
        e = rng.normal(scale=0.3, size=dim)
        sigma = float(rng.uniform(0.01, 5.0))
        expected = math.exp(-float(np.sum(e * e)) / sigma)
        worst = max(worst, abs(tracking_kernel(e, sigma) - expected))
    cfg = RewardConfig()
    q = np.linspace(-0.3, 0.3, 8)
    tip = np.array([0.2, -0.6])
    style = style_terms(q, q, tip, tip, cfg)
    task = task_terms(0.3, 0.0, -0.6, np.zeros(8), np.zeros(8), np.zeros(8), 0.3, 0.0, -0.6, cfg)
    ok = worst <= 1e-12 and style == 4.5 and task == 1.9
    record_criterion(4, ok, f"max kernel error {worst:.1e}; style sum {float(style)!r}, task sum {float(task)!r}")
    assert ok


# --- 8 ----------------------------------------------------------------------------


def test_criterion_08_deployment_independence():
    apex = get_variant("APEX")
    chain = default_chain(8)
    rewards = RewardConfig()
    trot = make_gait("trot", 8, chain)
    pace = type(trot).from_dict({**make_gait("pace", 8, chain).to_dict(), "velocity_cmd": trot.velocity_cmd})
    seen = {"trot": [], "pace": []}
    start, t0 = start_state(apex, trot, 8)
    decays = []
    for gait in (trot, pace):
        trace = eval_rollout(lambda o, k=gait.name: seen[k].append(o.copy()) or np.zeros(8), gait, 0.5, apex,
                             chain, rewards, 50, start, t0)
        decays.append(trace.decay)
    # 3n + 2 entries: q, qdot, previous action, velocity command, selector; nothing else
    shape_ok = all(o.shape == (3 * 8 + 2,) == (actor_obs_dim(8, apex),) for o in seen["trot"])
    blind = all(np.array_equal(a, b) for a, b in zip(seen["trot"], seen["pace"]))
    zero = all(np.all(d == 0.0) for d in decays)
    ok = shape_ok and blind and zero
    record_criterion(8, ok, f"obs dim {seen['trot'][0].size} (no ref/phase), reference-blind={blind}, "
                            f"eval decay all zero={zero}")
    assert ok


# --- 9 ----------------------------------------------------------------------------


def test_criterion_09_determinism(tmp_path):
    cfg = tiny_config("APEX_Full", iterations=3)
    train(cfg, 7, tmp_path / "a.csv")
    train(cfg, 7, tmp_path / "b.csv")
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    ok = a == b and len(a) > 0
    record_criterion(9, ok, f"two runs, same config+seed: byte-identical metrics ({len(a)} bytes)")
    assert ok


# --- 10 ---------------------------------------------------------------------------


def test_criterion_10_numerical_plumbing():
    rng = np.random.default_rng(10)
    failures = []

    def check(name, params, grads, loss):
        try:
            fd_check(params, grads, loss, rtol=1e-4)
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")

    net = small_net(rng)
    x, seed = rng.normal(size=(4, 5)), rng.normal(size=(4, 3))
    check("mlp", net.parameters(), net.gradients(x, seed), lambda: float(np.sum(seed * net.forward(x))))

    policy = GaussianPolicy(small_net(rng, (5, 8, 3)), rng.normal(scale=0.3, size=3))
    obs = rng.normal(size=(16, 5))
    acts = policy.mean(obs) + rng.normal(size=(16, 3))
    old = policy.log_prob(obs, acts) + rng.normal(scale=0.1, size=16)
    adv = rng.normal(size=16)
    g, _ = actor_loss_and_grads(policy, obs, acts, old, adv, 0.2, 0.01)
    check("actor", policy.parameters(), g,
          lambda: actor_loss_and_grads(policy, obs, acts, old, adv, 0.2, 0.01)[1]["loss"])

    critics = CriticPair({"style": small_net(rng, (6, 8, 1)), "task": small_net(rng, (6, 8, 1))}, 3.0)
    cobs, ret = rng.normal(size=(10, 6)), rng.normal(size=10)
    for s in ("style", "task"):
        g, _ = value_loss_and_grads(critics, s, cobs, ret)
        check(f"critic_{s}", critics.nets[s].parameters(), g,
              lambda s=s: value_loss_and_grads(critics, s, cobs, ret)[1])

    gae_exact = 0
    for _ in range(5):
        r, v, d = rng.normal(size=10), rng.normal(size=10), rng.random(10) < 0.2
        boot, gamma, lam = float(rng.normal()), 0.99, 0.95
        a, _ = compute_gae(r, v, boot, d, gamma, lam)
        hand, next_v, next_a = [0.0] * 10, boot, 0.0
        for t in reversed(range(10)):
            nd = 1.0 - float(d[t])
            delta = r[t] + gamma * next_v * nd - v[t]
            next_a = delta + gamma * lam * nd * next_a
            hand[t], next_v = next_a, v[t]
        gae_exact += a.tolist() == hand

    ok = not failures and gae_exact == 5
    record_criterion(10, ok, f"FD gradient checks failed: {len(failures)}; GAE exact on {gae_exact}/5 sequences")
    assert ok, failures


# --- 5 ----------------------------------------------------------------------------


def _median_curve(runs, key="rmse_q"):
    return np.median(np.array([[r[key] for r in rows] for rows in runs]), axis=0)


@pytest.mark.slow
def test_criterion_05_sample_efficiency(run_cache):
    apex = [run_cache("apex_multi", chain_config("APEX"), s)[0] for s in SEEDS]
    dm = [run_cache("dm_nia", chain_config("DM_NIA"), s)[0] for s in SEEDS]
    a_final = float(np.median([rows[-1]["rmse_q"] for rows in apex]))
    d_final = float(np.median([rows[-1]["rmse_q"] for rows in dm]))
    curve = _median_curve(apex)
    iters = [r["iteration"] for r in apex[0]]
    hit = next((int(i) for i, v in zip(iters, curve) if v <= d_final), None)
    half = iters[-1] / 2
    ok = a_final < d_final and hit is not None and hit <= half
    record_criterion(5, ok, f"median final q RMSE APEX {a_final:.4f} vs DM_NIA {d_final:.4f}; "
                            f"APEX reaches DM_NIA final at iteration {hit} (limit {half:.0f})")
    assert ok


# --- 6 ----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_reward_robustness(run_cache):
    base_multi = chain_config("APEX")
    base_single = base_multi.with_ppo(critic_mode="single")
    scaled = {mode: cell for _, _, mode, cell in sweep_cells(base_multi, [10.0], [30.0], ["multi", "single"])}

    def degradation(base_key, base_cfg, scaled_key, scaled_cfg):
        out = []
        for s in SEEDS:
            b = run_cache(base_key, base_cfg, s)[0][-1]["rmse_q"]
            x = run_cache(scaled_key, scaled_cfg, s)[0][-1]["rmse_q"]
            out.append((x - b) / b)
        return float(np.median(out))

    multi = degradation("apex_multi", base_multi, "apex_multi_s10_w30", scaled["multi"])
    single = degradation("apex_single", base_single, "apex_single_s10_w30", scaled["single"])

    rng = np.random.default_rng(6)
    a, b = rng.normal(size=500), rng.normal(size=500) * 40
    invariant = all(
        np.array_equal(combine_advantages(a, b), combine_advantages(k * a, b))
        and np.array_equal(combine_advantages(a, b), combine_advantages(a, k * b))
        for k in (1e-6, 0.3, 7.0, 30.0, 1e6)
    )
    ok = multi <= single and invariant
    record_criterion(6, ok, f"median relative q-RMSE degradation at (sigma x10, weight x30): multi {multi:+.3f} "
                            f"vs single {single:+.3f}; combine bitwise scale-invariant={invariant}")
    assert ok


# --- 7 ----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_multi_gait_selector(run_cache):
    cfg = chain_config("APEX", gaits=GAITS4, ppo={"iterations": 800}, env={"eval_every": 100})
    names = list(GAITS4)
    per_seed = []
    for s in SEEDS:
        _, res = run_cache("apex_4gait", cfg, s)
        recovered = [nearest_gait(gait_phase(res.policy, cfg, m)[0], names) for m in range(4)]
        per_seed.append((sum(r == n for r, n in zip(recovered, names)), recovered))
    counts = sorted(c for c, _ in per_seed)
    median = counts[1]
    ok = median == 4
    detail = "; ".join(f"seed {s}: {c}/4 {rec}" for s, (c, rec) in zip(SEEDS, per_seed))
    record_criterion(7, ok, f"median {median}/4 correct ({detail})")
    assert ok
