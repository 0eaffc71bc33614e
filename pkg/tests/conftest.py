import numpy as np
import pytest

from apex_rl.config import RunConfig
from apex_rl.dynamics import ChainParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_pendulum(damping=0.1, gravity=9.81, dt=0.02, substeps=4):
    return ChainParams(1, [1.0], [1.0], [damping], [1.0], gravity=gravity, dt=dt, substeps=substeps)


def tiny_config(variant="APEX", **ppo) -> RunConfig:
    """Small, fast run config for plumbing tests (4 joints, tiny nets)."""
    base = {"iterations": 2, "n_envs": 4, "horizon": 8, "minibatches": 2, "epochs": 2}
    base.update(ppo)
    d = RunConfig(variant=variant).to_dict()
    d["chain"] = {"n_joints": 4}
    d["ppo"].update(base)
    d["network"]["hidden"] = [16, 16]
    d["env"]["eval_steps"] = 20
    from apex_rl.config import config_from_dict

    return config_from_dict(d)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
