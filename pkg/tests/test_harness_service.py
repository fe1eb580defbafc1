import numpy as np
import pytest

from app.core.exceptions import RunAbortedError
from app.services.harness_service import run_distributed
from app.services.simulation_service import run_mil
from tests.conftest import make_scenario

pytestmark = [pytest.mark.slow, pytest.mark.distributed]


def scenario(duration: float, noise: bool = False):
    return make_scenario(
        name="harness",
        mode="distributed",
        seed=3,
        noise_enabled=noise,
        timing={"duration": duration, "accelerated": True},
        faults={"target": "command", "events": [{"time": 0.0, "wheel": 3, "scale": 0.5}]},
    )


def test_distributed_run_matches_mil(tmp_path):
    cfg = scenario(30.0, noise=True)
    distributed = run_distributed(cfg, work_dir=tmp_path)
    mil = run_mil(cfg)

    assert len(distributed.log) == len(mil.log) == 301
    assert np.allclose(distributed.log.t, mil.log.t)
    gap = np.max(np.abs(distributed.log.group("theta_hat") - mil.log.group("theta_hat")))
    assert gap <= 0.02
    summary = distributed.summary
    assert summary["mode"] == "distributed"
    assert summary["broker_crc_errors"] == 0
    assert all(report["crc_errors"] == 0 for report in summary["bus"].values())
    assert summary["controller_exec"]["count"] == 301
    for name in ("sim", "controller", "rw"):
        assert (tmp_path / f"{name}.csv").exists()


def test_killed_wheel_node_halts_the_run(tmp_path):
    cfg = scenario(20.0)

    def kill_rw(tick, t, processes):
        if tick == 500:
            processes["rw"].kill()

    with pytest.raises(RunAbortedError, match="rw"):
        run_distributed(cfg, work_dir=tmp_path, tick_hook=kill_rw)
