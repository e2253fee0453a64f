import json

import pytest

from entryexit.core.flows.kuhlmann_muldoon import KuhlmannMuldoonModel
from entryexit.core.flows.solid_body import SolidBodyModel
from entryexit.core.models import BalanceKind
from entryexit.runner import BalanceRunner
from entryexit.utils.constant import BalanceMethod


def test_runner_dummy():
    runner = BalanceRunner(SolidBodyModel(alpha=2, beta=1, b=1), BalanceKind.nile(), span=4.0)
    assert not runner._evaluated
    summary = str(runner)
    assert runner._evaluated
    assert "Exit time: " in summary
    assert runner.prediction.T == pytest.approx(2, abs=1e-9)
    assert "nile:geometric" in summary
    assert runner.prediction.found
    assert len(runner.series) == 2001


def test_runner_write(tmp_path):
    runner = BalanceRunner(KuhlmannMuldoonModel(), BalanceKind.nile(), span=1.0, grid_points=501)
    files = runner.write(tmp_path / "out")
    assert files["series"].read_text().startswith("t,F,dF_dt\n")
    payload = json.loads(files["exit"].read_text())
    assert payload["flow"] == "km"
    assert payload["params"] == {"alpha": 0.1, "eta": 4.74, "z2": 0.4}
    assert payload["T"] == pytest.approx(runner.prediction.T)
    assert "nile_T" not in payload


def test_runner_without_exit():
    runner = BalanceRunner(SolidBodyModel(b=0.0), BalanceKind(BalanceMethod.FASTSLOW), span=4.0)
    assert str(runner) == "solid-body fastslow[0]: no exit found on [0.0, 4.0]"


def test_runner_eigenvalue_cross_check():
    runner = BalanceRunner(SolidBodyModel(alpha=2, beta=1, b=3), BalanceKind(BalanceMethod.EIG), span=6.0)
    with pytest.warns(UserWarning, match="eigenvalue balance is unreliable"):
        summary = str(runner)
    assert "NILE exit time: " in summary
    assert runner.prediction.T < 6


def test_runner_eigenvalue_agrees_under_weak_shear(recwarn):
    # with b*alpha < 2 the eigenvalues are complex and the real part matches the NILE integrand
    runner = BalanceRunner(SolidBodyModel(alpha=1, beta=1, b=1), BalanceKind(BalanceMethod.EIG), span=2.5)
    assert runner.prediction.T == pytest.approx(2, abs=1e-8)
    assert not [w for w in recwarn if issubclass(w.category, UserWarning)]
