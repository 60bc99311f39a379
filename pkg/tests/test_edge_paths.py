"""Configuration corners: alternative orders, optimized b, serialization."""

import json

import numpy as np
import pytest

from rdlab.cli import main
from rdlab.continuity import EstimationSpec, estimate_sharp
from rdlab.dataset import RDDataset, RDDesign, load_csv
from rdlab.errors import EmptyWindow
from rdlab.locrand import fisher_ci, make_window
from rdlab.reporting import to_jsonable
from rdlab.wls import Kernel, VarianceMethod


def _curved(rng, n=2500):
    x = rng.uniform(-1, 1, n)
    y = 0.4 * (x >= 0) + 0.5 * x + 1.5 * x**2 - 0.8 * x**3 + rng.normal(0, 0.3, n)
    return RDDataset(score=x, outcome=y)


def test_higher_bias_order_runs_and_corrects():
    rng = np.random.default_rng(41)
    data = _curved(rng)
    design = RDDesign(cutoff=0.0)
    res = estimate_sharp(data, design, EstimationSpec(h=0.7, q=3))
    assert res.q == 3
    assert abs(res.point - 0.4) < 0.15
    base = estimate_sharp(data, design, EstimationSpec(h=0.7))
    assert res.bias_correction != base.bias_correction


def test_quadratic_order_pipeline():
    rng = np.random.default_rng(42)
    data = _curved(rng)
    res = estimate_sharp(data, RDDesign(cutoff=0.0), EstimationSpec(p=2))
    assert res.p == 2 and res.q == 3
    assert abs(res.point - 0.4) < 0.2


def test_optimized_bias_bandwidth_flows_through():
    rng = np.random.default_rng(43)
    data = _curved(rng)
    res = estimate_sharp(data, RDDesign(cutoff=0.0), EstimationSpec(optimize_b=True))
    assert res.b >= res.h


def test_plug_in_residual_variance_full_pipeline():
    rng = np.random.default_rng(44)
    data = _curved(rng)
    res = estimate_sharp(
        data,
        RDDesign(cutoff=0.0),
        EstimationSpec(h=0.6, variance=VarianceMethod.PLUG_IN_RESIDUAL),
    )
    assert res.variance_conventional > 0
    assert res.variance_rbc_extra >= 0


def test_epanechnikov_end_to_end():
    rng = np.random.default_rng(45)
    data = _curved(rng)
    res = estimate_sharp(
        data, RDDesign(cutoff=0.0), EstimationSpec(kernel=Kernel.EPANECHNIKOV)
    )
    assert abs(res.point - 0.4) < 0.2


def test_fisher_ci_all_rejected_returns_none():
    # A huge, noiseless jump: every grid value far from it is rejected.
    below = np.zeros(8)
    above = np.full(8, 50.0)
    x = np.concatenate([np.linspace(-1, -0.1, 8), np.linspace(0.1, 1, 8)])
    data = RDDataset(score=x, outcome=np.concatenate([below, above]))
    design = RDDesign(cutoff=0.0)
    window = make_window(data, design, -1, 1)
    assert fisher_ci(data, design, window, [-1.0, 0.0, 1.0], seed=1) is None


def test_nan_means_serialize_as_null(tmp_path):
    from rdlab.locrand import LocRandEstimate
    from rdlab.continuity import Estimand

    row = LocRandEstimate(
        estimand=Estimand.FUZZY_RATIO,
        point=0.5,
        se=0.1,
        ci=(0.3, 0.7),
        p_value=0.01,
        mean_below=float("nan"),
        mean_above=float("nan"),
        n_minus=5,
        n_plus=5,
        window=(-1.0, 1.0),
    )
    payload = to_jsonable(row)
    text = json.dumps(payload)
    assert json.loads(text)["mean_below"] is None


def test_empty_csv_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("x,y\n")
    with pytest.raises(ValueError, match="at least one row"):
        load_csv(path, score="x", outcome="y")


def test_binomial_empty_window_error_type():
    data = RDDataset(score=np.array([1.0, 2.0]), outcome=np.zeros(2))
    from rdlab.falsify import binomial_density_test

    with pytest.raises(EmptyWindow):
        binomial_density_test(data, RDDesign(cutoff=1.5), window=(5.0, 6.0))


@pytest.fixture
def cli_csv(tmp_path):
    import pandas as pd

    rng = np.random.default_rng(46)
    n = 900
    x = rng.uniform(-10, 10, n)
    y = 0.5 * (x >= 0) + 0.1 * x + rng.normal(0, 0.4, n)
    z = rng.normal(size=n)
    path = tmp_path / "cli.csv"
    pd.DataFrame({"x": x, "y": y, "z": z}).to_csv(path, index=False)
    return path


def test_cli_estimate_with_explicit_orders(cli_csv, capsys):
    code = main(
        ["estimate", str(cli_csv), "--score", "x", "--outcome", "y",
         "--cutoff", "0", "--kernel", "epa", "--p", "2", "--q", "4",
         "--variance", "residual", "--h", "4.0", "--b", "5.0"]
    )
    assert code == 0
    assert "RD Effect" in capsys.readouterr().out


def test_cli_randinf_selects_window_from_covariates(cli_csv, capsys, tmp_path):
    out = tmp_path / "r.json"
    code = main(
        ["randinf", str(cli_csv), "--score", "x", "--outcome", "y",
         "--cutoff", "0", "--covariates", "z", "--seed", "3", "--reps", "400",
         "--wstep", "0.5", "--out", str(out)]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["trace"] is not None
    assert payload["window"]["n_minus"] >= 10


def test_cli_tsls_without_received_exits_2(cli_csv, capsys):
    code = main(
        ["randinf", str(cli_csv), "--score", "x", "--outcome", "y",
         "--cutoff", "0", "--wl", "-2", "--wr", "2", "--statistic", "tsls"]
    )
    assert code == 2
    assert "received" in capsys.readouterr().err
