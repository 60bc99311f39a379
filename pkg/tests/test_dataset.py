import numpy as np
import pandas as pd
import pytest

from rdlab.dataset import (
    CutoffSide,
    RDDataset,
    RDDesign,
    derive_assignment,
    load_csv,
    score_profile,
)
from rdlab.errors import ColumnError


def _write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_identity(tmp_path):
    path = _write_csv(tmp_path, "x,y\n1,10\n2,20\n3,30\n")
    data = load_csv(path, score="x", outcome="y")
    assert data.row_count == 3
    assert data.n_dropped == 0
    np.testing.assert_array_equal(data.score, [1.0, 2.0, 3.0])


def test_load_csv_drops_missing_score(tmp_path):
    path = _write_csv(tmp_path, "x,y\n1,10\n,20\n3,30\n")
    data = load_csv(path, score="x", outcome="y")
    assert data.row_count == 2
    assert data.n_dropped == 1
    np.testing.assert_array_equal(data.outcome, [10.0, 30.0])


def test_load_csv_missing_covariate_retained(tmp_path):
    path = _write_csv(tmp_path, "x,y,z\n1,10,5\n2,20,\n3,30,7\n")
    data = load_csv(path, score="x", outcome="y", covariates=["z"])
    assert data.row_count == 3
    assert np.isnan(data.covariates["z"][1])


def test_load_csv_non_numeric_reports_row(tmp_path):
    path = _write_csv(tmp_path, "x,y\n1,10\n2,oops\n3,30\n")
    with pytest.raises(ColumnError, match="row 1"):
        load_csv(path, score="x", outcome="y")


def test_load_csv_missing_and_duplicate_columns(tmp_path):
    path = _write_csv(tmp_path, "x,y\n1,10\n")
    with pytest.raises(ColumnError, match="not found"):
        load_csv(path, score="x", outcome="nope")
    dup = _write_csv(tmp_path, "x,y,x\n1,10,2\n", name="dup.csv")
    with pytest.raises(ColumnError, match="appears 2 times"):
        load_csv(dup, score="x", outcome="y")
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv", score="x", outcome="y")


def test_load_csv_round_trip_fixed_point(tmp_path):
    rng = np.random.default_rng(0)
    frame = pd.DataFrame(
        {"x": rng.uniform(0, 10, 50), "y": rng.normal(size=50), "z": rng.normal(size=50)}
    )
    first = _write_csv(tmp_path, frame.to_csv(index=False), name="a.csv")
    data = load_csv(first, score="x", outcome="y", covariates=["z"])
    second = tmp_path / "b.csv"
    data.to_frame().to_csv(second, index=False)
    again = load_csv(second, score="score", outcome="outcome", covariates=["z"])
    np.testing.assert_array_equal(data.score, again.score)
    np.testing.assert_array_equal(data.outcome, again.outcome)
    np.testing.assert_array_equal(data.covariates["z"], again.covariates["z"])


def test_received_must_be_binary():
    with pytest.raises(ValueError, match="0 or 1"):
        RDDataset(score=[1.0, 2.0], outcome=[0.0, 1.0], received=[0.0, 2.0])


def test_derive_assignment_treated_below():
    data = RDDataset(score=[349.0, 350.0, 351.0], outcome=[0.0, 0.0, 0.0])
    design = RDDesign(cutoff=350.0, treated_side=CutoffSide.BELOW)
    np.testing.assert_array_equal(derive_assignment(data, design), [1, 0, 0])


def test_derive_assignment_cutoff_is_treated_at_or_above():
    data = RDDataset(score=[5.0, 5.0, 5.0], outcome=[0.0, 0.0, 0.0])
    design = RDDesign(cutoff=5.0)
    np.testing.assert_array_equal(derive_assignment(data, design), [1, 1, 1])


def test_derive_assignment_complementary_off_cutoff():
    rng = np.random.default_rng(1)
    data = RDDataset(score=rng.normal(size=200), outcome=np.zeros(200))
    above = derive_assignment(data, RDDesign(cutoff=0.3))
    below = derive_assignment(
        data, RDDesign(cutoff=0.3, treated_side=CutoffSide.BELOW)
    )
    off_cutoff = data.score != 0.3
    np.testing.assert_array_equal(above[off_cutoff] + below[off_cutoff], 1)
    assert set(np.unique(above)) <= {0, 1}


def test_derive_assignment_location_invariant():
    rng = np.random.default_rng(2)
    x = rng.normal(size=100)
    data = RDDataset(score=x, outcome=np.zeros(100))
    shifted = RDDataset(score=x + 17.5, outcome=np.zeros(100))
    np.testing.assert_array_equal(
        derive_assignment(data, RDDesign(cutoff=0.2)),
        derive_assignment(shifted, RDDesign(cutoff=17.7)),
    )


def test_score_profile_counts():
    data = RDDataset(score=[1.0, 1.0, 2.0, 3.0], outcome=np.zeros(4))
    profile = score_profile(data, RDDesign(cutoff=2.0))
    assert (profile.K, profile.K_minus, profile.K_plus) == (3, 1, 2)
    assert profile.max_multiplicity == 2
    assert profile.K == profile.K_minus + profile.K_plus
    assert profile.row_count == 4


def test_score_profile_weekly_mass_points():
    weeks = np.repeat(np.arange(-25, 25), 7).astype(float)
    data = RDDataset(score=weeks, outcome=np.zeros(weeks.size))
    profile = score_profile(data, RDDesign(cutoff=0.0))
    assert profile.K == 50
    assert profile.max_multiplicity == 7


def test_score_profile_all_distinct():
    x = np.arange(10, dtype=float)
    profile = score_profile(RDDataset(score=x, outcome=x), RDDesign(cutoff=4.5))
    assert profile.K == 10
    assert profile.max_multiplicity == 1


def test_dataset_arrays_immutable(smooth_data):
    with pytest.raises(ValueError):
        smooth_data.score[0] = 99.0
