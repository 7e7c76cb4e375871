import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfsda.errors import DataError, StructuralError
from lfsda.pv import PvProfileSet, generate_pv_synthetic, load_pv_csv, save_pv_csv


def write_rows(path, rows):
    path.write_text("\n".join(",".join(str(c) for c in r) for r in rows) + "\n")
    return path


def grid_rows(T, N, value=0.5):
    return [["slot"] + [f"agent_{j + 1}" for j in range(N)]] + \
           [[t + 1] + [value] * N for t in range(T)]


def test_well_formed_file(tmp_path):
    pv = load_pv_csv(write_rows(tmp_path / "pv.csv", grid_rows(24, 20)), T=24, N=20)
    assert (pv.T, pv.N) == (24, 20)
    np.testing.assert_array_equal(pv.agent(3), 0.5)


def test_negative_cell_is_located(tmp_path):
    rows = grid_rows(24, 20)
    rows[6][4] = -0.1      # slot 6, agent_4
    with pytest.raises(DataError) as info:
        load_pv_csv(write_rows(tmp_path / "pv.csv", rows))
    assert info.value.row == 7
    assert info.value.column == "agent_4"
    assert info.value.exit_code == 3


def test_short_file_rejected(tmp_path):
    with pytest.raises(DataError, match="23 data rows"):
        load_pv_csv(write_rows(tmp_path / "pv.csv", grid_rows(23, 20)), T=24, N=20)


def test_ragged_row_rejected(tmp_path):
    rows = grid_rows(4, 3)
    rows[2] = rows[2][:-1]
    with pytest.raises(DataError) as info:
        load_pv_csv(write_rows(tmp_path / "pv.csv", rows))
    assert info.value.row == 3


def test_non_numeric_and_bad_header(tmp_path):
    rows = grid_rows(2, 2)
    rows[1][1] = "sunny"
    with pytest.raises(DataError, match="not a number"):
        load_pv_csv(write_rows(tmp_path / "a.csv", rows))
    rows = grid_rows(2, 2)
    rows[0][2] = "agent_3"
    with pytest.raises(DataError):
        load_pv_csv(write_rows(tmp_path / "b.csv", rows))


def test_round_trip(tmp_path):
    pv = generate_pv_synthetic(4, N=5, T=24)
    save_pv_csv(pv, tmp_path / "pv.csv")
    assert load_pv_csv(tmp_path / "pv.csv") == pv


def test_synthetic_is_deterministic():
    assert generate_pv_synthetic(9, 20, 24) == generate_pv_synthetic(9, 20, 24)
    assert generate_pv_synthetic(9, 20, 24) != generate_pv_synthetic(10, 20, 24)


def test_zero_spread_gives_identical_agents():
    pv = generate_pv_synthetic(1, 6, 24, peak_spread=0.0)
    for i in range(1, 6):
        np.testing.assert_array_equal(pv.agent(i), pv.agent(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 30))
def test_synthetic_shape(seed, N):
    pv = generate_pv_synthetic(seed, N, 24)
    assert pv.matrix.min() >= 0.0
    np.testing.assert_array_equal(pv.matrix[:6], 0.0)
    np.testing.assert_array_equal(pv.matrix[19:], 0.0)
    assert np.all(pv.matrix.argmax(axis=0) == 12)


def test_invalid_sizes():
    with pytest.raises(StructuralError):
        generate_pv_synthetic(0, 0, 24)
    with pytest.raises(StructuralError):
        PvProfileSet(np.ones(3))
    with pytest.raises(DataError):
        PvProfileSet(-np.ones((2, 2)))
