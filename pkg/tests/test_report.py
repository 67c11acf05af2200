import math

import pytest

from graphdistill.report import (EPOCH_FIELDS, RESULT_FIELDS, ResultRow,
                                 mean_std, render_csv, summarize,
                                 write_epochs_csv, write_results_csv,
                                 write_summary_csv, write_timings_csv)
from graphdistill.train import EpochReport


def make_row(seed=0, best_test=0.8, ens_test=0.82, method="oad"):
    return ResultRow(method=method, dataset="toy", arch="gcn", seed=seed,
                     metric="accuracy", best_student=1, best_student_val=0.79,
                     best_student_test=best_test, ensemble_val=0.81,
                     ensemble_test=ens_test, best_epoch=7, best_epoch_val=0.8,
                     student_params=100, disc_params=10, teacher_params=0,
                     group_params=440)


def make_report(epoch=0, phase="online"):
    return EpochReport(epoch=epoch, phase=phase, ce=[0.5, 0.25],
                       l_g=[0.1, 0.2], l_b=[0.0, 0.125],
                       total=[0.6, 0.575], val=[0.7, 0.75],
                       ensemble_val=0.775, wall_ms=12.5)


def test_render_csv_has_versioned_schema_line():
    text = render_csv("results", ["a", "b"], [[1, 0.5]])
    lines = text.splitlines()
    assert lines[0] == "# graphdistill results v1"
    assert lines[1] == "a,b"
    assert lines[2] == "1,0.5"


def test_render_csv_floats_roundtrip_exactly():
    value = 1.0 / 3.0
    text = render_csv("x", ["v"], [[value]])
    assert float(text.splitlines()[2]) == value


def test_mean_std_matches_hand_computation():
    mean, std = mean_std([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert std == pytest.approx(1.0)  # sample std with ddof=1
    mean, std = mean_std([4.0, 8.0])
    assert mean == 6.0
    assert std == pytest.approx(math.sqrt(8.0))


def test_mean_std_single_value_has_no_spread():
    mean, std = mean_std([0.5])
    assert mean == 0.5
    assert std is None
    with pytest.raises(ValueError):
        mean_std([])


def test_summarize_groups_and_aggregates():
    rows = [make_row(seed=0, best_test=0.8, ens_test=0.9),
            make_row(seed=1, best_test=0.9, ens_test=0.7),
            make_row(seed=0, best_test=0.5, method="single")]
    out = summarize(rows)
    assert len(out) == 2
    by_method = {r[0]: r for r in out}
    oad = by_method["oad"]
    assert oad[4] == 2  # repeats
    assert oad[5] == pytest.approx(0.85)
    assert oad[6] == pytest.approx(math.sqrt(0.005))
    single = by_method["single"]
    assert single[4] == 1
    assert single[6] == ""  # no std from one repeat
    assert single[8] == ""


def test_results_csv_written_atomically(tmp_path):
    path = tmp_path / "results.csv"
    write_results_csv(str(path), [make_row()])
    lines = path.read_text().splitlines()
    assert lines[1].split(",") == RESULT_FIELDS
    assert lines[2].startswith("oad,toy,gcn,0,accuracy,1,")
    assert not list(tmp_path.glob("*.tmp"))


def test_summary_csv_empty_std_cells(tmp_path):
    path = tmp_path / "summary.csv"
    write_summary_csv(str(path), [make_row()])
    row = path.read_text().splitlines()[2].split(",")
    assert row[4] == "1"
    assert row[6] == "" and row[8] == ""


def test_epochs_csv_one_row_per_student_plus_ensemble(tmp_path):
    path = tmp_path / "epochs.csv"
    write_epochs_csv(str(path), {3: [make_report(0), make_report(1)]})
    lines = path.read_text().splitlines()
    assert lines[1].split(",") == EPOCH_FIELDS
    body = lines[2:]
    assert len(body) == 2 * 3  # two epochs x (two students + ensemble)
    assert body[0] == "3,0,online,0,0.5,0.1,0.0,0.6,0.7"
    assert body[2] == "3,0,online,ensemble,,,,,0.775"


def test_timings_kept_out_of_result_files(tmp_path):
    write_timings_csv(str(tmp_path / "timings.csv"),
                      {0: [make_report()]}, {0: 77.0})
    lines = (tmp_path / "timings.csv").read_text().splitlines()
    assert lines[2] == "0,epoch,0,12.5"
    assert lines[3] == "0,run,,77.0"
    # and the deterministic files never mention wall clock fields
    assert "wall" not in " ".join(RESULT_FIELDS + EPOCH_FIELDS)


def test_same_rows_render_identical_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rows = [make_row(seed=s) for s in range(3)]
    write_results_csv(str(a), rows)
    write_results_csv(str(b), rows)
    assert a.read_bytes() == b.read_bytes()
