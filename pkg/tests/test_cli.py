"""End-to-end command-line pipeline."""

import json
import shutil

import pytest

from fcurve.cli import main
from fcurve.ingest import Sex, panel_from_csv
from fcurve.report import read_labeled_csv
from fcurve.smooth import FunctionalDataset

import synthdata

YEARS = range(1990, 1996)


def _write_tables(data_dir):
    data_dir.mkdir(parents=True, exist_ok=True)
    for country, shift in (("AAA", 0.0), ("BBB", 4.0)):
        for sex in (Sex.MALE, Sex.FEMALE):
            text = synthdata.life_table_text(YEARS, sex=sex, seed=7,
                                             shift=shift, country=country)
            (data_dir / f"{country}.{sex.table_name}.txt").write_text(
                text, encoding="utf-8")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run ingest and smooth once; later tests reuse the dataset."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "hmd"
    _write_tables(data)

    ingest_dir = root / "ingest"
    code = main(["ingest", "--data-dir", str(data), "--countries", "BBB,AAA",
                 "--years", "1990:1995", "--sex", "both",
                 "--out", str(ingest_dir)])
    assert code == 0

    smooth_dir = root / "smooth"
    code = main(["smooth", "--input", str(ingest_dir / "panel.csv"),
                 "--basis", "nonuniform31",
                 "--lambda-grid", "1e-5:1e-1:5", "--out", str(smooth_dir)])
    assert code == 0
    return {"root": root, "data": data, "ingest": ingest_dir,
            "smooth": smooth_dir, "dataset": smooth_dir / "dataset.bin"}


def test_ingest_outputs(pipeline):
    out = pipeline["ingest"]
    assert (out / "ingest_manifest.json").is_file()
    panel = panel_from_csv(out / "panel.csv")
    assert len(panel) == 2 * 6 * 2
    assert panel.countries == ("AAA", "BBB")
    assert panel.years == tuple(YEARS)
    first = (out / "panel.csv").read_text(encoding="utf-8").splitlines()[0]
    assert first.startswith("# run: ")


def test_smooth_outputs(pipeline):
    out = pipeline["smooth"]
    assert (out / "smooth_manifest.json").is_file()
    dataset = FunctionalDataset.load(pipeline["dataset"])
    assert len(dataset) == 24
    assert dataset.basis.dimension == 33
    assert all(1e-5 <= lam <= 1e-1 for lam in dataset.lambdas)


def test_fpca_command(pipeline, tmp_path):
    code = main(["fpca", "--input", str(pipeline["dataset"]), "--by-sex",
                 "--components", "3", "--out", str(tmp_path)])
    assert code == 0
    for tag in ("female", "male"):
        header, rows = read_labeled_csv(tmp_path / f"scores_{tag}.csv")
        assert header == ["country", "year", "sex",
                          "score_1", "score_2", "score_3"]
        assert len(rows) == 12
        assert {r[2] for r in rows} == {tag}
        header, rows = read_labeled_csv(tmp_path / f"variance_{tag}.csv")
        assert header == ["component", "eigenvalue", "variance_ratio"]
        assert (tmp_path / f"effect_{tag}_1.svg").is_file()
        assert (tmp_path / f"effect_{tag}_2.svg").is_file()
        assert (tmp_path / f"trajectories_{tag}.svg").is_file()
    assert (tmp_path / "fpca_manifest.json").is_file()


def test_fpca_pooled_run_uses_all_tag(pipeline, tmp_path):
    code = main(["fpca", "--input", str(pipeline["dataset"]),
                 "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_labeled_csv(tmp_path / "scores_all.csv")
    assert len(rows) == 24
    assert header[3:] == ["score_1", "score_2", "score_3", "score_4",
                          "score_5"]


def test_cluster_twostage_command(pipeline, tmp_path):
    code = main(["cluster", "--input", str(pipeline["dataset"]),
                 "--K", "2", "--sex", "female", "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_labeled_csv(tmp_path / "partition.csv")
    assert header == ["country", "year", "sex", "cluster"]
    assert len(rows) == 12
    assert {r[3] for r in rows} <= {"1", "2"}
    assert {r[2] for r in rows} == {"female"}
    assert (tmp_path / "composition.csv").is_file()
    assert (tmp_path / "composition.svg").is_file()
    assert (tmp_path / "cluster_means.svg").is_file()
    assert (tmp_path / "cluster_manifest.json").is_file()


def test_cluster_distance_command(pipeline, tmp_path):
    code = main(["cluster", "--input", str(pipeline["dataset"]),
                 "--method", "distance", "--q", "3", "--K", "2",
                 "--linkage", "average", "--sex", "male",
                 "--out", str(tmp_path)])
    assert code == 0
    _, rows = read_labeled_csv(tmp_path / "partition.csv")
    assert {r[2] for r in rows} == {"male"}


def test_distance_requires_component_count(pipeline, tmp_path, capsys):
    code = main(["cluster", "--input", str(pipeline["dataset"]),
                 "--method", "distance", "--K", "2", "--sex", "male",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "needs --q" in capsys.readouterr().err


def test_mixed_sexes_need_an_explicit_choice(pipeline, tmp_path, capsys):
    code = main(["cluster", "--input", str(pipeline["dataset"]),
                 "--K", "2", "--out", str(tmp_path)])
    assert code == 2
    assert "mixes sexes" in capsys.readouterr().err


def test_flm_command(pipeline, tmp_path):
    code = main(["flm", "--input", str(pipeline["dataset"]), "--K", "2",
                 "--sex", "female", "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_labeled_csv(tmp_path / "bic.csv")
    assert header == ["n_clusters", "variant", "seed", "loglik",
                      "n_parameters", "bic"]
    assert len(rows) == 1
    model = json.loads((tmp_path / "model.json").read_text(encoding="utf-8"))
    assert model["n_clusters"] == 2
    assert model["variant"] == "akj-b-qk-dk"
    assert len(model["dims"]) == 2
    assert len(model["signal_variances_x1e4"]) == 2
    assert len(model["explained_within"]) == 2
    assert model["run"]
    for k in range(1, model["n_clusters"] + 1):
        assert (tmp_path / f"effect_cluster{k}.svg").is_file()
    assert (tmp_path / "partition.csv").is_file()
    assert (tmp_path / "flm_manifest.json").is_file()


def test_flm_count_sweep(pipeline, tmp_path):
    code = main(["flm", "--input", str(pipeline["dataset"]),
                 "--K", "2..3", "--variant", "both", "--sex", "male",
                 "--out", str(tmp_path)])
    assert code == 0
    _, rows = read_labeled_csv(tmp_path / "bic.csv")
    assert [(r[0], r[1]) for r in rows] == [
        ("2", "akj-b-qk-dk"), ("2", "akj-bk-qk-dk"),
        ("3", "akj-b-qk-dk"), ("3", "akj-bk-qk-dk")]


def test_report_replays_byte_identically(pipeline, tmp_path):
    first = tmp_path / "first"
    code = main(["cluster", "--input", str(pipeline["dataset"]),
                 "--K", "2", "--sex", "female", "--out", str(first)])
    assert code == 0
    replay = tmp_path / "replay"
    code = main(["report", "--run", str(first / "cluster_manifest.json"),
                 "--out", str(replay)])
    assert code == 0
    for name in ("partition.csv", "composition.csv", "composition.svg",
                 "cluster_means.svg"):
        assert (replay / name).read_bytes() == (first / name).read_bytes()


def test_report_rejects_changed_input(pipeline, tmp_path, capsys):
    copy = tmp_path / "dataset.bin"
    shutil.copyfile(pipeline["dataset"], copy)
    first = tmp_path / "first"
    code = main(["cluster", "--input", str(copy), "--K", "2",
                 "--sex", "male", "--out", str(first)])
    assert code == 0
    with open(copy, "ab") as fh:
        fh.write(b"\n")
    code = main(["report", "--run", str(first / "cluster_manifest.json"),
                 "--out", str(tmp_path / "replay")])
    assert code == 2
    assert "changed since the recorded run" in capsys.readouterr().err


def test_ingest_reads_data_dir_from_environment(tmp_path, monkeypatch):
    data = tmp_path / "hmd"
    _write_tables(data)
    monkeypatch.setenv("FCURVE_DATA_DIR", str(data))
    out = tmp_path / "out"
    code = main(["ingest", "--countries", "AAA", "--years", "1990:1991",
                 "--sex", "male", "--out", str(out)])
    assert code == 0
    assert len(panel_from_csv(out / "panel.csv")) == 2


def test_ingest_without_data_dir_fails(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("FCURVE_DATA_DIR", raising=False)
    code = main(["ingest", "--out", str(tmp_path)])
    assert code == 2
    assert "fcurve ingest: error:" in capsys.readouterr().err


def test_bad_year_range(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FCURVE_DATA_DIR", str(tmp_path))
    code = main(["ingest", "--years", "oops", "--out", str(tmp_path)])
    assert code == 2
    assert "bad year range" in capsys.readouterr().err


def test_missing_input_exits_with_data_error(tmp_path, capsys):
    code = main(["smooth", "--input", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path)])
    assert code == 3
    assert "fcurve smooth: error:" in capsys.readouterr().err


def test_bad_lambda_grid(pipeline, tmp_path, capsys):
    code = main(["smooth", "--input", str(pipeline["ingest"] / "panel.csv"),
                 "--lambda-grid", "a:b:c", "--out", str(tmp_path)])
    assert code == 2
    assert "bad penalty grid" in capsys.readouterr().err


def test_unknown_basis_name(pipeline, tmp_path, capsys):
    code = main(["smooth", "--input", str(pipeline["ingest"] / "panel.csv"),
                 "--basis", "bogus", "--out", str(tmp_path)])
    assert code == 2
    assert "neither a named scheme" in capsys.readouterr().err


def test_bad_cluster_counts(pipeline, tmp_path, capsys):
    code = main(["flm", "--input", str(pipeline["dataset"]), "--K", "9..2",
                 "--sex", "male", "--out", str(tmp_path)])
    assert code == 2
    assert "bad cluster counts" in capsys.readouterr().err


def test_component_count_must_be_positive(pipeline, tmp_path, capsys):
    code = main(["fpca", "--input", str(pipeline["dataset"]),
                 "--components", "0", "--out", str(tmp_path)])
    assert code == 2
    assert "--components" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert capsys.readouterr().out.startswith("fcurve ")
