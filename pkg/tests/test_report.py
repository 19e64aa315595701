"""Run manifests, composition grids, and SVG artifacts."""

import hashlib
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fcurve.cluster import Partition
from fcurve.errors import ConfigError, DataError
from fcurve.ingest import CurveKey, Sex
from fcurve.report import (MEAN_LABEL, MINUS_LABEL, PLUS_LABEL, CompositionGrid,
                           RunManifest, area_of, composition_grid,
                           default_panel_config, effect_plot, file_sha256,
                           labeled_csv, panel_country_codes, plot_curves,
                           read_labeled_csv, trajectory_plot)

import synthdata

AGES = synthdata.AGES


def _svg_texts(path):
    root = ET.parse(path).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    return [el.text for el in root.iter(f"{ns}text")]


# --- manifests ------------------------------------------------------------------

def test_file_digest_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"12345" * 1000)
    assert file_sha256(path) == hashlib.sha256(b"12345" * 1000).hexdigest()


def test_manifest_round_trip(tmp_path):
    data = tmp_path / "input.csv"
    data.write_text("a,b\n1,2\n", encoding="utf-8")
    manifest = RunManifest.make("smooth", {"input": str(data), "mode": "common"},
                                input_path=data)
    assert manifest.input_sha256 == file_sha256(data)
    path = tmp_path / "manifest.json"
    manifest.to_json(path)
    loaded = RunManifest.from_json(path)
    assert loaded == manifest
    assert loaded.hash == manifest.hash


def test_manifest_hash_ignores_timestamps(tmp_path):
    config = {"mode": "common", "grid": [0.1, 1.0]}
    a = RunManifest("smooth", config, "in.csv", "deadbeef", "0.1.0",
                    "2024-01-01T00:00:00+00:00")
    b = RunManifest("smooth", config, "in.csv", "deadbeef", "0.1.0",
                    "2030-06-15T12:34:56+00:00")
    assert a.hash == b.hash
    c = RunManifest("smooth", dict(config, mode="per_curve"), "in.csv",
                    "deadbeef", "0.1.0", a.created)
    assert c.hash != a.hash
    d = RunManifest("fpca", config, "in.csv", "deadbeef", "0.1.0", a.created)
    assert d.hash != a.hash


def test_manifest_detects_tampering(tmp_path):
    manifest = RunManifest.make("fpca", {"components": 5})
    path = tmp_path / "manifest.json"
    manifest.to_json(path)
    record = json.loads(path.read_text(encoding="utf-8"))
    record["config"]["components"] = 6
    path.write_text(json.dumps(record), encoding="utf-8")
    with pytest.raises(DataError, match="hash"):
        RunManifest.from_json(path)


def test_manifest_read_errors(tmp_path):
    with pytest.raises(DataError):
        RunManifest.from_json(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataError):
        RunManifest.from_json(bad)
    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text(json.dumps({"command": "fpca"}), encoding="utf-8")
    with pytest.raises(DataError, match="missing"):
        RunManifest.from_json(incomplete)


# --- panel configuration -----------------------------------------------------------

def test_builtin_panel_configuration():
    config = default_panel_config()
    codes = panel_country_codes(config)
    assert len(codes) == 32
    assert codes == sorted(codes)
    assert config["years"] == [1960, 2010]
    mapping = area_of(config)
    assert set(mapping) == set(codes)
    assert "excluded" in config


# --- composition grids ---------------------------------------------------------------

def _partition_and_keys():
    keys = [CurveKey(c, y, Sex.FEMALE)
            for c in ("AAA", "BBB") for y in (1990, 1991)]
    labels = np.asarray([1, 1, 2, 2])
    return Partition(labels, 2, (2, 2), 0.0), keys


def test_composition_grid_layout():
    partition, keys = _partition_and_keys()
    grid = composition_grid(partition, keys, grouping={"AAA": "North",
                                                       "BBB": "South"})
    assert grid.years == (1990, 1991)
    assert grid.shares == (0.5, 0.5)
    assert grid.n_clusters == 2
    assert grid.cell("AAA", 1990) == 1
    assert grid.cell("BBB", 1991) == 2
    assert [r[0] for r in grid.rows] == ["North", "South"]
    with pytest.raises(ConfigError):
        grid.cell("ZZZ", 1990)


def test_composition_grid_groups_unknown_codes_under_other():
    partition, keys = _partition_and_keys()
    grid = composition_grid(partition, keys)
    assert all(area == "Other" for area, _, _ in grid.rows)


def test_composition_grid_alignment_errors():
    partition, keys = _partition_and_keys()
    with pytest.raises(DataError, match="4 labels for 3"):
        composition_grid(partition, keys[:3])
    doubled = [keys[0] if k == keys[1] else k for k in keys]
    with pytest.raises(DataError, match="single-sex"):
        composition_grid(partition, doubled)
    missing = list(keys)
    missing[3] = CurveKey("CCC", 1990, Sex.FEMALE)
    with pytest.raises(DataError, match="missing"):
        composition_grid(partition, missing)


def test_composition_csv_and_svg(tmp_path):
    partition, keys = _partition_and_keys()
    grid = composition_grid(partition, keys, grouping={"AAA": "North",
                                                       "BBB": "South"})
    csv_path = tmp_path / "composition.csv"
    grid.to_csv(csv_path, run_hash="cafe01")
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# run: cafe01"
    assert lines[1] == "area,country,1990,1991"
    assert lines[2] == "North,AAA,1,1"
    assert lines[3] == "South,BBB,2,2"

    svg_path = tmp_path / "composition.svg"
    grid.to_svg(svg_path, run_hash="cafe01")
    texts = _svg_texts(svg_path)
    assert any(t and "cluster 1: 50.00%" in t for t in texts)
    first = svg_path.read_bytes()
    grid.to_svg(svg_path, run_hash="cafe01")
    assert svg_path.read_bytes() == first


# --- SVG plots ------------------------------------------------------------------------

def test_plot_curves_is_deterministic(tmp_path):
    xs = np.linspace(0.0, 110.0, 50)
    series = [("one", xs, np.sin(xs / 20.0)),
              ("two", xs, np.cos(xs / 20.0), {"dash": "4,2"})]
    a = tmp_path / "a.svg"
    b = tmp_path / "b.svg"
    plot_curves(series, a, title="waves", run_hash="beef")
    plot_curves(series, b, title="waves", run_hash="beef")
    assert a.read_bytes() == b.read_bytes()
    root = ET.parse(a).getroot()
    desc = root.find("{http://www.w3.org/2000/svg}desc")
    assert desc is not None and desc.text == "run: beef"


def test_plot_without_hash_has_no_desc(tmp_path):
    path = tmp_path / "plain.svg"
    plot_curves([("s", [0.0, 1.0], [0.0, 1.0])], path)
    root = ET.parse(path).getroot()
    assert root.find("{http://www.w3.org/2000/svg}desc") is None


def test_empty_plot_is_valid_svg(tmp_path):
    path = tmp_path / "empty.svg"
    plot_curves([], path, title="nothing")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")


def test_effect_plot_legend_labels(basis31, tmp_path):
    mean = np.ones(basis31.dimension) * 0.01
    step = np.zeros(basis31.dimension)
    step[10] = 0.005
    path = tmp_path / "effect.svg"
    effect_plot(basis31, mean, mean + step, mean - step, path,
                title="first component", run_hash="0123")
    texts = [t for t in _svg_texts(path) if t]
    assert PLUS_LABEL in texts
    assert MINUS_LABEL in texts
    assert MEAN_LABEL in texts
    assert MINUS_LABEL == "−"


def test_trajectory_plot_decadal_points(tmp_path):
    years = list(range(1960, 2011))
    keys = [CurveKey("AAA", y, Sex.FEMALE) for y in years]
    rng = np.random.default_rng(0)
    scores = rng.normal(size=(len(years), 3))
    path = tmp_path / "traj.svg"
    trajectory_plot(scores, keys, path)
    texts = [t for t in _svg_texts(path) if t]
    for year in (1960, 1970, 1980, 1990, 2000, 2010):
        assert str(year) in texts
    assert "AAA" in texts
    assert "1961" not in texts


def test_trajectory_plot_degenerate_scores(tmp_path):
    keys = [CurveKey("AAA", y, Sex.MALE) for y in (1960, 1970)]
    path = tmp_path / "flat.svg"
    trajectory_plot(np.zeros((2, 2)), keys, path)
    ET.parse(path)  # parseable XML with degenerate bounds


def test_trajectory_plot_validation(tmp_path):
    keys = [CurveKey("AAA", 1960, Sex.MALE)]
    with pytest.raises(ConfigError):
        trajectory_plot(np.zeros((1, 1)), keys, tmp_path / "x.svg")
    with pytest.raises(DataError):
        trajectory_plot(np.zeros((2, 2)), keys, tmp_path / "x.svg")


# --- labeled CSV ------------------------------------------------------------------------

def test_labeled_csv_round_trip(tmp_path):
    path = tmp_path / "table.csv"
    labeled_csv(path, ("name", "value"), [("a", 1), ("b", 2.5)],
                run_hash="f00d")
    header, rows = read_labeled_csv(path)
    assert header == ["name", "value"]
    assert rows == [["a", "1"], ["b", "2.5"]]
    assert path.read_text(encoding="utf-8").startswith("# run: f00d\n")


def test_read_labeled_csv_requires_a_header(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("# run: 1\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_labeled_csv(path)
