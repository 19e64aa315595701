"""Run manifests and report artifacts.

Every pipeline command records what it ran on in a RunManifest whose
hash covers the command, its configuration, and the input file digest
but never timestamps, so re-running an identical configuration produces
the identical hash.  Report artifacts (CSV tables, SVG plots) embed the
hash so outputs can be traced back to their run.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from ._svg import PALETTE, LinePlot
from .errors import ConfigError, DataError

PLUS_LABEL = "+"
MINUS_LABEL = "−"
MEAN_LABEL = "mean"


def file_sha256(path):
    """Hex digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Record of one pipeline invocation.

    `created` is informative only; the identifying `hash` is computed
    from the command name, the canonicalized configuration, the input
    digest, and the package version.
    """

    command: str
    config: dict
    input_path: str
    input_sha256: str
    version: str
    created: str

    @classmethod
    def make(cls, command, config, input_path=None, input_digest=None):
        if input_path is not None and input_digest is None:
            input_digest = file_sha256(input_path)
        created = datetime.datetime.now(datetime.timezone.utc) \
            .isoformat(timespec="seconds")
        return cls(command=str(command), config=dict(config),
                   input_path="" if input_path is None else str(input_path),
                   input_sha256=input_digest or "", version=__version__,
                   created=created)

    @property
    def hash(self):
        payload = json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "input_sha256": self.input_sha256,
                "version": self.version,
            },
            sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_json(self, path):
        record = {
            "command": self.command,
            "config": self.config,
            "input_path": self.input_path,
            "input_sha256": self.input_sha256,
            "version": self.version,
            "created": self.created,
            "hash": self.hash,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                record = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from None
        try:
            manifest = cls(command=record["command"], config=record["config"],
                           input_path=record.get("input_path", ""),
                           input_sha256=record.get("input_sha256", ""),
                           version=record["version"],
                           created=record.get("created", ""))
        except KeyError as exc:
            raise DataError(f"manifest {path} is missing {exc}") from None
        stored = record.get("hash")
        if stored and stored != manifest.hash:
            raise DataError(f"manifest {path} hash does not match its contents")
        return manifest


def default_panel_config():
    """Built-in panel definition: areas, country codes, year range."""
    text = resources.files("fcurve.data").joinpath("hmd_panel.json") \
        .read_text(encoding="utf-8")
    return json.loads(text)


def area_of(config=None):
    """Mapping country code -> area name from a panel configuration."""
    config = default_panel_config() if config is None else config
    mapping = {}
    for area in config["areas"]:
        for code in area["countries"]:
            mapping[code] = area["name"]
    return mapping


def panel_country_codes(config=None):
    """All country codes of a panel configuration, sorted."""
    config = default_panel_config() if config is None else config
    return sorted(code for area in config["areas"] for code in area["countries"])


@dataclass(frozen=True)
class CompositionGrid:
    """Cluster membership of every (country, year) cell of one partition.

    Rows are countries grouped by area, columns are years; `cell(c, y)`
    is the 1-based cluster label.  `shares` holds each cluster's share
    of all cells.
    """

    years: tuple
    rows: tuple  # (area, country, labels-per-year) triples
    shares: tuple

    @property
    def n_clusters(self):
        return len(self.shares)

    def cell(self, country, year):
        for _, code, labels in self.rows:
            if code == country:
                return labels[self.years.index(year)]
        raise ConfigError(f"country {country!r} not in the grid")

    def to_csv(self, path, run_hash=None):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if run_hash:
                fh.write(f"# run: {run_hash}\n")
            fh.write("area,country," + ",".join(str(y) for y in self.years) + "\n")
            for area, code, labels in self.rows:
                fh.write(f"{area},{code}," + ",".join(str(l) for l in labels) + "\n")

    def to_svg(self, path, run_hash=None):
        """Color-grid rendering, one rectangle per (country, year)."""
        cell_w, cell_h = 12, 14
        left, top = 150, 46
        width = max(left + cell_w * len(self.years) + 30,
                    left + 110 * len(self.shares) + 10)
        height = top + cell_h * len(self.rows) + 60
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
               f'height="{height}" viewBox="0 0 {width} {height}">']
        if run_hash:
            out.append(f"  <desc>run: {run_hash}</desc>")
        out.append(f'  <rect width="{width}" height="{height}" fill="#ffffff"/>')
        last_area = None
        for r, (area, code, labels) in enumerate(self.rows):
            y = top + r * cell_h
            name = f"{area} / {code}" if area != last_area else code
            last_area = area
            out.append(f'  <text x="{left - 6}" y="{y + cell_h - 3}" '
                       f'font-size="9" text-anchor="end" fill="#333333" '
                       f'font-family="sans-serif">{name}</text>')
            for c, label in enumerate(labels):
                color = PALETTE[(label - 1) % len(PALETTE)]
                out.append(f'  <rect x="{left + c * cell_w}" y="{y}" '
                           f'width="{cell_w - 1}" height="{cell_h - 1}" '
                           f'fill="{color}"/>')
        for c, year in enumerate(self.years):
            if year % 10 == 0:
                out.append(f'  <text x="{left + c * cell_w + cell_w // 2}" '
                           f'y="{top - 8}" font-size="9" text-anchor="middle" '
                           f'fill="#333333" font-family="sans-serif">{year}</text>')
        legend_y = top + len(self.rows) * cell_h + 22
        for k, share in enumerate(self.shares, start=1):
            x = left + (k - 1) * 110
            color = PALETTE[(k - 1) % len(PALETTE)]
            out.append(f'  <rect x="{x}" y="{legend_y - 10}" width="12" '
                       f'height="12" fill="{color}"/>')
            out.append(f'  <text x="{x + 16}" y="{legend_y}" font-size="10" '
                       f'fill="#333333" font-family="sans-serif">'
                       f'cluster {k}: {share * 100:.2f}%</text>')
        out.append("</svg>")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out) + "\n")


def composition_grid(partition, keys, grouping=None):
    """Arrange a partition of single-sex curves as a country-by-year grid.

    Parameters
    ----------
    partition : Partition
    keys : sequence of CurveKey aligned with the partition labels;
        (country, year) pairs must be unique, so pass one sex at a time.
    grouping : mapping code -> area name, optional
        Defaults to the built-in area layout; unknown codes are grouped
        under "Other".
    """
    keys = list(keys)
    if len(keys) != len(partition):
        raise DataError(
            f"partition has {len(partition)} labels for {len(keys)} curves")
    grouping = area_of() if grouping is None else dict(grouping)

    cells = {}
    for key, label in zip(keys, partition.labels):
        cell = (key.country, key.year)
        if cell in cells:
            raise DataError(
                f"duplicate (country, year) {cell}; pass a single-sex partition")
        cells[cell] = int(label)

    years = tuple(sorted({year for _, year in cells}))
    countries = sorted({country for country, _ in cells})
    for country in countries:
        for year in years:
            if (country, year) not in cells:
                raise DataError(f"grid cell ({country}, {year}) is missing")

    area_order = []
    for area in (grouping[c] for c in grouping):
        if area not in area_order:
            area_order.append(area)
    area_order.append("Other")

    def sort_key(country):
        area = grouping.get(country, "Other")
        return (area_order.index(area), country)

    rows = tuple(
        (grouping.get(country, "Other"), country,
         tuple(cells[(country, year)] for year in years))
        for country in sorted(countries, key=sort_key))

    counts = np.bincount(partition.labels, minlength=partition.n_clusters + 1)
    shares = tuple(float(c) / len(partition) for c in counts[1:])
    return CompositionGrid(years, rows, shares)


def plot_curves(series, path, title="", xlabel="age", ylabel="", run_hash=None):
    """Render labeled (xs, ys) series as one SVG line plot.

    `series` is a sequence of (label, xs, ys) or (label, xs, ys, style)
    tuples, where style may set "color" and "dash".
    """
    plot = LinePlot(title=title, xlabel=xlabel, ylabel=ylabel)
    for entry in series:
        label, xs, ys = entry[0], entry[1], entry[2]
        style = entry[3] if len(entry) > 3 else {}
        plot.add_series(xs, ys, label=label, color=style.get("color"),
                        dash=style.get("dash"))
    plot.render(path, run_hash=run_hash)


def effect_plot(basis, mean_coeffs, plus_coeffs, minus_coeffs, path,
                title="", run_hash=None, grid_points=221):
    """Mean curve with plus/minus perturbation overlays."""
    lo, hi = basis.domain
    grid = np.linspace(lo, hi, grid_points)
    design = basis.design(grid)
    series = [
        (MEAN_LABEL, grid, design @ np.asarray(mean_coeffs, dtype=np.float64),
         {"color": "#333333"}),
        (PLUS_LABEL, grid, design @ np.asarray(plus_coeffs, dtype=np.float64),
         {"color": "#d95f02"}),
        (MINUS_LABEL, grid, design @ np.asarray(minus_coeffs, dtype=np.float64),
         {"color": "#1f6fb4", "dash": "5,3"}),
    ]
    plot_curves(series, path, title=title, xlabel="age", ylabel="density",
                run_hash=run_hash)


def trajectory_plot(scores, keys, path, title="", run_hash=None):
    """Country paths through the plane of the first two scores.

    One polyline per country through its decadal years (every tenth
    year from the country's first), yearly points, and a country label
    at the last decadal year.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ConfigError("trajectories need at least two score columns")
    keys = list(keys)
    if len(keys) != scores.shape[0]:
        raise DataError(
            f"{scores.shape[0]} score rows for {len(keys)} curves")

    by_country = {}
    for i, key in enumerate(keys):
        by_country.setdefault(key.country, []).append((key.year, i))

    plot = LinePlot(title=title, xlabel="score 1", ylabel="score 2")
    for rank, country in enumerate(sorted(by_country)):
        entries = sorted(by_country[country])
        first_year = entries[0][0]
        decadal = [(year, i) for year, i in entries
                   if (year - first_year) % 10 == 0]
        color = PALETTE[rank % len(PALETTE)]
        xs = [scores[i, 0] for _, i in decadal]
        ys = [scores[i, 1] for _, i in decadal]
        plot.add_series(xs, ys, label=None, color=color, width=1.2)
        plot.add_points(xs, ys, color=color)
        for year, i in decadal:
            plot.add_label(scores[i, 0], scores[i, 1], str(year),
                           color="#666666", size=8)
        plot.add_label(xs[-1], ys[-1], country, color=color, dy=-10, size=11)
    plot.render(path, run_hash=run_hash)


def labeled_csv(path, header, rows, run_hash=None):
    """Small CSV writer used by the CLI: comment, header, rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if run_hash:
            fh.write(f"# run: {run_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def read_labeled_csv(path):
    """Read a `labeled_csv` file; returns (header, rows) skipping comments."""
    header = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise DataError(f"{path} has no header row")
    return header, rows
