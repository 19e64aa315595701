"""Period life-table ingestion.

Reads the fixed-width text layout used by the Human Mortality Database
(1x1 period life tables, single ages 0 to 110+) and turns the death
counts into per-(country, year, sex) curves normalized to unit mass,
collected into rectangular panels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError

#: Single ages 0..109 plus the open interval 110+.
N_AGES = 111
OPEN_AGE = 110

LIFE_TABLE_COLUMNS = ("Year", "Age", "mx", "qx", "ax", "lx", "dx", "Lx", "Tx", "ex")


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"

    @property
    def table_name(self):
        """Life-table file stem used by the source archive."""
        return "mltper_1x1" if self is Sex.MALE else "fltper_1x1"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown sex {text!r}") from None


class LifeTableRow(NamedTuple):
    """One (year, age) line of a life table.

    Missing values (".") are carried as NaN; dx is the number of deaths
    at that age out of the lx radix.
    """

    year: int
    age: int
    mx: float
    qx: float
    ax: float
    lx: float
    dx: float
    Lx: float
    Tx: float
    ex: float


def _parse_int(token, lineno, name):
    try:
        return int(token)
    except ValueError:
        raise DataError(f"line {lineno}: bad {name} value {token!r}") from None


def _parse_num(token, lineno, name):
    if token == ".":
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise DataError(f"line {lineno}: bad {name} value {token!r}") from None


def parse_life_table(source):
    """Parse a 1x1 period life table from text.

    Parameters
    ----------
    source : str or file-like
        Table contents: a title line, a header naming the ten columns,
        then whitespace-separated rows, 111 per year (ages 0..110+).

    Returns
    -------
    list of LifeTableRow
        Rows in file order.  Years must come in complete blocks with
        strictly increasing age; violations raise DataError naming the
        offending line.
    """
    text = source.read() if hasattr(source, "read") else source
    lines = text.splitlines()

    start = None
    for i, line in enumerate(lines[:10]):
        if line.split()[:2] == ["Year", "Age"]:
            start = i + 1
            break
    if start is None:
        raise DataError("no 'Year Age ...' header line found")

    rows = []
    block = 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != len(LIFE_TABLE_COLUMNS):
            raise DataError(
                f"line {lineno}: expected {len(LIFE_TABLE_COLUMNS)} columns, "
                f"got {len(tokens)}")
        year = _parse_int(tokens[0], lineno, "Year")
        age_token = tokens[1]
        if age_token == f"{OPEN_AGE}+":
            age = OPEN_AGE
        else:
            age = _parse_int(age_token, lineno, "Age")
        if age < 0 or age > OPEN_AGE:
            raise DataError(f"line {lineno}: age {age} outside 0..{OPEN_AGE}")
        values = [_parse_num(tok, lineno, name)
                  for tok, name in zip(tokens[2:], LIFE_TABLE_COLUMNS[2:])]
        row = LifeTableRow(year, age, *values)
        if row.dx < 0:
            raise DataError(f"line {lineno}: negative death count {row.dx}")
        if rows and year == rows[-1].year:
            if age <= rows[-1].age:
                raise DataError(
                    f"line {lineno}: ages not strictly increasing in year {year}")
            block += 1
        else:
            if rows and block != N_AGES:
                raise DataError(
                    f"year {rows[-1].year}: {block} rows, expected {N_AGES}")
            if rows and year < rows[-1].year:
                raise DataError(f"line {lineno}: years out of order")
            if age != 0:
                raise DataError(f"line {lineno}: year {year} does not start at age 0")
            block = 1
        rows.append(row)
    if not rows:
        raise DataError("no data rows found")
    if block != N_AGES:
        raise DataError(f"year {rows[-1].year}: {block} rows, expected {N_AGES}")
    return rows


def load_life_table(data_dir, country, sex):
    """Read `<country>.<table>.txt` from a directory tree of life tables."""
    sex = Sex.parse(sex)
    path = Path(data_dir) / f"{country}.{sex.table_name}.txt"
    if not path.is_file():
        raise DataError(f"life table not found: {path}")
    return parse_life_table(path.read_text(encoding="utf-8"))


class CurveKey(NamedTuple):
    """Identity of one curve in a panel or dataset."""

    country: str
    year: int
    sex: Sex


@dataclass(frozen=True)
class MortalityCurve:
    """Normalized age-at-death distribution for one country, year, sex.

    `values[a]` is the share of deaths at age a (110 is the open class);
    the shares are non-negative and sum to one.  `radix` keeps the total
    the raw counts were divided by.
    """

    country: str
    year: int
    sex: Sex
    values: np.ndarray
    radix: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sex", Sex.parse(self.sex))
        object.__setattr__(self, "year", int(self.year))
        if values.shape != (N_AGES,):
            raise DataError(
                f"curve {self.country}/{self.year} has {values.size} ages, "
                f"expected {N_AGES}")
        if not np.all(np.isfinite(values)):
            raise DataError(f"curve {self.country}/{self.year} has non-finite values")
        if values.min() < 0.0:
            raise DataError(f"curve {self.country}/{self.year} has negative values")
        if abs(values.sum() - 1.0) > 1e-9:
            raise DataError(
                f"curve {self.country}/{self.year} is not normalized "
                f"(sum = {values.sum()!r})")

    @property
    def key(self):
        return CurveKey(self.country, self.year, self.sex)

    @property
    def ages(self):
        return np.arange(N_AGES, dtype=np.float64)

    @classmethod
    def from_deaths(cls, country, year, sex, deaths):
        """Normalize a raw death-count vector into a curve."""
        deaths = np.asarray(deaths, dtype=np.float64)
        if deaths.shape != (N_AGES,):
            raise DataError(
                f"curve {country}/{year} has {deaths.size} ages, expected {N_AGES}")
        if not np.all(np.isfinite(deaths)):
            bad = int(np.flatnonzero(~np.isfinite(deaths))[0])
            raise DataError(
                f"curve {country}/{year} has a missing death count at age {bad}")
        total = float(deaths.sum())
        if total <= 0.0:
            raise DataError(f"curve {country}/{year} has no deaths to normalize")
        return cls(country, year, sex, deaths / total, total)


@dataclass(frozen=True)
class CurvePanel:
    """Rectangular collection of mortality curves.

    For every sex present, the panel holds one curve per (country, year)
    combination over `countries` x the inclusive `year_range`; anything
    less is rejected at construction.
    """

    curves: tuple
    countries: tuple
    year_range: tuple

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "countries", tuple(self.countries))
        lo, hi = (int(v) for v in self.year_range)
        object.__setattr__(self, "year_range", (lo, hi))
        if lo > hi:
            raise ConfigError(f"empty year range {lo}..{hi}")
        if not curves:
            raise DataError("a panel needs at least one curve")
        seen = set()
        for curve in curves:
            if curve.key in seen:
                raise DataError(f"duplicate curve {curve.key}")
            seen.add(curve.key)
            if curve.country not in self.countries:
                raise DataError(f"curve country {curve.country!r} not in panel list")
            if not lo <= curve.year <= hi:
                raise DataError(
                    f"curve year {curve.year} outside {lo}..{hi}")
        n_years = hi - lo + 1
        expected = len(self.countries) * n_years
        for sex in self.sexes:
            have = sum(1 for c in curves if c.sex is sex)
            if have != expected:
                raise DataError(
                    f"panel incomplete for {sex.value}: {have} curves, "
                    f"expected {expected}")

    def __len__(self):
        return len(self.curves)

    @property
    def sexes(self):
        out = []
        for curve in self.curves:
            if curve.sex not in out:
                out.append(curve.sex)
        return tuple(sorted(out, key=lambda s: s.value))

    @property
    def years(self):
        lo, hi = self.year_range
        return tuple(range(lo, hi + 1))

    @property
    def keys(self):
        return tuple(c.key for c in self.curves)

    def values_matrix(self):
        """Stack curve values into an array of shape (n_curves, 111)."""
        return np.vstack([c.values for c in self.curves])

    def subset(self, sex=None, countries=None):
        """Panel restricted to one sex and/or a subset of countries."""
        sex = None if sex is None else Sex.parse(sex)
        keep_countries = (tuple(countries) if countries is not None
                          else self.countries)
        picked = tuple(c for c in self.curves
                       if (sex is None or c.sex is sex)
                       and c.country in keep_countries)
        if not picked:
            raise DataError("subset selects no curves")
        return CurvePanel(picked, keep_countries, self.year_range)


def build_panel(tables, countries, year_range, sexes=(Sex.MALE, Sex.FEMALE)):
    """Assemble a panel from parsed life tables.

    Parameters
    ----------
    tables : mapping
        (country, Sex) -> list of LifeTableRow, as returned by
        `parse_life_table`.
    countries : sequence of str
    year_range : (int, int)
        Inclusive year bounds; every (country, year, sex) cell must be
        covered or a DataError lists what is missing.
    sexes : sequence of Sex

    Returns
    -------
    CurvePanel
        Curves ordered by sex, then country, then year.
    """
    lo, hi = (int(v) for v in year_range)
    if lo > hi:
        raise ConfigError(f"empty year range {lo}..{hi}")
    countries = tuple(sorted(dict.fromkeys(countries)))
    if not countries:
        raise ConfigError("no countries requested")
    sexes = tuple(Sex.parse(s) for s in sexes)

    curves = []
    missing = []
    for sex in sorted(set(sexes), key=lambda s: s.value):
        for country in countries:
            rows = tables.get((country, sex))
            if rows is None:
                missing.append(f"{country}/{sex.value} (no table)")
                continue
            by_year = {}
            for row in rows:
                by_year.setdefault(row.year, []).append(row)
            for year in range(lo, hi + 1):
                got = by_year.get(year)
                if not got:
                    missing.append(f"{country}/{sex.value}/{year}")
                    continue
                deaths = np.full(N_AGES, np.nan)
                for row in got:
                    deaths[row.age] = row.dx
                curves.append(MortalityCurve.from_deaths(country, year, sex, deaths))
    if missing:
        shown = ", ".join(missing[:12])
        more = "" if len(missing) <= 12 else f" and {len(missing) - 12} more"
        raise DataError(f"panel coverage incomplete: missing {shown}{more}")
    return CurvePanel(tuple(curves), countries, (lo, hi))


PANEL_CSV_HEADER = "country,year,sex,age,value"


def panel_to_csv(panel, path, run_hash=None):
    """Write a panel as long-format CSV.

    Column layout is `country,year,sex,age,value`, one row per curve and
    age, curves in panel order.  A `# run:` comment line in front
    records the producing run when a hash is given.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if run_hash:
            fh.write(f"# run: {run_hash}\n")
        fh.write(PANEL_CSV_HEADER + "\n")
        for curve in panel.curves:
            for age in range(N_AGES):
                fh.write(f"{curve.country},{curve.year},{curve.sex.value},"
                         f"{age},{float(curve.values[age])!r}\n")


def panel_from_csv(path):
    """Read a panel written by `panel_to_csv`.

    Leading `#` comment lines are skipped; the header must match the
    writer's exactly.  Values are taken as already normalized: each
    curve keeps radix 1 and must still sum to one.
    """
    groups = {}
    order = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read panel {path}: {exc}") from None
    with fh:
        lineno = 0
        header_seen = False
        for line in fh:
            lineno += 1
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != PANEL_CSV_HEADER:
                    raise DataError(
                        f"line {lineno}: bad header {line!r}, "
                        f"expected {PANEL_CSV_HEADER!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise DataError(f"line {lineno}: expected 5 fields, got {len(parts)}")
            country, year_s, sex_s, age_s, value_s = parts
            try:
                year = int(year_s)
                age = int(age_s)
                value = float(value_s)
            except ValueError:
                raise DataError(f"line {lineno}: malformed row {line!r}") from None
            try:
                sex = Sex.parse(sex_s)
            except ConfigError:
                raise DataError(f"line {lineno}: unknown sex {sex_s!r}") from None
            if age < 0 or age >= N_AGES:
                raise DataError(f"line {lineno}: age {age} outside 0..{OPEN_AGE}")
            key = (country, year, sex)
            if key not in groups:
                groups[key] = np.full(N_AGES, np.nan)
                order.append(key)
            if not math.isnan(groups[key][age]):
                raise DataError(f"line {lineno}: duplicate age {age} for {key}")
            groups[key][age] = value
    if not header_seen:
        raise DataError("empty panel file")
    if not order:
        raise DataError("panel file has a header but no rows")

    curves = []
    for country, year, sex in order:
        values = groups[(country, year, sex)]
        if np.isnan(values).any():
            missing = int(np.flatnonzero(np.isnan(values))[0])
            raise DataError(
                f"curve {country}/{year}/{sex.value} is missing age {missing}")
        curves.append(MortalityCurve(country, year, sex, values, 1.0))
    countries = tuple(sorted({c.country for c in curves}))
    years = [c.year for c in curves]
    return CurvePanel(tuple(curves), countries, (min(years), max(years)))
