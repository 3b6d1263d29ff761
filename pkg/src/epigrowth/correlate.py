"""Demographic and weather correlation studies over fitted growth rates.

The demographic study regresses one response per metro (its length-weighted
average growth rate) on each demographic group's subcategory percentages.
The weather studies regress day-over-day log-count changes on categorical
weather within each metro/period cell, with weather read on the first day of
each pair.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .fit import GrowthRates
from .regress import bucket_temperature, encode_dummies, fit_multi
from .segment import Period, PeriodSet
from .timeseries import CaseSeries, _as_text

NA_RANK = "rank-deficient"
NA_SAMPLES = "insufficient-samples"
WEATHER_TYPES = ("cloudy", "foggy", "rainy", "snowy", "sunny")
WEATHER_MODES = ("type", "high-temp", "low-temp")
DEMOGRAPHICS_HEADER = ("metro", "group", "subcategory", "value")
WEATHER_HEADER = ("metro", "date", "type", "high", "low")
GROUP_REPORT_HEADER = ("group", "subcategory", "p_value", "group_r2")
WEATHER_REPORT_HEADER = ("metro", "P1", "P2", "P3", "P4", "P5")


@dataclass(frozen=True)
class ReportCell:
    """One study cell: (group, subcategory) or (metro, period) keyed."""

    key: tuple[str, str]
    p_value: float | None
    r_squared: float | None
    n: int
    na_reason: str | None = None

    def __post_init__(self) -> None:
        if self.na_reason not in (None, NA_RANK, NA_SAMPLES):
            raise ValidationError(f"unknown na_reason {self.na_reason!r}")
        if (self.p_value is None) != (self.na_reason is not None):
            raise ValidationError("p_value must be absent exactly when na_reason is set")
        if self.n < 0:
            raise ValidationError("cell sample count must be >= 0")


@dataclass(frozen=True)
class GroupResult:
    group: str
    r_squared: float | None
    n: int
    na_reason: str | None = None

    def __post_init__(self) -> None:
        if self.na_reason not in (None, NA_RANK, NA_SAMPLES):
            raise ValidationError(f"unknown na_reason {self.na_reason!r}")
        if (self.r_squared is None) != (self.na_reason is not None):
            raise ValidationError("r_squared must be absent exactly when na_reason is set")


@dataclass(frozen=True)
class CorrelationReport:
    study: str
    cells: tuple[ReportCell, ...]
    groups: tuple[GroupResult, ...] = ()


@dataclass(frozen=True)
class DemographicTable:
    """group -> metro -> subcategory -> percentage, as loaded."""

    values: Mapping[str, Mapping[str, Mapping[str, float]]]

    def groups(self) -> list[str]:
        return sorted(self.values)

    def subcategories(self, group: str) -> list[str]:
        metros = self.values.get(group, {})
        cats: set[str] = set()
        for per_metro in metros.values():
            cats.update(per_metro)
        return sorted(cats)

    def complete_metros(self, group: str) -> list[str]:
        cats = set(self.subcategories(group))
        per_group = self.values.get(group, {})
        return sorted(m for m, vals in per_group.items() if cats <= set(vals))

    def value(self, group: str, metro: str, subcategory: str) -> float:
        return self.values[group][metro][subcategory]


@dataclass(frozen=True)
class WeatherRow:
    metro: str
    day: date
    kind: str
    high: float
    low: float

    def __post_init__(self) -> None:
        if self.kind not in WEATHER_TYPES:
            raise ValidationError(f"unknown weather type {self.kind!r}")
        if not (math.isfinite(self.high) and math.isfinite(self.low)):
            raise ValidationError("temperatures must be finite")
        if self.high < self.low:
            raise ValidationError(f"{self.metro} {self.day}: high below low")


@dataclass(frozen=True)
class WeatherTable:
    rows: tuple[WeatherRow, ...]

    def __post_init__(self) -> None:
        seen = set()
        for row in self.rows:
            key = (row.metro, row.day)
            if key in seen:
                raise ValidationError(f"duplicate weather row for {row.metro} on {row.day}")
            seen.add(key)

    def lookup(self, metro: str, day: date) -> WeatherRow | None:
        return self._index().get((metro, day))

    def metros(self) -> list[str]:
        return sorted({row.metro for row in self.rows})

    def _index(self) -> dict[tuple[str, date], WeatherRow]:
        cached = getattr(self, "_cache", None)
        if cached is None:
            cached = {(row.metro, row.day): row for row in self.rows}
            object.__setattr__(self, "_cache", cached)
        return cached


def weighted_avg_growth(
    rates: GrowthRates | Sequence[float | None],
    periods: PeriodSet | Sequence[int],
) -> float:
    """Length-weighted mean growth rate across the periods."""
    ks = tuple(rates.k) if isinstance(rates, GrowthRates) else tuple(rates)
    lens = tuple(periods.lengths()) if isinstance(periods, PeriodSet) else tuple(int(v) for v in periods)
    if len(ks) != len(lens):
        raise ValidationError(f"{len(ks)} rates vs {len(lens)} period lengths")
    total = 0.0
    weight = 0
    for idx, (k, length) in enumerate(zip(ks, lens)):
        if k is None:
            raise ValidationError(f"period {idx + 1} has no growth rate")
        if length <= 0:
            raise ValidationError(f"period {idx + 1} has non-positive length")
        total += k * length
        weight += length
    return total / weight


def daily_log_growth(series: CaseSeries, period: Period) -> list[tuple[date, float]]:
    """(day, log c(day+1) - log c(day)) pairs with both days positive and inside the period."""
    out: list[tuple[date, float]] = []
    day = period.start
    while day < period.end:
        c0 = series.filled_count(day)
        c1 = series.filled_count(day + timedelta(days=1))
        if c0 > 0 and c1 > 0:
            out.append((day, math.log(c1) - math.log(c0)))
        day += timedelta(days=1)
    return out


def demographic_study(demo: DemographicTable, response: Mapping[str, float]) -> CorrelationReport:
    """Per-group OLS of metro responses on subcategory percentages.

    Groups with fewer complete metros than predictors + 2 are reported NA
    rather than fitted; unidentifiable subcategory columns surface as
    rank-deficient cells.
    """
    cells: list[ReportCell] = []
    groups: list[GroupResult] = []
    for group in demo.groups():
        subcats = demo.subcategories(group)
        metros = [m for m in demo.complete_metros(group) if m in response]
        n = len(metros)
        if n < len(subcats) + 2:
            groups.append(GroupResult(group, None, n, NA_SAMPLES))
            cells.extend(ReportCell((group, sc), None, None, n, NA_SAMPLES) for sc in subcats)
            continue
        design = np.array([[demo.value(group, m, sc) for sc in subcats] for m in metros])
        y = np.array([response[m] for m in metros])
        fit = fit_multi(design, y)
        group_na = None if fit.r_squared is not None else NA_RANK
        groups.append(GroupResult(group, fit.r_squared, n, group_na))
        for j, sc in enumerate(subcats):
            pv = fit.p_values[j]
            cells.append(ReportCell((group, sc), pv, fit.r_squared, n, None if pv is not None else NA_RANK))
    return CorrelationReport("demographic", tuple(cells), tuple(groups))


def weather_study(
    weather: WeatherTable,
    series_by_metro: Mapping[str, CaseSeries],
    period_sets: Mapping[str, PeriodSet],
    mode: str,
) -> CorrelationReport:
    """Per metro/period OLS of daily log growth on dummy-coded weather labels.

    ``mode`` picks the label: the reported type, or the bucketed high or low
    temperature.  The cell p-value is the smallest coefficient p-value among
    the dummy columns.
    """
    if mode not in WEATHER_MODES:
        raise ValidationError(f"unknown weather mode {mode!r}; choose from {', '.join(WEATHER_MODES)}")
    cells: list[ReportCell] = []
    for metro in sorted(period_sets):
        series = series_by_metro.get(metro)
        if series is None:
            raise ValidationError(f"no case series for metro {metro}")
        for period in period_sets[metro].periods:
            key = (metro, f"P{period.index}")
            labeled: list[tuple[str, float]] = []
            for day, change in daily_log_growth(series, period):
                row = weather.lookup(metro, day)
                if row is None:
                    continue
                if mode == "type":
                    label = row.kind
                else:
                    value = row.high if mode == "high-temp" else row.low
                    label = bucket_temperature(value, mode)
                labeled.append((label, change))
            n = len(labeled)
            if n < 2:
                cells.append(ReportCell(key, None, None, n, NA_SAMPLES))
                continue
            levels = {label for label, _ in labeled}
            if len(levels) < 2:
                cells.append(ReportCell(key, None, None, n, NA_RANK))
                continue
            if n < len(levels) + 1:
                cells.append(ReportCell(key, None, None, n, NA_SAMPLES))
                continue
            encoding = encode_dummies([label for label, _ in labeled])
            fit = fit_multi(encoding.columns, np.array([change for _, change in labeled]))
            p_best = min(p for p in fit.p_values[:-1])
            cells.append(ReportCell(key, p_best, fit.r_squared, n))
    return CorrelationReport(f"weather-{mode}", tuple(cells))


def load_demographics(source) -> tuple[DemographicTable, list[str]]:
    """Read metro,group,subcategory,value rows; values are percentages in [0, 100].

    Metros missing some of a group's subcategories stay in the table but are
    flagged with a warning; the study skips them for that group.
    """
    reader = csv.reader(_as_text(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("demographics file is empty") from None
    if tuple(header) != DEMOGRAPHICS_HEADER:
        raise ParseError(f"expected header {','.join(DEMOGRAPHICS_HEADER)}, got {','.join(header)}")
    values: dict[str, dict[str, dict[str, float]]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"line {reader.line_num}: expected 4 fields, got {len(row)}")
        metro, group, subcat, raw = (field.strip() for field in row)
        if not metro or not group or not subcat:
            raise ParseError(f"line {reader.line_num}: empty key field")
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"line {reader.line_num}: bad value {raw!r}") from None
        if not math.isfinite(value) or value < 0 or value > 100:
            raise ValidationError(f"line {reader.line_num}: value {raw} outside [0, 100]")
        per_metro = values.setdefault(group, {}).setdefault(metro, {})
        if subcat in per_metro:
            raise ValidationError(f"duplicate demographics row for {metro}/{group}/{subcat}")
        per_metro[subcat] = value
    table = DemographicTable(values)
    warnings = []
    for group in table.groups():
        complete = set(table.complete_metros(group))
        for metro in sorted(values[group]):
            if metro not in complete:
                missing = sorted(set(table.subcategories(group)) - set(values[group][metro]))
                warnings.append(f"{metro}: missing {group} value(s) for {', '.join(missing)}; "
                                f"excluded from the {group} regression")
    return table, warnings


def write_demographics_csv(table: DemographicTable, fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(DEMOGRAPHICS_HEADER)
    for group in table.groups():
        for metro in sorted(table.values[group]):
            for subcat in sorted(table.values[group][metro]):
                writer.writerow([metro, group, subcat, repr(table.values[group][metro][subcat])])


def load_weather(source) -> WeatherTable:
    reader = csv.reader(_as_text(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("weather file is empty") from None
    if tuple(header) != WEATHER_HEADER:
        raise ParseError(f"expected header {','.join(WEATHER_HEADER)}, got {','.join(header)}")
    rows = []
    for row in reader:
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"line {reader.line_num}: expected 5 fields, got {len(row)}")
        metro, raw_day, kind, raw_high, raw_low = (field.strip() for field in row)
        try:
            day = date.fromisoformat(raw_day)
        except ValueError:
            raise ParseError(f"line {reader.line_num}: bad date {raw_day!r}") from None
        try:
            high = float(raw_high)
            low = float(raw_low)
        except ValueError:
            raise ParseError(f"line {reader.line_num}: bad temperature") from None
        try:
            rows.append(WeatherRow(metro, day, kind, high, low))
        except ValidationError as exc:
            raise ValidationError(f"line {reader.line_num}: {exc}") from None
    return WeatherTable(tuple(rows))


def write_weather_csv(table: WeatherTable, fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(WEATHER_HEADER)
    for row in sorted(table.rows, key=lambda r: (r.metro, r.day)):
        writer.writerow([row.metro, row.day.isoformat(), row.kind, repr(row.high), repr(row.low)])


def _cell_text(value: float | None) -> str:
    return "NA" if value is None else repr(value)


def write_group_report_csv(report: CorrelationReport, fh: io.TextIOBase) -> None:
    if report.study != "demographic":
        raise ValidationError(f"expected a demographic report, got {report.study!r}")
    r2_by_group = {g.group: g.r_squared for g in report.groups}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(GROUP_REPORT_HEADER)
    for cell in report.cells:
        group, subcat = cell.key
        writer.writerow([group, subcat, _cell_text(cell.p_value), _cell_text(r2_by_group[group])])


def write_weather_report_csv(report: CorrelationReport, fh: io.TextIOBase) -> None:
    if not report.study.startswith("weather-"):
        raise ValidationError(f"expected a weather report, got {report.study!r}")
    by_metro: dict[str, dict[str, float | None]] = {}
    for cell in report.cells:
        metro, tag = cell.key
        by_metro.setdefault(metro, {})[tag] = cell.p_value
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(WEATHER_REPORT_HEADER)
    for metro in sorted(by_metro):
        row = [metro]
        row.extend(_cell_text(by_metro[metro].get(f"P{idx}")) for idx in range(1, 6))
        writer.writerow(row)


def report_to_dict(report: CorrelationReport) -> dict:
    """JSON-ready view; None values become nulls."""
    return {
        "study": report.study,
        "groups": [
            {
                "group": g.group,
                "r_squared": g.r_squared,
                "n": g.n,
                "na_reason": g.na_reason,
            }
            for g in report.groups
        ],
        "cells": [
            {
                "key": list(cell.key),
                "p_value": cell.p_value,
                "r_squared": cell.r_squared,
                "n": cell.n,
                "na_reason": cell.na_reason,
            }
            for cell in report.cells
        ],
    }
