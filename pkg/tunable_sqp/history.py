"""Iteration-history files, run summaries and run comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from .errors import ParseError
from .records import IterateState, IterationRecord, Status

FORMAT_LINE = '# tunable-sqp history v1'
COLUMNS = (
    'k',
    'model_stationarity',
    'model_feasibility',
    'true_stationarity',
    'merit',
    'rho',
    'alpha',
    'fom_solves',
    'rom_solves',
    'basis_size',
)
INT_COLUMNS = ('k', 'fom_solves', 'rom_solves', 'basis_size')


def format_number(value: Optional[float]) -> str:
    if value is None:
        return 'nan'
    if isinstance(value, int):
        return str(value)
    return '%.17g' % value


def history_rows(
    history: Iterable[IterationRecord], exact: bool,
) -> list[list[str]]:
    rows = []
    for rec in history:
        true_stationarity = (
            rec.stationarity if exact else rec.true_stationarity
        )
        rows.append([
            str(rec.k),
            format_number(rec.stationarity),
            format_number(rec.feasibility),
            format_number(true_stationarity),
            format_number(rec.merit),
            format_number(rec.rho),
            format_number(rec.alpha),
            str(rec.fom_solves),
            str(rec.rom_solves),
            str(rec.basis_size),
        ])
    return rows


def write_history(
    path: Union[str, Path],
    history: Iterable[IterationRecord],
    parameters: dict[str, Any],
    exact: bool,
) -> None:
    buf = io.StringIO()
    buf.write(FORMAT_LINE + '\n')
    for key in sorted(parameters):
        buf.write(f'# {key}={_param_text(parameters[key])}\n')
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(COLUMNS)
    writer.writerows(history_rows(history, exact))
    Path(path).write_text(buf.getvalue())


def _param_text(value: Any) -> str:
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, dict):
        return ','.join(
            f'{k}:{_param_text(v)}' for k, v in sorted(value.items())
        )
    return str(value)


@dataclass
class History:
    path: str
    parameters: dict[str, str] = field(default_factory=dict)
    rows: list[dict[str, float]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return int(self.rows[-1]['k'])

    @property
    def fom_solves(self) -> int:
        return int(self.rows[-1]['fom_solves'])

    @property
    def rom_solves(self) -> int:
        return int(self.rows[-1]['rom_solves'])

    @property
    def final_stationarity(self) -> float:
        last = self.rows[-1]
        if math.isnan(last['true_stationarity']):
            return last['model_stationarity']
        return last['true_stationarity']

    @property
    def final_feasibility(self) -> float:
        return self.rows[-1]['model_feasibility']


def read_history(path: Union[str, Path]) -> History:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f'{path}: {e}')
    history = History(str(path))
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_LINE:
        raise ParseError(f'{path}:1: not a history file')
    header_seen = False
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith('#'):
            key, sep, value = line[1:].strip().partition('=')
            if not sep:
                raise ParseError(f'{path}:{lineno}: malformed parameter')
            history.parameters[key] = value
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if tuple(fields) != COLUMNS:
                raise ParseError(f'{path}:{lineno}: unexpected columns')
            header_seen = True
            continue
        if len(fields) != len(COLUMNS):
            raise ParseError(
                f'{path}:{lineno}: expected {len(COLUMNS)} fields, '
                f'got {len(fields)}'
            )
        try:
            row = {
                name: (int(v) if name in INT_COLUMNS else float(v))
                for name, v in zip(COLUMNS, fields)
            }
        except ValueError as e:
            raise ParseError(f'{path}:{lineno}: {e}')
        if history.rows and row['k'] != history.rows[-1]['k'] + 1:
            raise ParseError(f'{path}:{lineno}: iterations out of order')
        history.rows.append(row)
    if not history.rows:
        raise ParseError(f'{path}:{len(lines)}: no iterations recorded')
    return history


def summary_text(
    status: Status,
    state: IterateState,
    history: list[IterationRecord],
    exact: bool,
) -> str:
    last = history[-1] if history else None
    if last is None:
        stationarity = feasibility = objective = math.nan
    else:
        objective = last.objective
        stationarity = last.stationarity
        feasibility = last.feasibility
        if not exact and last.true_stationarity is not None:
            stationarity = last.true_stationarity
            feasibility = last.true_feasibility
    counts = state.eval_counts
    lines = [
        f'status: {status.value}',
        f'iterations: {state.k}',
        f'fom_evaluations: {counts.fom_solves}',
        f'rom_evaluations: {counts.rom_state}',
        'max_basis_size: %d' % max(
            (rec.basis_size for rec in history), default=0,
        ),
        f'final_objective: {format_number(objective)}',
        f'final_feasibility: {format_number(feasibility)}',
        f'final_stationarity: {format_number(stationarity)}',
    ]
    return '\n'.join(lines) + '\n'


def compare_report(a: History, b: History) -> str:
    """Side-by-side counts and final residuals of two runs."""
    rows = [
        ('iterations', a.iterations, b.iterations),
        ('fom_evaluations', a.fom_solves, b.fom_solves),
        ('rom_evaluations', a.rom_solves, b.rom_solves),
        ('final_stationarity', a.final_stationarity, b.final_stationarity),
        ('final_feasibility', a.final_feasibility, b.final_feasibility),
    ]
    out = [f'{"":20} {"A":>24} {"B":>24} {"B - A":>24}']
    for name, va, vb in rows:
        out.append(
            f'{name:20} {format_number(va):>24} {format_number(vb):>24} '
            f'{format_number(vb - va):>24}'
        )
    out.append(f'A: {a.path}')
    out.append(f'B: {b.path}')
    if a.fom_solves < b.fom_solves:
        out.append('fewer FOM evaluations: A')
    elif b.fom_solves < a.fom_solves:
        out.append('fewer FOM evaluations: B')
    else:
        out.append('fewer FOM evaluations: tie')
    return '\n'.join(out) + '\n'
