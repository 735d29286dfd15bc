"""File formats for schedules, spectra and tabular reports.

Floats are written with ``repr`` so every value reads back bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .bloch import Constant, ControlSchedule, Dirac
from .errors import ScheduleError, ScheduleFormatError, PreconditionError
from .fourier import Spectrum
from .linear import SampledControl


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def schedule_to_records(schedule: ControlSchedule) -> list:
    out = []
    for e in schedule.events:
        if isinstance(e, Dirac):
            out.append({"type": "dirac", "t": e.time, "beta": e.beta, "gamma": e.gamma})
        else:
            out.append({"type": "const", "t0": e.t0, "t1": e.t1, "u": e.u, "v": e.v})
    out.append({"horizon": schedule.horizon})
    return out


def _number(rec: dict, key: str, where: str) -> float:
    if key not in rec:
        raise ScheduleError(f"{where}: missing field '{key}'")
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScheduleError(f"{where}: field '{key}' must be a number")
    return float(v)


def schedule_from_records(data) -> ControlSchedule:
    """Build a schedule from the decoded JSON.

    Accepts the array form (events followed by ``{"horizon": h}``) and an
    object ``{"events": [...], "horizon": h}``.  Without a horizon record the
    horizon is the end of the last event.
    """
    if isinstance(data, dict) and "events" in data:
        items = list(data["events"])
        horizon = data.get("horizon")
    elif isinstance(data, list):
        items = []
        horizon = None
        for rec in data:
            if isinstance(rec, dict) and "horizon" in rec and "type" not in rec:
                if horizon is not None:
                    raise ScheduleError("more than one horizon record")
                horizon = rec["horizon"]
            else:
                items.append(rec)
    else:
        raise ScheduleError("schedule must be a JSON array or an object with 'events'")
    events = []
    for i, rec in enumerate(items):
        where = f"event {i}"
        if not isinstance(rec, dict):
            raise ScheduleError(f"{where}: expected an object")
        kind = rec.get("type")
        if kind == "dirac":
            events.append(Dirac(_number(rec, "t", where), _number(rec, "beta", where),
                                _number(rec, "gamma", where)))
        elif kind == "const":
            events.append(Constant(_number(rec, "t0", where), _number(rec, "t1", where),
                                   _number(rec, "u", where), _number(rec, "v", where)))
        else:
            raise ScheduleError(f"{where}: unknown type {kind!r}")
    if horizon is None:
        horizon = max((e.end for e in events), default=0.0)
    elif isinstance(horizon, bool) or not isinstance(horizon, (int, float)):
        raise ScheduleError("horizon must be a number")
    return ControlSchedule(tuple(events), float(horizon))


def dumps_schedule(schedule: ControlSchedule) -> str:
    return json.dumps(schedule_to_records(schedule), indent=1) + "\n"


def loads_schedule(text: str) -> ControlSchedule:
    """Parse schedule JSON.

    Raises
    ------
    ScheduleFormatError
        On malformed JSON, with the line and column of the problem.
    ScheduleError
        On well-formed JSON that does not describe a valid schedule.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScheduleFormatError(exc.msg, exc.lineno, exc.colno) from None
    return schedule_from_records(data)


def write_schedule(path, schedule: ControlSchedule) -> Path:
    path = Path(path)
    path.write_text(dumps_schedule(schedule))
    return path


def read_schedule(path) -> ControlSchedule:
    return loads_schedule(Path(path).read_text())


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def spectrum_to_json(spec: Spectrum) -> dict:
    return {"n_max": spec.n_max,
            "coefficients": [{"n": int(n), "re": float(c.real), "im": float(c.imag)}
                             for n, c in zip(spec.indices, spec.coefficients)]}


def spectrum_from_json(data: dict) -> Spectrum:
    try:
        n_max = int(data["n_max"])
        coeffs = {int(r["n"]): complex(float(r["re"]), float(r["im"])) for r in data["coefficients"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(f"malformed spectrum record: {exc}") from None
    return Spectrum.from_dict(coeffs, n_max)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(columns, rows))
    return path


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def control_rows(control: SampledControl):
    for t, w in zip(control.times, control.samples):
        yield (float(t), float(w.real), float(w.imag))


def read_control(path) -> SampledControl:
    header, rows = read_csv(path)
    if header != ["t", "re_w", "im_w"]:
        raise PreconditionError("control CSV needs columns t,re_w,im_w")
    arr = np.array([[float(v) for v in r] for r in rows])
    t = arr[:, 0]
    if t.size < 2 or not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=1e-12):
        raise PreconditionError("control samples must be uniformly spaced")
    return SampledControl(float(t[0]), float(t[-1]), arr[:, 1] + 1j * arr[:, 2])


def finite_or_none(v):
    """JSON-safe number (non-finite values become ``None``)."""
    v = float(v)
    return v if math.isfinite(v) else None
