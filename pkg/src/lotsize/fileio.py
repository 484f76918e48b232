"""Line-oriented instance files.

One ``key = value`` pair per line; ``#`` starts a comment. Series are
whitespace-separated numbers. Example::

    name = ex1
    demand = poisson
    rates = 20 40 60 40
    K = 100
    z = 0
    h = 1
    b = 10

Normal demand uses ``means`` plus either ``cv`` or ``stds``; empirical demand
gives one ``pmf.<t>`` line per period. Optional keys: ``x0``, ``qmax``, ``N``
(partitions), ``grid`` (two integers) and ``T``, which must then agree with
the series lengths.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import replace

from .demand import CostParams, DemandModel
from .sdp import Instance, InventoryGrid

SCALARS = {"name", "T", "demand", "K", "z", "h", "b", "x0", "qmax", "N", "cv"}
SERIES = {"rates", "means", "stds", "grid"}


class InstanceFileError(ValueError):
    """Raised for unparseable or invalid instance files; lists every problem."""

    def __init__(self, source, problems):
        self.source = source
        self.problems = list(problems)
        super().__init__(f"{source}: " + "; ".join(self.problems))


def _number(text):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def parse_instance(text: str, source: str = "<string>") -> Instance:
    fields, lines, problems = {}, {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        known = key in SCALARS or key in SERIES or (key.startswith("pmf.") and key[4:].isdigit())
        if not known:
            problems.append(f"line {lineno}: field '{key}': unknown field")
            continue
        if key in fields:
            problems.append(f"line {lineno}: field '{key}': duplicate")
            continue
        try:
            if key in ("name", "demand"):
                fields[key] = value
            elif key in SCALARS:
                fields[key] = _number(value)
            else:
                fields[key] = [_number(v) for v in value.split()]
        except ValueError:
            problems.append(f"line {lineno}: field '{key}': not a number: {value!r}")
            continue
        lines[key] = lineno
    if problems:
        raise InstanceFileError(source, problems)
    try:
        return _build(fields, lines)
    except _Invalid as exc:
        raise InstanceFileError(source, exc.problems) from None


class _Invalid(Exception):
    def __init__(self, problems):
        self.problems = problems


def _build(f, lines):
    problems = []

    def where(key):
        return f"line {lines[key]}: field '{key}'" if key in lines else f"field '{key}'"

    for key in ("demand", "K", "z", "h", "b"):
        if key not in f:
            problems.append(f"field '{key}': missing")
    for key in ("K", "z", "h", "b"):
        if key in f and not f[key] >= 0:
            problems.append(f"{where(key)}: must be >= 0, got {f[key]}")
    kind = f.get("demand")
    demand = None
    pmf_keys = sorted((k for k in f if k.startswith("pmf.")), key=lambda k: int(k[4:]))
    if kind == "poisson":
        if "rates" not in f:
            problems.append("field 'rates': missing for poisson demand")
        elif any(r < 0 for r in f["rates"]):
            problems.append(f"{where('rates')}: rates must be >= 0")
        else:
            demand = lambda: DemandModel.poisson(f["rates"])
    elif kind == "normal":
        if "means" not in f:
            problems.append("field 'means': missing for normal demand")
        elif ("cv" in f) == ("stds" in f):
            problems.append("normal demand needs exactly one of 'cv' or 'stds'")
        elif "stds" in f and len(f["stds"]) != len(f["means"]):
            problems.append(f"{where('stds')}: {len(f['stds'])} values, expected {len(f['means'])}")
        else:
            demand = lambda: DemandModel.normal(f["means"], cv=f.get("cv"), stds=f.get("stds"))
    elif kind == "empirical":
        if not pmf_keys:
            problems.append("empirical demand needs pmf.1 .. pmf.T lines")
        elif [int(k[4:]) for k in pmf_keys] != list(range(1, len(pmf_keys) + 1)):
            problems.append("pmf lines must be numbered 1..T without gaps")
        else:
            demand = lambda: DemandModel.empirical([f[k] for k in pmf_keys])
    elif kind is not None:
        problems.append(f"{where('demand')}: unknown demand kind {kind!r}")
    extra = {"poisson": ("means", "stds", "cv"), "normal": ("rates",), "empirical": ("rates", "means", "stds", "cv")}
    for key in extra.get(kind, ()):
        if key in f:
            problems.append(f"{where(key)}: not used by {kind} demand")
    if kind != "empirical" and pmf_keys:
        problems.append(f"{where(pmf_keys[0])}: pmf lines only apply to empirical demand")
    for key in ("x0", "qmax", "N", "T"):
        if key in f and not isinstance(f[key], int):
            problems.append(f"{where(key)}: must be an integer")
    if "grid" in f and (len(f["grid"]) != 2 or not all(isinstance(v, int) for v in f["grid"])):
        problems.append(f"{where('grid')}: expected two integers 'x_min x_max'")
    if problems:
        raise _Invalid(problems)
    try:
        model = demand()
    except ValueError as exc:
        raise _Invalid([str(exc)]) from None
    if "T" in f and f["T"] != model.T:
        raise _Invalid([f"{where('T')}: T = {f['T']} but the demand series has {model.T} periods"])
    try:
        costs = CostParams(f["K"], f["z"], f["h"], f["b"])
        grid = InventoryGrid(*f["grid"]) if "grid" in f else None
        return Instance(model, costs, x0=f.get("x0", 0), q_max=f.get("qmax"),
                        partitions=f.get("N"), grid=grid, name=f.get("name", ""))
    except ValueError as exc:
        raise _Invalid([str(exc)]) from None


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    inst = parse_instance(text, source=str(path))
    if not inst.name:
        inst = replace(inst, name=os.path.splitext(os.path.basename(str(path)))[0])
    return inst


def _fmt(values):
    return " ".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def format_instance(inst: Instance) -> str:
    """Text that :func:`parse_instance` turns back into an equal instance."""
    m = inst.demand
    out = []
    if inst.name:
        out.append(f"name = {inst.name}")
    out += [f"T = {m.T}", f"demand = {m.kind}"]
    if m.kind == "poisson":
        out.append(f"rates = {_fmt(m.means)}")
    elif m.kind == "normal":
        out += [f"means = {_fmt(m.means)}", f"stds = {_fmt(m.stds)}"]
    else:
        out += [f"pmf.{t} = {_fmt(p)}" for t, p in enumerate(m.pmfs, 1)]
    c = inst.costs
    out += [f"K = {c.K!r}", f"z = {c.z!r}", f"h = {c.h!r}", f"b = {c.b!r}", f"x0 = {inst.x0}"]
    if inst.q_max is not None:
        out.append(f"qmax = {inst.q_max}")
    if inst.partitions is not None:
        out.append(f"N = {inst.partitions}")
    if inst.grid is not None:
        out.append(f"grid = {inst.grid.x_min} {inst.grid.x_max}")
    return "\n".join(out) + "\n"


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save_instance(inst: Instance, path):
    write_atomic(path, format_instance(inst))
