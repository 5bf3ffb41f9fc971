"""Plain-text class files.

Layout::

    # lp-tournament class file
    version = 1
    backend = tabular            (or linear)
    p = 6.0                      (optional)
    M = 2.0                      (optional)
    midpoint_closed = true
    source = student_t df=5.5 scale=0.61 dim=3     (linear only)
    [probs]                      (tabular only: one row of atom probabilities)
    0.25 0.25 0.5
    [members]                    (label, then atom values or weights)
    f0 0.0 1.0 -1.0
    [target]                     (optional)
    Y 0.1 0.2 0.3                (tabular: target values on the atoms)
    f0 0.1 0.2 noise=student_t df=5.5 scale=0.3    (linear: weights then noise)

Floats are written with ``repr``, which round-trips exactly.
"""

from __future__ import annotations

import numpy as np

from .model import (ConstructionError, FunctionTable, GenerativeSource, HypothesisClass,
                    TabularSpace, TargetRule, Triplet)

VERSION = 1


def _source_spec(src: GenerativeSource) -> str:
    params = " ".join(f"{k}={float(v)!r}" for k, v in src.params.items())
    return f"{src.family} {params} dim={src.dim}"


def _parse_source(text: str) -> GenerativeSource:
    family, *items = text.split()
    params = dict(item.split("=", 1) for item in items)
    dim = int(params.pop("dim", 1))
    return GenerativeSource(family, {k: float(v) for k, v in params.items()}, dim=dim)


def dumps(H: HypothesisClass, target=None) -> str:
    lines = ["# lp-tournament class file", f"version = {VERSION}", f"backend = {H.backend}"]
    if H.p is not None:
        lines.append(f"p = {float(H.p)!r}")
    if H.M is not None:
        lines.append(f"M = {float(H.M)!r}")
    lines.append(f"midpoint_closed = {str(H.midpoint_closed).lower()}")
    if H.backend == "linear":
        lines.append(f"source = {_source_spec(H.source)}")
    else:
        lines += ["[probs]", " ".join(repr(float(v)) for v in H.space.probs)]
    lines.append("[members]")
    for label, row in zip(H.labels, H.table):
        if any(c.isspace() for c in label):
            raise ValueError(f"label {label!r} contains whitespace")
        lines.append(" ".join([label, *(repr(float(v)) for v in row)]))
    if target is not None:
        lines.append("[target]")
        if isinstance(target, FunctionTable):
            lines.append(" ".join([target.label, *(repr(float(v)) for v in target.values)]))
        else:
            noise = _source_spec(target.noise)
            lines.append(" ".join(["f0", *(repr(float(v)) for v in target.f0), f"noise={noise}"]))
    return "\n".join(lines) + "\n"


def loads(text: str):
    """Parse a class file; returns ``(H, target)`` with ``target`` possibly None."""
    header, sections, current = {}, {}, None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        else:
            sections[current].append(line)
    if int(header.get("version", VERSION)) != VERSION:
        raise ConstructionError(f"unsupported class file version {header['version']}")
    backend = header.get("backend")
    p = float(header["p"]) if "p" in header else None
    M = float(header["M"]) if "M" in header else None
    closed = header.get("midpoint_closed", "true").lower() == "true"
    labels, rows = [], []
    for line in sections.get("members", []):
        label, *vals = line.split()
        labels.append(label)
        rows.append([float(v) for v in vals])
    if not rows:
        raise ConstructionError("class file has no members")
    target = None
    if backend == "tabular":
        (probs_line,) = sections["probs"]
        space = TabularSpace(np.array([float(v) for v in probs_line.split()]))
        H = HypothesisClass.tabular(space, np.array(rows), labels, midpoint_closed=closed, p=p, M=M)
        for line in sections.get("target", []):
            label, *vals = line.split()
            target = FunctionTable(space, np.array([float(v) for v in vals]), label)
    elif backend == "linear":
        source = _parse_source(header["source"])
        H = HypothesisClass.linear(source, np.array(rows), labels, midpoint_closed=closed, p=p, M=M)
        for line in sections.get("target", []):
            head, _, noise = line.partition("noise=")
            _, *vals = head.split()
            target = TargetRule(np.array([float(v) for v in vals]), _parse_source(noise))
    else:
        raise ConstructionError(f"unknown backend {backend!r}")
    return H, target


def write_class(path, H: HypothesisClass, target=None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(H, target))


def read_class(path):
    with open(path) as fh:
        return loads(fh.read())


def read_triplet(path, name: str = "file") -> Triplet:
    H, target = read_class(path)
    if target is None:
        raise ConstructionError("class file has no [target] section")
    return Triplet(H, target, name=name)
