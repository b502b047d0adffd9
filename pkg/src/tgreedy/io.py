"""
File formats: sample CSV, DSMOM1 moment files, trace/curve/bound CSVs, run manifests.

Floats are written with ``repr`` (shortest round-trip form) so that output
bytes depend only on the values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import __version__
from .evaluate import CurveSeries
from .exceptions import ValidationError
from .moments import DomainMoments, LabeledSampleSet
from .select import SelectionTrace, StepRecord

MOMENT_MAGIC = b"DSMOM1"
MOMENT_SUFFIX = ".dsmom"
TRACE_COLUMNS = ("step", "feature", "method", "t_value", "mu_hat", "sigma_hat",
                 "weight_delta", "train_loss")
CURVE_COLUMNS = ("step", "source_auroc", "target_auroc", "t_value")
BOUND_COLUMNS = ("t", "empirical", "bound")
MANIFEST_NAME = "manifest.json"


def fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


# -- sample CSV ---------------------------------------------------------------

def read_samples(path) -> Tuple[Dict[str, LabeledSampleSet], List[str]]:
    """Parse ``domain,label,f0,...`` rows, grouped by domain in first-seen order."""
    path = Path(path)
    rows: Dict[str, Tuple[list, list]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(header) < 3 or header[0].strip() != "domain" or header[1].strip() != "label":
            raise ValidationError(f"{path}:1: header must start with 'domain,label,' "
                                  "followed by feature columns")
        names = [h.strip() for h in header[2:]]
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ValidationError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(vals)):
                raise ValidationError(f"{path}:{lineno}: non-finite value")
            feats, labels = rows.setdefault(row[0].strip(), ([], []))
            feats.append(vals[1:])
            labels.append(vals[0])
    if not rows:
        raise ValidationError(f"{path}: no sample rows")
    data = {d: LabeledSampleSet(np.array(f), np.array(y)) for d, (f, y) in rows.items()}
    return data, names


def write_samples(path, domains: Mapping[str, LabeledSampleSet],
                  feature_names: Sequence[str] = ()) -> None:
    first = next(iter(domains.values()))
    names = list(feature_names) or [f"f{i}" for i in range(first.n_features)]
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(["domain", "label", *names]) + "\n")
        for did, s in domains.items():
            block = np.column_stack([s.labels, s.features])
            for row in block:
                fh.write(did + "," + ",".join(map(repr, row.tolist())) + "\n")


# -- DSMOM1 moment files --------------------------------------------------------
# layout: magic | uint32 header length | UTF-8 JSON header |
#         float64 LE: second_y, cross_cov[p], gram lower triangle row-major

def write_moments(path, m: DomainMoments, feature_names: Sequence[str] = ()) -> None:
    header = json.dumps({"domain_id": m.domain_id, "p": m.dim,
                         "sample_count": m.sample_count,
                         "feature_names": list(feature_names)},
                        sort_keys=True).encode()
    tril = m.gram[np.tril_indices(m.dim)]
    body = np.concatenate([[m.second_y], m.cross_cov, tril]).astype("<f8")
    with Path(path).open("wb") as fh:
        fh.write(MOMENT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(body.tobytes())


def read_moments(path) -> Tuple[DomainMoments, List[str]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MOMENT_MAGIC):
        raise ValidationError(f"{path}: not a DSMOM1 moment file")
    off = len(MOMENT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        header = json.loads(raw[off:off + hlen].decode())
    except ValueError:
        raise ValidationError(f"{path}: corrupt header") from None
    off += hlen
    p = int(header["p"])
    body = np.frombuffer(raw, dtype="<f8", offset=off)
    expected = 1 + p + p * (p + 1) // 2
    if body.size != expected:
        raise ValidationError(f"{path}: expected {expected} values, found {body.size}")
    gram = np.zeros((p, p))
    il = np.tril_indices(p)
    gram[il] = body[1 + p:]
    gram.T[il] = body[1 + p:]
    m = DomainMoments(header["domain_id"], body[1:1 + p].copy(), gram, float(body[0]),
                      int(header["sample_count"]))
    return m, list(header.get("feature_names", []))


def moment_filename(domain_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", domain_id) + MOMENT_SUFFIX


def load_moment_dir(path) -> Tuple[List[DomainMoments], List[str]]:
    path = Path(path)
    files = sorted(path.glob("*" + MOMENT_SUFFIX)) if path.is_dir() else [path]
    if not files:
        raise ValidationError(f"{path}: no {MOMENT_SUFFIX} files")
    domains, names = [], []
    for f in files:
        m, n = read_moments(f)
        domains.append(m)
        names = names or n
    return domains, names


def read_matrix_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# -- traces and curves ----------------------------------------------------------

def write_trace(path, trace: SelectionTrace) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for s in trace.steps:
            fh.write(",".join([str(s.step), str(s.feature), s.method, fmt(s.t_value),
                               fmt(s.mu_hat), fmt(s.sigma_hat), fmt(s.weight_delta),
                               fmt(s.train_loss)]) + "\n")


def read_trace(path, n_features: int) -> SelectionTrace:
    steps = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValidationError(f"{path}: trace columns must be {','.join(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = StepRecord(int(row["step"]), int(row["feature"]), row["method"],
                                 float(row["t_value"]), float(row["mu_hat"]),
                                 float(row["sigma_hat"]), float(row["weight_delta"]),
                                 float(row["train_loss"]))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= rec.feature < n_features:
                raise ValidationError(f"{path}:{lineno}: feature {rec.feature} out of range")
            steps.append(rec)
    method = steps[0].method if steps else ""
    weights = np.zeros(n_features)
    for rec in steps:
        weights[rec.feature] += rec.weight_delta
    return SelectionTrace(method, n_features, tuple(steps), weights, "loaded")


def write_curve(path, curve: CurveSeries) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for k, s, t, v in zip(curve.steps, curve.source_auroc, curve.target_auroc,
                              curve.t_values):
            fh.write(f"{int(k)},{fmt(s)},{fmt(t)},{fmt(v)}\n")


def read_curve(path, label: str = "") -> CurveSeries:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    if tuple(data.dtype.names) != CURVE_COLUMNS:
        raise ValidationError(f"{path}: curve columns must be {','.join(CURVE_COLUMNS)}")
    return CurveSeries(data["step"], data["source_auroc"], data["target_auroc"],
                       data["t_value"], label)


def write_exceedance(path, report) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(BOUND_COLUMNS) + "\n")
        for t, e, b in zip(report.t_grid, report.empirical_freq, report.bound_value):
            fh.write(f"{fmt(t)},{fmt(e)},{fmt(b)}\n")


# -- manifests ------------------------------------------------------------------

def config_digest(config: Mapping) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out_dir, command: str, config: Mapping, seeds: Iterable[int],
                   inputs: Iterable, outputs: Iterable) -> dict:
    """Write the directory's single ``manifest.json`` (replacing any earlier one)."""
    manifest = {
        "command": command,
        "config": dict(config),
        "config_digest": config_digest(config),
        "seeds": [int(s) for s in seeds],
        "inputs": [str(p) for p in inputs],
        "outputs": [str(Path(p).name) for p in outputs],
        "tool_version": __version__,
    }
    Path(out_dir, MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
