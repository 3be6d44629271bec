"""Persistence of models, identification results, and estimator gains.

JSON carries structure and small matrices; wide matrices (the batch
sensitivity blocks and stacked gains) go to a binary sidecar of raw
little-endian doubles so artifact files stay loadable without numpy text
parsing.  Floats in JSON round-trip exactly (shortest-repr encoding).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactFormatError
from .estimator import EstimatorGain
from .models import MarkovSet

MAGIC = b"RHFEMAT1"
_HEADER = struct.Struct("<8sII")  # magic, rows, cols: 16 bytes


def _mat_to_list(m: np.ndarray) -> list:
    return np.asarray(m, dtype=float).tolist()


def _mat_from_list(obj, name: str) -> np.ndarray:
    try:
        return np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ArtifactFormatError(f"field {name!r} is not a numeric matrix") from exc


def write_matrix_record(fh, m: np.ndarray) -> None:
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(m, dtype="<f8")))
    fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
    fh.write(m.tobytes(order="C"))


def read_matrix_record(fh) -> np.ndarray:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ArtifactFormatError("truncated sidecar header")
    magic, rows, cols = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ArtifactFormatError(f"bad sidecar magic {magic!r}")
    payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ArtifactFormatError("truncated sidecar payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def write_sidecar(path, matrices: list) -> None:
    with open(path, "wb") as fh:
        for m in matrices:
            write_matrix_record(fh, m)


def read_sidecar(path, count: int) -> list:
    out = []
    with open(path, "rb") as fh:
        for _ in range(count):
            out.append(read_matrix_record(fh))
    return out


# ---------------------------------------------------------------- models

def save_model(model, path) -> None:
    doc = {
        "kind": "state_space_model",
        "n_x": model.n,
        "n_u": model.n_u,
        "n_y": model.n_y,
        "n_f": model.n_f,
        "n_w": model.n_w,
    }
    for name in ("A", "B", "C", "D", "E", "F", "G", "Q", "R"):
        doc[name] = _mat_to_list(getattr(model, name))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path):
    from .models import StateSpaceModel

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "state_space_model":
        raise ArtifactFormatError(f"{path}: not a model file")
    mats = {k: _mat_from_list(doc[k], k) for k in ("A", "B", "C", "D", "E", "F", "G", "Q", "R")}
    return StateSpaceModel(**mats)


# -------------------------------------------------- identification result

def save_identification(markov: MarkovSet, path) -> None:
    """JSON next to a `.mats` sidecar holding the wide sensitivity blocks
    in order M_u[0..p], M_y[0..p], M_f[0..p]."""
    path = Path(path)
    doc = {
        "kind": "identification_result",
        "p": markov.p,
        "n_columns": markov.n_columns,
        "sigma_e": _mat_to_list(markov.sigma_e),
        "H_u": [_mat_to_list(h) for h in markov.H_u],
        "H_y": [_mat_to_list(h) for h in markov.H_y],
        "H_f": [_mat_to_list(h) for h in markov.H_f],
    }
    mats = []
    if markov.has_sensitivities:
        sidecar = path.with_suffix(path.suffix + ".mats")
        doc["sidecar"] = sidecar.name
        doc["sidecar_order"] = ["M_u", "M_y", "M_f"]
        for group in (markov.M_u, markov.M_y, markov.M_f):
            mats.extend(group)
        write_sidecar(sidecar, mats)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_identification(path) -> MarkovSet:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "identification_result":
        raise ArtifactFormatError(f"{path}: not an identification file")
    p = int(doc["p"])
    h_u = [_mat_from_list(h, "H_u") for h in doc["H_u"]]
    h_y = [_mat_from_list(h, "H_y") for h in doc["H_y"]]
    h_f = [_mat_from_list(h, "H_f") for h in doc["H_f"]]
    m_u = m_y = m_f = None
    if "sidecar" in doc:
        mats = read_sidecar(path.parent / doc["sidecar"], 3 * (p + 1))
        m_u = mats[: p + 1]
        m_y = mats[p + 1 : 2 * (p + 1)]
        m_f = mats[2 * (p + 1) :]
    return MarkovSet(
        H_u=h_u,
        H_y=h_y,
        H_f=h_f,
        sigma_e=_mat_from_list(doc["sigma_e"], "sigma_e"),
        M_u=m_u,
        M_y=m_y,
        M_f=m_f,
        p=p,
        n_columns=int(doc["n_columns"]),
    )


# --------------------------------------------------------- estimator gain

def save_estimator(gain: EstimatorGain, path) -> None:
    """JSON header with the big matrices (Gmat, T_y, T_u) in a sidecar."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".mats")
    meta = {k: v for k, v in gain.meta.items() if isinstance(v, (int, float, str, bool))}
    doc = {
        "kind": "estimator_gain",
        "estimator_kind": gain.kind,
        "L": gain.L,
        "m": gain.m,
        "tau": gain.tau,
        "gamma_f2": gain.meta.get("gamma_f2"),
        "gamma_z2": gain.meta.get("gamma_z2"),
        "meta": meta,
        "dims": {
            "Gmat": list(gain.Gmat.shape),
            "T_y": list(gain.T_y.shape),
            "T_u": list(gain.T_u.shape),
        },
        "sidecar": sidecar.name,
        "sidecar_order": ["Gmat", "T_y", "T_u"],
    }
    write_sidecar(sidecar, [gain.Gmat, gain.T_y, gain.T_u])
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_estimator(path) -> EstimatorGain:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "estimator_gain":
        raise ArtifactFormatError(f"{path}: not an estimator file")
    gmat, t_y, t_u = read_sidecar(path.parent / doc["sidecar"], 3)
    for name, m in (("Gmat", gmat), ("T_y", t_y), ("T_u", t_u)):
        if list(m.shape) != doc["dims"][name]:
            raise ArtifactFormatError(f"{path}: sidecar {name} shape mismatch")
    meta = dict(doc.get("meta", {}))
    for key in ("gamma_f2", "gamma_z2"):
        if doc.get(key) is not None:
            meta[key] = float(doc[key])
    return EstimatorGain(
        Gmat=gmat,
        T_y=t_y,
        T_u=t_u,
        L=int(doc["L"]),
        m=int(doc["m"]),
        tau=int(doc["tau"]),
        kind=doc["estimator_kind"],
        meta=meta,
    )
