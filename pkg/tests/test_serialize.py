import io
import json

import numpy as np
import pytest

from rhfe.errors import ArtifactFormatError
from rhfe.estimator import nominal_gain
from rhfe.serialize import (
    load_estimator,
    load_identification,
    load_model,
    read_matrix_record,
    read_sidecar,
    save_estimator,
    save_identification,
    save_model,
    write_matrix_record,
    write_sidecar,
)


def test_matrix_record_round_trip_exact():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((3, 7)) * np.pi
    buf = io.BytesIO()
    write_matrix_record(buf, m)
    buf.seek(0)
    out = read_matrix_record(buf)
    assert out.dtype == np.float64
    assert np.array_equal(out, m)


def test_matrix_record_rejects_bad_magic_and_truncation():
    buf = io.BytesIO(b"NOTMAGIC" + b"\x00" * 8)
    with pytest.raises(ArtifactFormatError):
        read_matrix_record(buf)
    good = io.BytesIO()
    write_matrix_record(good, np.eye(4))
    data = good.getvalue()
    with pytest.raises(ArtifactFormatError):
        read_matrix_record(io.BytesIO(data[:10]))
    with pytest.raises(ArtifactFormatError):
        read_matrix_record(io.BytesIO(data[:-8]))


def test_sidecar_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    mats = [rng.standard_normal((2, 5)), rng.standard_normal((4, 1)), np.zeros((1, 1))]
    path = tmp_path / "blocks.mats"
    write_sidecar(path, mats)
    out = read_sidecar(path, 3)
    for a, b in zip(mats, out):
        assert np.array_equal(a, b)


def test_model_round_trip(vtol, tmp_path):
    model, _ = vtol
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    for name in ("A", "B", "C", "D", "E", "F", "G", "Q", "R"):
        assert np.array_equal(getattr(loaded, name), getattr(model, name))


def test_model_load_rejects_wrong_kind(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kind": "something_else"}))
    with pytest.raises(ArtifactFormatError):
        load_model(path)


def test_identification_round_trip(vtol_ident, tmp_path):
    path = tmp_path / "ident.json"
    save_identification(vtol_ident, path)
    loaded = load_identification(path)
    assert loaded.p == vtol_ident.p
    assert loaded.n_columns == vtol_ident.n_columns
    assert np.array_equal(loaded.sigma_e, vtol_ident.sigma_e)
    for i in range(vtol_ident.p + 1):
        assert np.array_equal(loaded.H_u[i], vtol_ident.H_u[i])
        assert np.array_equal(loaded.H_y[i], vtol_ident.H_y[i])
        assert np.array_equal(loaded.H_f[i], vtol_ident.H_f[i])
        assert np.array_equal(loaded.M_u[i], vtol_ident.M_u[i])
        assert np.array_equal(loaded.M_y[i], vtol_ident.M_y[i])
        assert np.array_equal(loaded.M_f[i], vtol_ident.M_f[i])


def test_identification_without_sensitivities(vtol_ident, vtol_predictor, vtol_actuator_cfg, tmp_path):
    from rhfe.models import markov_parameters

    mk = markov_parameters(vtol_predictor, vtol_actuator_cfg, 4)
    mk.p = 4
    mk.n_columns = 0
    path = tmp_path / "true.json"
    save_identification(mk, path)
    loaded = load_identification(path)
    assert not loaded.has_sensitivities
    assert np.array_equal(loaded.H_u[3], mk.H_u[3])


def test_estimator_round_trip(vtol_ident, tmp_path):
    gain = nominal_gain(vtol_ident, 6, 10, 1)
    gain.meta["gamma_f2"] = 0.25
    gain.meta["note"] = "x"
    gain.meta["solver"] = {"status": "optimal"}  # non-scalar, dropped on save
    path = tmp_path / "gain.json"
    save_estimator(gain, path)
    loaded = load_estimator(path)
    assert np.array_equal(loaded.Gmat, gain.Gmat)
    assert np.array_equal(loaded.T_y, gain.T_y)
    assert np.array_equal(loaded.T_u, gain.T_u)
    assert (loaded.L, loaded.m, loaded.tau) == (6, 10, 1)
    assert loaded.kind == gain.kind
    assert loaded.meta["gamma_f2"] == 0.25
    assert loaded.meta["note"] == "x"
    assert "solver" not in loaded.meta


def test_estimator_shape_mismatch_detected(vtol_ident, tmp_path):
    gain = nominal_gain(vtol_ident, 6, 10, 1)
    path = tmp_path / "gain.json"
    save_estimator(gain, path)
    doc = json.loads(path.read_text())
    doc["dims"]["Gmat"] = [1, 1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ArtifactFormatError):
        load_estimator(path)


def test_non_numeric_matrix_rejected(tmp_path):
    path = tmp_path / "bad_model.json"
    doc = {"kind": "state_space_model"}
    for name in ("A", "B", "C", "D", "E", "F", "G", "Q", "R"):
        doc[name] = [[1.0]]
    doc["A"] = [["not", "numbers"]]
    path.write_text(json.dumps(doc))
    with pytest.raises(ArtifactFormatError):
        load_model(path)
