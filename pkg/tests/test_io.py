import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmrlm import io
from gmrlm.cgmm import ComplexGaussian, ErrorSampleSet, MixtureModel
from gmrlm.grid import ComplexField, GridSpec, ScattererField, build_receivers
from gmrlm.helmholtz import DataRecord

from conftest import bump


def test_field_round_trip_real(tmp_path, bump_q):
    io.write_field(tmp_path / "q.csv", bump_q)
    back = io.read_field(tmp_path / "q.csv")
    assert isinstance(back, ScattererField)
    assert back.grid == bump_q.grid
    assert np.array_equal(back.values, bump_q.values)
    head = (tmp_path / "q.csv").read_text().splitlines()[0]
    assert head == "# 33,33,-1.1499999999999999,1.1499999999999999,-1.1499999999999999,1.1499999999999999"


def test_field_round_trip_complex(tmp_path, grid33):
    rng = np.random.default_rng(0)
    u = ComplexField(grid33, rng.standard_normal(grid33.shape) + 1j * rng.standard_normal(grid33.shape))
    io.write_field(tmp_path / "u.csv", u)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert len(lines) == 34 and len(lines[1].split(",")) == 66
    back = io.read_field(tmp_path / "u.csv")
    assert np.array_equal(back.values, u.values)


def test_data_round_trip(tmp_path):
    rec = build_receivers(12, 1.0)
    rng = np.random.default_rng(1)
    d = DataRecord(3.3, 0.7, rng.standard_normal(12) + 1j * rng.standard_normal(12))
    io.write_data(tmp_path / "d.csv", d, rec)
    assert (tmp_path / "d.csv").read_text().splitlines()[1] == "index,x,y,re,im"
    d2, rec2 = io.read_data(tmp_path / "d.csv")
    assert d2.kappa == 3.3 and d2.angle == 0.7
    assert np.array_equal(d2.values, d.values)
    assert np.array_equal(rec2.points, rec.points)


@settings(max_examples=20, deadline=None)
@given(ns=st.integers(1, 6), nd=st.integers(1, 5), seed=st.integers(0, 1000))
def test_error_samples_bit_exact(tmp_path_factory, ns, nd, seed):
    rng = np.random.default_rng(seed)
    es = ErrorSampleSet(1.7, (rng.standard_normal((ns, nd)) + 1j * rng.standard_normal((ns, nd))) * 1e-7, 0.25)
    p = tmp_path_factory.mktemp("es") / "e.csv"
    io.write_error_samples(p, es)
    back = io.read_error_samples(p)
    assert np.array_equal(back.samples, es.samples)
    assert (back.kappa, back.angle) == (1.7, 0.25)


def test_error_sample_header(tmp_path):
    es = ErrorSampleSet(2.0, np.ones((2, 3), complex))
    io.write_error_samples(tmp_path / "e.csv", es)
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "# kappa=2 angle=0 Ns=2 Nd=3"


@pytest.mark.parametrize("angle", [None, 1.25])
def test_mixture_round_trip(tmp_path, angle):
    rng = np.random.default_rng(2)
    comps = []
    for _ in range(3):
        B = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        comps.append(ComplexGaussian(rng.standard_normal(4) + 1j * rng.standard_normal(4), B @ B.conj().T))
    w = np.array([0.2, 0.3, 0.5])
    m = MixtureModel(w, tuple(comps), 2.5, 1e-6, angle)
    io.write_mixture(tmp_path / "m.txt", m)
    back = io.read_mixture(tmp_path / "m.txt")
    assert np.array_equal(back.weights, m.weights)
    assert np.array_equal(back.means, m.means)
    assert np.array_equal(back.covariances, m.covariances)
    assert (back.kappa_tag, back.delta_reg, back.angle_tag) == (2.5, 1e-6, angle)


def test_bad_files(tmp_path):
    (tmp_path / "bad.txt").write_text("hello\n")
    with pytest.raises(io.FormatError):
        io.read_mixture(tmp_path / "bad.txt")
    with pytest.raises(io.FormatError):
        io.read_field(tmp_path / "bad.txt")
    (tmp_path / "short.csv").write_text("# kappa=1 angle=0 Ns=2 Nd=1\n0,1,2\n")
    with pytest.raises(io.FormatError):
        io.read_error_samples(tmp_path / "short.csv")


def test_run_report(tmp_path):
    src = tmp_path / "input.txt"
    src.write_text("x")
    a = io.run_report(tmp_path / "new" / "dir", "invert", "k = 1\n", seeds={"s": 1},
                      inputs=[src], timings={"total": 1.0})
    b = io.run_report(tmp_path / "other", "invert", "k = 1\n", seeds={"s": 1},
                      inputs=[src], timings={"total": 2.0})
    ma, mb = json.loads(a.read_text()), json.loads(b.read_text())
    assert a.exists()
    for m in (ma, mb):
        m.pop("timestamp")
        m.pop("timings")
    assert ma == mb
    assert list(ma["inputs"]) == [str(src)]
