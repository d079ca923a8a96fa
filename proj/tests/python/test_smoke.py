import json
import math

import numpy as np
import pytest

import sflow


@pytest.fixture(scope="module")
def c50():
    return sflow.Space(200), sflow.presets.cubic(50)


def test_dirichlet_morse_indices(c50):
    space, problem = c50
    assert sflow.restricted_spectrum(space, problem, 0.2)["morse"] == 1
    assert sflow.restricted_spectrum(space, problem, 0.5)["morse"] == 2


def test_spectral_flow_c50(c50):
    space, problem = c50
    r = sflow.spectral_flow(space, problem, 0.2, 0.5)
    assert r["value"] == -1
    assert r["value"] == r["morse_a"] - r["morse_b"]
    assert sum(c["sign"] for c in r["crossings"]) == -1


def test_detect_and_verify(c50):
    space, problem = c50
    report = sflow.detect(space, problem, 0.2, 0.5)
    assert len(report["candidates"]) == 1
    assert abs(report["candidates"][0]["t"] - math.pi / math.sqrt(50)) < 1e-3
    v = sflow.verify(space, problem, report, steps=5)
    assert v["candidates"][0]["status"] == "verified"
    side = next(s for s in ("plus", "minus") if v["candidates"][0][s]["verified"])
    amps = [p["amplitude"] for p in v["candidates"][0][side]["points"] if p["status"] == "converged"]
    assert len(amps) == 5
    assert all(b < a for a, b in zip(amps, amps[1:]))


def test_subcritical_has_no_candidates():
    report = sflow.detect(sflow.Space(100), sflow.presets.cubic(5), 0.2, 0.5)
    assert report["sfl"] == 0
    assert report["candidates"] == []


def test_projection_routes_agree():
    space = sflow.Space(40, 2)
    direct = sflow.projection(space, 0.37, "direct")
    for route in ("complement", "kernel", "chi"):
        assert np.abs(sflow.projection(space, 0.37, route) - direct).max() < 1e-10
    assert np.allclose(direct @ direct, direct, atol=1e-10)


def test_gap_between_nodes_matches_closed_form():
    space = sflow.Space(100)
    t, s = 0.3, 0.5
    assert abs(sflow.gap_distance(space, t, s) - math.sqrt((s - t) / (s * (1 - t)))) < 1e-10


def test_relative_morse_index():
    rng = np.random.default_rng(4)
    gram = np.eye(5)
    s = np.diag([-1.0, -2.0, 3.0, 4.0, 5.0])
    t = np.diag([-1.0, 2.0, 3.0, 4.0, 5.0])
    assert sflow.relative_morse_index(gram, s, t) == 1
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    assert sflow.relative_morse_index(gram, q @ s @ q.T, t) == 1


def test_constrained_gradient_finite_differences():
    space, problem = sflow.Space(30), sflow.presets.cubic(50)
    t = 0.41
    w = sflow.constrained_basis(space, t)
    u = w @ np.linspace(-1, 1, w.shape[1])
    g = sflow.constrained_gradient(space, problem, t, u)
    eps = 1e-5
    fd = np.array([(sflow.functional_value(space, problem, u + eps * w[:, i])
                    - sflow.functional_value(space, problem, u - eps * w[:, i])) / (2 * eps)
                   for i in range(w.shape[1])])
    assert np.linalg.norm(fd - g) < 1e-6 * max(1.0, np.linalg.norm(g))


def test_errors_carry_codes():
    with pytest.raises(sflow.Error) as info:
        sflow.spectral_flow(sflow.Space(40), sflow.presets.identity(), 0.6, 0.2)
    assert info.value.code == "InvalidArgument"
    with pytest.raises(sflow.Error):
        sflow.Mesh([0.0, 0.6, 0.3, 1.0])


def test_cli_round_trip(tmp_path):
    cfg = tmp_path / "c5.cfg"
    cfg.write_text("problem = cubic\nc = 5\nmesh.N = 60\n")
    code, out, _ = sflow.run_cli(["flow", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    assert json.loads((tmp_path / "flow.json").read_text())["sfl"] == 0
    code, _, err = sflow.run_cli(["scan", "--config", str(tmp_path / "missing.cfg")])
    assert code == 1
