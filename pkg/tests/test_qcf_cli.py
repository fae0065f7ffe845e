import json
import warnings

import numpy as np
import pytest

from qcreg import qcf
from qcreg.cli import main
from qcreg.imaging import loss_fidelity, read_pgm, write_pgm
from qcreg.lbs import assemble
from qcreg.mesh import QCMap, build_grid_mesh
from qcreg.beltrami import square_to_faces
from qcreg.spectral import SpectralField
from qcreg.synth import make_test_card


# -- QCF ---------------------------------------------------------------------

@pytest.mark.parametrize("kind,ch", [("map", 2), ("mu", 2), ("spec", 4)])
def test_qcf_byte_roundtrip(kind, ch, rng):
    data = rng.standard_normal((5, 7, ch))
    raw = qcf.encode(kind, data)
    assert raw.startswith(b"QCF1" + f"{kind} 5 7 {ch}\n".encode())
    assert len(raw) == 4 + len(f"{kind} 5 7 {ch}\n") + data.size * 8
    k, back = qcf.decode(raw)
    assert k == kind and np.array_equal(back, data)
    assert qcf.encode(kind, back) == raw


def test_qcf_file_helpers(tmp_path, rng):
    q = QCMap(4, rng.random((16, 2)))
    qcf.save_map(tmp_path / "m.qcf", q)
    assert np.array_equal(qcf.load_map(tmp_path / "m.qcf").positions, q.positions)
    mu = 0.5 * rng.random((3, 3)) * np.exp(1j * rng.random((3, 3)))
    qcf.save_mu(tmp_path / "u.qcf", mu)
    assert np.array_equal(qcf.load_mu(tmp_path / "u.qcf"), mu)
    spec = SpectralField.from_field(mu)
    qcf.save_spec(tmp_path / "s.qcf", spec)
    assert np.array_equal(qcf.load_spec(tmp_path / "s.qcf").coefficients, spec.coefficients)
    with pytest.raises(qcf.QCFError):
        qcf.load_map(tmp_path / "u.qcf")


def test_qcf_mu_over_one_warns_and_clamps(tmp_path):
    qcf.save_mu(tmp_path / "u.qcf", np.array([[1.5, 0.2j]]))
    with pytest.warns(RuntimeWarning):
        mu = qcf.load_mu(tmp_path / "u.qcf")
    assert abs(mu[0, 0]) == pytest.approx(0.999)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert qcf.load_mu(tmp_path / "u.qcf", clamp=False)[0, 0] == 1.5


@pytest.mark.parametrize("raw", [
    b"QCF2map 1 1 2\n" + bytes(16),
    b"QCF1map 1 1 2" + bytes(16),
    b"QCF1map 1 1 3\n" + bytes(24),
    b"QCF1map one 1 2\n" + bytes(16),
    b"QCF1foo 1 1 2\n" + bytes(16),
    b"QCF1mu 1 1 2\n" + bytes(15),
    b"QCF1mu 0 1 2\n",
])
def test_qcf_rejects_malformed(raw):
    with pytest.raises(qcf.QCFError):
        qcf.decode(raw)


def test_qcf_encode_validates():
    with pytest.raises(qcf.QCFError):
        qcf.encode("map", np.zeros((2, 2, 3)))
    with pytest.raises(qcf.QCFError):
        qcf.encode("bogus", np.zeros((2, 2, 2)))


# -- CLI ---------------------------------------------------------------------

def run(*args):
    return main([str(a) for a in args])


def test_gen_mu_deterministic(tmp_path):
    a, b = tmp_path / "a.qcf", tmp_path / "b.qcf"
    assert run("gen-mu", "--size", 64, "--seed", 7, "-o", a) == 0
    assert run("gen-mu", "--size", 64, "--seed", 7, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert np.abs(qcf.load_mu(a)).max() == pytest.approx(0.6, abs=1e-12)


def test_gen_mu_validation(tmp_path, capsys):
    assert run("gen-mu", "--size", 8, "--max-norm", 1.5, "-o", tmp_path / "x") == 2
    assert "max-norm" in capsys.readouterr().err
    assert run("gen-mu", "--size", 8, "--bandwidth", 9, "-o", tmp_path / "x") == 2
    with pytest.raises(SystemExit) as info:
        run("gen-mu", "-o", tmp_path / "x")
    assert info.value.code == 2


def test_gen_mu_io_failure(tmp_path):
    assert run("gen-mu", "--size", 8, "-o", tmp_path / "missing" / "x.qcf") == 1


def test_lbs_zero_mu_identity(tmp_path):
    qcf.save_mu(tmp_path / "z.qcf", np.zeros((9, 9)))
    assert run("lbs", "--mu", tmp_path / "z.qcf", "-o", tmp_path / "m.qcf") == 0
    q = qcf.load_map(tmp_path / "m.qcf")
    assert np.abs(q.positions - build_grid_mesh(9).vertices).max() <= 1e-8


def test_lbs_dense_oracle_and_residual(tmp_path, capsys):
    assert run("gen-mu", "--size", 9, "--seed", 3, "--bandwidth", 4, "-o", tmp_path / "u.qcf") == 0
    assert run("lbs", "--mu", tmp_path / "u.qcf", "-o", tmp_path / "m.qcf") == 0
    mu = qcf.load_mu(tmp_path / "u.qcf")
    mesh = build_grid_mesh(9)
    ref = [np.linalg.solve(s.matrix.toarray(), s.rhs) for s in assemble(mesh, square_to_faces(mu, mesh))]
    q = qcf.load_map(tmp_path / "m.qcf")
    assert np.abs(q.positions - np.column_stack(ref)).max() <= 1e-10
    assert run("diagnose", "--map", tmp_path / "m.qcf", "--mu", tmp_path / "u.qcf", "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["laplacian_residual"] <= 1e-8
    assert doc["n_folded"] == 0


def test_lbs_accepts_face_layout(tmp_path):
    qcf.save_mu(tmp_path / "f.qcf", np.zeros((4, 8)))
    assert run("lbs", "--mu", tmp_path / "f.qcf", "-o", tmp_path / "m.qcf") == 0
    assert qcf.load_map(tmp_path / "m.qcf").n == 5
    qcf.save_mu(tmp_path / "bad.qcf", np.zeros((4, 6)))
    assert run("lbs", "--mu", tmp_path / "bad.qcf", "-o", tmp_path / "m.qcf") == 2


def test_lbs_rejects_garbage(tmp_path):
    (tmp_path / "g.qcf").write_bytes(b"nonsense")
    assert run("lbs", "--mu", tmp_path / "g.qcf", "-o", tmp_path / "m.qcf") == 2
    assert run("lbs", "--mu", tmp_path / "absent.qcf", "-o", tmp_path / "m.qcf") == 1


def test_diagnose_identity(tmp_path, capsys):
    qcf.save_map(tmp_path / "i.qcf", QCMap.identity(6))
    assert run("diagnose", "--map", tmp_path / "i.qcf", "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_folded"] == 0 and doc["s_folded"] == 0
    assert {"min_det", "histogram", "tail_count"} <= set(doc)
    assert run("diagnose", "--map", tmp_path / "i.qcf") == 0
    assert "n_folded: 0" in capsys.readouterr().out


def test_mu_from_map_and_compress(tmp_path, capsys):
    n = 5
    x, y = QCMap.identity(n).positions.T
    qcf.save_map(tmp_path / "s.qcf", QCMap(n, np.column_stack([2 * x, y])))
    assert run("mu-from-map", "--map", tmp_path / "s.qcf", "-o", tmp_path / "u.qcf") == 0
    mu = qcf.load_mu(tmp_path / "u.qcf")
    assert mu.shape == (4, 8) and np.allclose(mu, 1 / 3)
    qcf.save_map(tmp_path / "flat.qcf", QCMap(n, np.zeros((n * n, 2))))
    assert run("mu-from-map", "--map", tmp_path / "flat.qcf", "-o", tmp_path / "d.qcf") == 0
    assert "degenerate" in capsys.readouterr().err

    qcf.save_mu(tmp_path / "c.qcf", np.full((8, 8), 0.3j))
    assert run("compress", "--mu", tmp_path / "c.qcf", "--keep", 1, "-o", tmp_path / "o.qcf") == 0
    assert np.allclose(qcf.load_mu(tmp_path / "o.qcf"), 0.3j, atol=1e-10)
    assert run("compress", "--mu", tmp_path / "c.qcf", "--keep", 9, "-o", tmp_path / "o.qcf") == 2
    assert run("compress", "--mu", tmp_path / "u.qcf", "-o", tmp_path / "o.qcf") == 2


def test_warp_command(tmp_path):
    img = make_test_card(8)
    write_pgm(tmp_path / "i.pgm", img)
    qcf.save_map(tmp_path / "m.qcf", QCMap.identity(8))
    assert run("warp", "--image", tmp_path / "i.pgm", "--map", tmp_path / "m.qcf",
               "-o", tmp_path / "o.pgm") == 0
    assert (tmp_path / "o.pgm").read_bytes() == (tmp_path / "i.pgm").read_bytes()
    qcf.save_map(tmp_path / "m9.qcf", QCMap.identity(9))
    assert run("warp", "--image", tmp_path / "i.pgm", "--map", tmp_path / "m9.qcf",
               "-o", tmp_path / "o.pgm") == 2
    write_pgm(tmp_path / "r.pgm", np.zeros((4, 6)))
    assert run("warp", "--image", tmp_path / "r.pgm", "--map", tmp_path / "m.qcf",
               "-o", tmp_path / "o.pgm") == 2


def test_register_identical_images(tmp_path):
    write_pgm(tmp_path / "i.pgm", make_test_card(12))
    assert run("register", "--moving", tmp_path / "i.pgm", "--fixed", tmp_path / "i.pgm",
               "-o", tmp_path / "r") == 0
    trace = json.loads((tmp_path / "r_trace.json").read_text())
    assert trace["trace"][0]["total"] == 0.0
    assert trace["iterations"] == 0
    for suffix in ("_map.qcf", "_mu.qcf", "_warped.pgm", "_diagnostics.json"):
        assert (tmp_path / f"r{suffix}").exists()


def test_register_validation(tmp_path):
    write_pgm(tmp_path / "a.pgm", make_test_card(8))
    write_pgm(tmp_path / "b.pgm", make_test_card(10))
    assert run("register", "--moving", tmp_path / "a.pgm", "--fixed", tmp_path / "b.pgm",
               "-o", tmp_path / "r") == 2
    assert run("register", "--moving", tmp_path / "a.pgm", "--fixed", tmp_path / "a.pgm",
               "--alpha", -1, "-o", tmp_path / "r") == 2
    assert run("register", "--moving", tmp_path / "a.pgm", "--fixed", tmp_path / "a.pgm",
               "--spectral-keep", 20, "-o", tmp_path / "r") == 2


def test_full_pipeline(tmp_path, capsys):
    n = 32
    img = make_test_card(n)
    write_pgm(tmp_path / "card.pgm", img)
    assert run("synth-pair", "--image", tmp_path / "card.pgm", "--seed", 3, "--max-norm", 0.4,
               "-o", tmp_path / "pair") == 0
    assert run("diagnose", "--map", tmp_path / "pair_map.qcf", "--json") == 0
    assert json.loads(capsys.readouterr().out)["n_folded"] == 0
    assert run("register", "--moving", tmp_path / "card.pgm", "--fixed", tmp_path / "pair_moving.pgm",
               "--method", "lbfgs", "-o", tmp_path / "reg") == 0
    assert run("diagnose", "--map", tmp_path / "reg_map.qcf", "--json") == 0
    assert json.loads(capsys.readouterr().out)["n_folded"] == 0
    card = read_pgm(tmp_path / "card.pgm")
    target = read_pgm(tmp_path / "pair_moving.pgm")
    trace = json.loads((tmp_path / "reg_trace.json").read_text())["trace"]
    assert trace[0]["fidelity"] == pytest.approx(loss_fidelity(card, target))
    assert trace[-1]["fidelity"] <= 0.1 * trace[0]["fidelity"]


def test_synth_pair_validation(tmp_path):
    write_pgm(tmp_path / "c.pgm", make_test_card(8))
    assert run("synth-pair", "--image", tmp_path / "c.pgm", "--max-norm", 0, "-o", tmp_path / "p") == 2
    assert run("synth-pair", "--image", tmp_path / "c.pgm", "--bandwidth", 20, "-o", tmp_path / "p") == 2
