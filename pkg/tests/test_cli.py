import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from folia.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, main
from folia.formats import dumps, fmt_float
from folia.harmonic import read_folh

Z2M1 = {"numerator": [[-1, 0], [0, 0], [1, 0]]}


def run(tmp_path, command, manifest, *extra, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(manifest))
    out = tmp_path / f"out_{command}"
    return main([command, "--manifest", str(path), "--out", str(out), *extra]), out


def read_json(path):
    return json.loads(path.read_text())


def test_decompose(tmp_path):
    code, out = run(tmp_path, "decompose", {"differential": Z2M1})
    assert code == EXIT_OK
    sk = read_json(out / "skeleton.json")
    assert sk["strip_count"] == 1 and sk["half_plane_count"] == 4
    assert sk["strips"][0]["width"] == pytest.approx(1.5708, abs=1e-4)
    svg = (out / "skeleton.svg").read_text()
    assert svg.count("<path") > 4 and "half-planes" not in svg.split("<svg")[0]


def test_outputs_are_byte_stable(tmp_path):
    m = {"differential": Z2M1}
    _, a = run(tmp_path, "decompose", m)
    first = {p.name: p.read_bytes() for p in a.iterdir()}
    shutil.rmtree(a)
    _, b = run(tmp_path, "decompose", m)
    assert {p.name: p.read_bytes() for p in b.iterdir()} == first


def test_trace(tmp_path):
    code, out = run(tmp_path, "trace", {"differential": Z2M1, "params": {"start": [0, 0], "kind": "vertical"}})
    assert code == EXIT_OK
    data = read_json(out / "trajectory.json")
    assert data["termination"]["kind"] == "hit_zero"
    assert (out / "trajectory.csv").read_text().startswith("s,re,im\n")
    assert (out / "trajectory.svg").exists()


def test_residue_and_compat(tmp_path):
    code, out = run(tmp_path, "residue", {"differential": Z2M1, "params": {"pole": "inf"}})
    assert code == EXIT_OK
    r = read_json(out / "residue.json")
    assert r["residue"] == [0.5, 0] and r["agree"]
    code, out = run(tmp_path, "compat", {"differential": {"normal_form": {"n": 6, "a": [0.3, 0.1]}},
                                         "params": {"pole": [0, 0]}})
    assert code == EXIT_OK
    c = read_json(out / "compat.json")
    assert c["compatible"] and abs(c["alternating_sum"]) == pytest.approx(2 * math.pi * 0.3, rel=1e-2)
    code, out = run(tmp_path, "compat", {"differential": {"normal_form": {"n": 6, "a": 0.3}},
                                         "params": {"pole": [0, 0], "local_params": [5, 0, 1, 0]}})
    assert code == EXIT_OK and not read_json(out / "compat.json")["compatible"]


def test_tree(tmp_path):
    code, out = run(tmp_path, "tree", {"params": {"n": 5, "boundary_measure": 2.5, "lengths": [0.2, 0.3],
                                                  "a0": 0.4, "expansion": 3}})
    assert code == EXIT_OK
    t = read_json(out / "tree.json")
    assert len(t["rays"]) == 3 and len(t["edges"]) == 4 and t["parameter_dimension"] == 3
    assert (out / "tree.dot").read_text().startswith("graph")
    assert (out / "tree.svg").exists()


def test_solve(tmp_path):
    m = {"params": {"L": 4, "mode": "partially_free", "f_fixed": [[1, 1.0, 0.0]]}}
    code, out = run(tmp_path, "solve", m, "--resolution", "33,32", "--tol-solver", "1e-11")
    assert code == EXIT_OK
    s = read_json(out / "solve.json")
    assert (s["nx"], s["ntheta"]) == (33, 32) and s["residual"] <= 1e-11
    assert read_folh(out / "field.folh").shape == (33, 32)
    shutil.rmtree(out)
    m = {"params": {"L": 2, "mode": "dirichlet", "f_top": [[0, 1, 0]], "f_bottom": [[0, 1, 0]]}}
    code, out = run(tmp_path, "solve", m, "--resolution", "17,16", "--svg", "off")
    assert code == EXIT_OK and not (out / "field.svg").exists()


def test_decay_csv_matches_closed_form(tmp_path):
    m = {"params": {"f": [[1, 1.0, 0.0]], "L_values": [2, 4, 6, 8]}}
    code, out = run(tmp_path, "decay", m, "--resolution", "32,128")
    assert code == EXIT_OK
    lines = (out / "decay.csv").read_text().splitlines()
    assert lines[0] == "L,midline_max,ratio,dtheta_max,dtheta_ratio"
    for line in lines[1:]:
        L, mid = (float(v) for v in line.split(",")[:2])
        assert mid == pytest.approx(1 / math.cosh(L / 2), rel=1e-3)


def test_exhaust_and_shear(tmp_path):
    code, out = run(tmp_path, "exhaust", {"params": {"n": 6, "a": 0.3, "delta": 0.5, "i_values": [2, 4, 8]}},
                    "--resolution", "20,64")
    assert code == EXIT_OK
    assert (out / "exhaust.csv").read_text().startswith("i,modulus,boundary_max,free_sup")
    code, out = run(tmp_path, "shear", {"differential": Z2M1, "params": {"s": [1.7]}})
    assert code == EXIT_OK
    row = (out / "sheared.csv").read_text().splitlines()[1].split(",")
    assert float(row[1]) == pytest.approx(1.7, abs=1e-9) and float(row[2]) == pytest.approx(math.pi / 2)


def test_dims(capsys, tmp_path):
    assert main(["dims", "--g", "2", "--orders", "3"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out.splitlines()[0]) == {"chi": 10}
    code, out = run(tmp_path, "dims", {"params": {"g": 2, "orders": [3, 4, 5]}})
    assert code == EXIT_OK
    d = read_json(out / "dims.json")
    assert d["chi"] == 6 + 4 + 5 + 6 and d["identity_holds"] and d["total_parameter_count"] == 30


def test_differential_file_reference(tmp_path):
    (tmp_path / "q.json").write_text(json.dumps(Z2M1))
    code, _ = run(tmp_path, "decompose", {"differential": "q.json"})
    assert code == EXIT_OK


# error paths

def test_error_saddle_connection(tmp_path, capsys):
    code, _ = run(tmp_path, "decompose", {"differential": {"numerator": [0, -1, 0, 1]}})
    assert code == EXIT_DOMAIN
    assert "non-generic: saddle connection between zeros #" in capsys.readouterr().err


@pytest.mark.parametrize("command,manifest", [
    ("tree", {"params": {"n": 5, "boundary_measure": 0.1, "lengths": [0.2, 0.3], "a0": 0.5}}),
    ("tree", {"params": {"n": 5, "boundary_measure": 2.0, "expansion": 9}}),
    ("residue", {"differential": {"numerator": [1], "denominator": [0, 1]}, "params": {"pole": [0, 0]}}),
    ("shear", {"differential": Z2M1, "params": {"s": [1.0, 2.0]}}),
    ("exhaust", {"params": {"n": 6, "delta": 0.5, "i_values": [2, 3]}}),
    ("decay", {"params": {"f": [[0, 1, 0], [1, 1, 0]], "L_values": [2, 4]}}),
    ("compat", {"differential": {"normal_form": {"n": 6, "a": 0.3}}, "params": {"pole": [0, 0], "radius": 50}}),
    ("decompose", {"differential": {"normal_form": {"n": 6, "a": 0.3}}}),
])
def test_domain_errors(tmp_path, command, manifest):
    code, _ = run(tmp_path, command, manifest)
    assert code == EXIT_DOMAIN


@pytest.mark.parametrize("manifest", [
    {"differential": Z2M1, "bogus": 1},
    {"differential": Z2M1, "params": {"unknown": 1}},
    {"differential": {"numerator": "z^2"}},
    {"differential": Z2M1, "tolerances": {"quadrature": -1}},
    {"params": {}},
    {"differential": "missing.json"},
    {"params": {"g": 2, "orders": [2]}},
])
def test_schema_errors(tmp_path, manifest):
    code, _ = run(tmp_path, "decompose", manifest)
    assert code == EXIT_IO


def test_dims_domain_error_from_flags(capsys):
    assert main(["dims", "--g", "0", "--orders", "2"]) == EXIT_DOMAIN
    capsys.readouterr()


def test_io_errors(tmp_path, capsys):
    assert main(["decompose", "--manifest", str(tmp_path / "nope.json")]) == EXIT_IO
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["decompose", "--manifest", str(tmp_path / "bad.json")]) == EXIT_IO
    (tmp_path / "q.json").write_text("{not json")
    code, _ = run(tmp_path, "decompose", {"differential": "q.json"})
    assert code == EXIT_IO
    assert main(["decompose"]) == EXIT_IO
    assert main(["dims"]) == EXIT_IO
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    (tmp_path / "m.json").write_text(json.dumps({"differential": Z2M1}))
    assert main(["decompose", "--manifest", str(tmp_path / "m.json"), "--out", str(blocker / "x")]) == EXIT_IO
    code, _ = run(tmp_path, "solve", {"params": {"L": 2, "mode": "dirichlet"}})
    assert code == EXIT_IO
    code, _ = run(tmp_path, "solve", {"params": {"L": 2, "mode": "partially_free"}})
    assert code == EXIT_IO
    capsys.readouterr()


@pytest.mark.parametrize("argv", [["nope"], ["solve", "--resolution", "12"], ["decompose", "--svg", "maybe"], []])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == EXIT_IO


def test_console_script(tmp_path):
    exe = shutil.which("folia")
    if exe is None:
        pytest.skip("console script not installed")
    res = subprocess.run([exe, "dims", "--g", "2", "--orders", "3"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout.splitlines()[0]) == {"chi": 10}


def test_float_format():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert dumps({"a": [1.5, 2], "b": None, "c": 1 + 2j}) == '{\n  "a": [1.5, 2],\n  "b": null,\n  "c": [1, 2]\n}\n'
    for x in np.random.default_rng(0).standard_normal(50):
        assert float(fmt_float(x)) == x
    with pytest.raises(ValueError):
        fmt_float(float("nan"))
