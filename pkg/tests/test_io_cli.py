import json

import numpy as np
import pytest

from conjplateau import cli, io
from conjplateau.pipeline import ConfigError, RunConfig, config_from_mapping, parse_config_file, validate


def test_to_jsonable_handles_numpy_and_nonfinite():
    rec = io.to_jsonable({"a": np.arange(3), "b": np.float64(np.inf), "c": np.bool_(True), 1: np.int64(4)})
    assert rec == {"a": [0, 1, 2], "b": "inf", "c": True, "1": 4}
    json.dumps(rec)


def test_obj_and_ply_roundtrip(tmp_path):
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.5]], float)
    F = np.array([[0, 1, 2]])
    obj = io.write_obj(tmp_path / "t.obj", V, F, comment="tri")
    lines = obj.read_text().splitlines()
    assert lines[0] == "# tri" and lines[-1] == "f 1 2 3"
    ply = io.write_ply(tmp_path / "t.ply", V, F, vertex_props={"h": [1, 2, 3]}, face_props={"c": [7]})
    text = ply.read_text()
    assert "element vertex 3" in text and "property double h" in text
    assert text.strip().splitlines()[-1] == "3 0 1 2 7"


def test_format_table():
    out = io.format_table([{"m": 2, "x": 0.5}, {"m": 10, "x": None}])
    assert out.splitlines()[0].split() == ["m", "x"]
    assert out.splitlines()[-1].split() == ["10", "-"]


def test_visual_coordinates():
    P = np.array([[0.0, 0.0, 1.0]])
    assert np.allclose(io.visual_coordinates(P, [1.0], 1), [[0, 0, np.e]])
    assert np.allclose(io.visual_coordinates(P, [0.3], -1), [[0, 0, 0.3]])


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# genus two\nm = 2\nk = 3\nH = 0.2, 0.3\nresolutions = 16 32\ntol.bisection = 1e-5\n")
    cfg = config_from_mapping(parse_config_file(p))
    assert (cfg.m, cfg.k) == (2, 3)
    assert cfg.H_list == [0.2, 0.3]
    assert cfg.resolutions == [16, 32]
    assert cfg.tolerances["bisection"] == 1e-5


def test_config_file_syntax_error(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("m 2\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)


@pytest.mark.parametrize("m,k,H", [(2, 3, 0.6), (4, 4, 0.3), (2, 2, 0.1)])
def test_validate_rejects(m, k, H):
    with pytest.raises(ConfigError):
        validate(config_from_mapping({"m": m, "k": k, "H": H}))


def test_cli_params(capsys):
    assert cli.main(["params", "--m", "2", "--k", "3", "--H", "0.3", "--json"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert "genus" in json.dumps(rec)


def test_cli_domain_errors():
    assert cli.main(["params", "--m", "2", "--k", "2"]) == 2
    assert cli.main(["build", "--m", "2", "--k", "3", "--H", "0.6"]) == 2


def test_cli_verify_closed_form(capsys):
    assert cli.main(["verify", "closed-form"]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 3


def test_cli_build(tmp_path):
    code = cli.main(["build", "--m", "3", "--k", "3", "--H", "0.8", "--n", "32",
                     "--out", str(tmp_path), "--formats", "obj", "ply", "json"])
    assert code == 0
    runs = list(tmp_path.rglob("run.json"))
    assert len(runs) == 1
    rec = json.loads(runs[0].read_text())
    assert rec
    assert list(tmp_path.rglob("*.ply"))


def test_export_keeps_dotted_stems(tmp_path):
    from conjplateau.io import _write_all
    from pathlib import Path

    paths = _write_all(Path(tmp_path) / "piece_H0.3", ["obj", "json"], np.eye(3), np.array([[0, 1, 2]]),
                       {}, {}, {}, "")
    assert sorted(p.name for p in paths) == ["piece_H0.3.json", "piece_H0.3.obj"]
